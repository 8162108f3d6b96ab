//! Interactive keyword steering.
//!
//! For each instance: show context and target, read a keyword, generate
//! paths that must pass through it, list the rendered candidates, read a
//! choice and print the CRG conditioning sequence. Input is read only from
//! the session's stdin and goes nowhere but the path generator.

use std::path::PathBuf;

use anyhow::Context as _;

use super::commands::{decode_config, extraction, load_idf, load_model, read_jsonl, templates};
use super::manifest::write_atomic;
use super::{usage, CliError, Ctx, SteerArgs};
use crate::entities::{ConceptVocab, Extractor};
use crate::kg::Concept;
use crate::pathlm::render_text;
use crate::pipeline::{assemble_crg_sequence, CrgRecord, Pipeline, PipelineConfig, TransitionInstance};
use crate::seed::derive_seed;

/// Reads one line, recording it for replay. `None` at end of input.
fn prompt(ctx: &mut Ctx<'_>, text: &str) -> anyhow::Result<Option<String>> {
    write!(ctx.output, "{text}")?;
    ctx.output.flush()?;
    let mut line = String::new();
    if ctx.input.read_line(&mut line)? == 0 {
        writeln!(ctx.output)?;
        return Ok(None);
    }
    let line = line.trim_end_matches(['\n', '\r']).to_string();
    ctx.record.stdin.push(line.clone());
    Ok(Some(line))
}

enum Step {
    Chosen(CrgRecord),
    Skip,
    Quit,
}

fn steer_one(ctx: &mut Ctx<'_>, pipeline: &Pipeline<'_>, inst: &TransitionInstance, seed: u64) -> anyhow::Result<Step> {
    writeln!(ctx.output, "context: {}", inst.context.join(" | "))?;
    writeln!(ctx.output, "target:  {}", inst.target)?;
    let pair = match pipeline.best_pair(&inst.context, &inst.target) {
        Ok(p) => p,
        Err(e) => {
            writeln!(ctx.output, "skipped: {e}")?;
            return Ok(Step::Skip);
        }
    };
    writeln!(
        ctx.output,
        "bridging {} -> {}",
        pair.head.display_text(),
        pair.tail.display_text()
    )?;
    loop {
        let Some(keyword) = prompt(ctx, "keyword (blank for none, :skip, :quit)> ")? else {
            return Ok(Step::Quit);
        };
        let keyword = keyword.trim();
        match keyword {
            ":quit" => return Ok(Step::Quit),
            ":skip" => return Ok(Step::Skip),
            _ => {}
        }
        let required: Vec<Concept> = if keyword.is_empty() {
            Vec::new()
        } else {
            match Concept::new(keyword) {
                Ok(c) => vec![c],
                Err(e) => {
                    writeln!(ctx.output, "bad keyword: {e}")?;
                    continue;
                }
            }
        };
        let candidates = match pipeline.candidates_for_pair(&pair, &required, seed) {
            Ok(c) if !c.is_empty() => c,
            Ok(_) => {
                writeln!(ctx.output, "no path survived filtering; try another keyword")?;
                continue;
            }
            Err(e) => {
                writeln!(ctx.output, "no path: {e}; try another keyword")?;
                continue;
            }
        };
        let mut texts = Vec::with_capacity(candidates.len());
        for (i, c) in candidates.iter().enumerate() {
            let text = render_text(&c.path, pipeline.templates)?;
            writeln!(
                ctx.output,
                "  {}. {}    [{}] ppl={:.3}",
                i + 1,
                text,
                c.path,
                c.perplexity
            )?;
            texts.push(text);
        }
        let choice = loop {
            let Some(answer) = prompt(ctx, &format!("pick 1-{} (blank for another keyword)> ", texts.len()))? else {
                return Ok(Step::Quit);
            };
            let answer = answer.trim();
            if answer.is_empty() {
                break None;
            }
            match answer.parse::<usize>() {
                Ok(n) if (1..=texts.len()).contains(&n) => break Some(n - 1),
                _ => writeln!(ctx.output, "enter a number from 1 to {}", texts.len())?,
            }
        };
        let Some(i) = choice else { continue };
        let crg = assemble_crg_sequence(&texts[i], &inst.target, &inst.context, None);
        writeln!(ctx.output, "{crg}")?;
        return Ok(Step::Chosen(CrgRecord {
            context: inst.context.clone(),
            target: inst.target.clone(),
            response: inst.response.clone(),
            path: candidates[i].path.to_line(),
            path_text: texts[i].clone(),
            perplexity: candidates[i].perplexity,
            crg_sequence: crg,
        }));
    }
}

pub(super) fn run(a: SteerArgs, ctx: &mut Ctx<'_>) -> Result<(), CliError> {
    let s = &ctx.settings;
    let model_path: PathBuf = s.require(a.model, "model")?;
    let idf_path: PathBuf = s.require(a.idf, "idf")?;
    let seed: u64 = s.require(a.seed, "seed")?;
    let inst_path: Option<PathBuf> = s.opt(a.instances, "instances")?;
    let target: Option<String> = s.opt(a.target, "target")?;
    let out: Option<PathBuf> = s.opt(a.out, "out")?;
    let instances: Vec<TransitionInstance> = match (&inst_path, target) {
        (Some(p), None) if a.context.is_empty() => read_jsonl(p)?,
        (None, Some(t)) if !a.context.is_empty() => vec![TransitionInstance {
            context: a.context.clone(),
            target: t,
            response: None,
        }],
        _ => return Err(usage("steer needs either --instances or --context with --target")),
    };
    let decode = decode_config(s, a.decode, seed)?;
    let config = PipelineConfig {
        decode,
        seed,
        ..PipelineConfig::default()
    };
    let table = templates(s, a.templates, &mut ctx.record.inputs)?;
    let ex = extraction(s, a.extraction, &mut ctx.record.inputs)?;
    let model = load_model(&model_path)?;
    let idf = load_idf(&idf_path)?;
    let vocab: &(dyn ConceptVocab + Sync) = match &ex.vocab_graph {
        Some(g) => g,
        None => &model,
    };
    let pipeline = Pipeline {
        generator: &model,
        tagger: ex.tagger.as_ref(),
        extractor: Extractor::default(),
        idf: &idf,
        vocab: Some(vocab),
        templates: &table,
        config,
    };
    let mut chosen = Vec::new();
    for (i, inst) in instances.iter().enumerate() {
        inst.validate().map_err(|e| usage(format!("instance {i}: {e}")))?;
        match steer_one(ctx, &pipeline, inst, derive_seed(seed, i as u64))? {
            Step::Chosen(r) => chosen.push(r),
            Step::Skip => {}
            Step::Quit => break,
        }
    }
    ctx.record.seed = Some(seed);
    ctx.record.inputs.push(model_path);
    ctx.record.inputs.push(idf_path);
    ctx.record.inputs.extend(inst_path);
    if let Some(p) = out {
        write_atomic(&p, |w| {
            for r in &chosen {
                serde_json::to_writer(&mut *w, r)?;
                writeln!(w)?;
            }
            Ok(())
        })
        .with_context(|| format!("writing {}", p.display()))?;
        ctx.record.outputs.push(p);
    }
    Ok(())
}
