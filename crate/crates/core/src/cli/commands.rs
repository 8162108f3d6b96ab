use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::manifest::{sibling, write_atomic, RunManifest};
use super::settings::Settings;
use super::{steer, usage, CliError, Command, Ctx, DecodeArgs, ExtractionArgs};
use crate::augment::{augment_records, AugmentConfig, DialogueRecord};
use crate::entities::{build_idf, CommandTagger, ConceptVocab, Extractor, IdfTable, LexiconTagger, Phase, Tagger};
use crate::evalkit::{
    bias_probe, clean_test_set, probe_table, ratings_correlation, read_ratings, write_tsv, Bleu, CorpusMetric,
    EvalInstance, OverlapDenominator, RougeL,
};
use crate::kg::{load_graph_file, Concept, GraphConfig, KnowledgeGraph};
use crate::pathlm::{
    generate_path, render_text, serve_protocol, DecodeConfig, DecodeStrategy, ExternalGenerator, PathGenerator,
    PathModel, RelationTemplateTable, TrainConfig, TrainFormat,
};
use crate::pipeline::{FilterConfig, FilterOrder, GoldMatch, Pipeline, PipelineConfig, TransitionInstance};
use crate::sampler::{read_corpus, sample_corpus, SamplerConfig, StartDistribution};
use crate::scorer::{CommandScorer, Scorer};
use crate::seed::derive_seed;
use crate::tcmetric::{
    balance, synthesize_negatives, CommandGenerator, Mechanism, ReferenceScorer, ResponseGenerator, SynthConfig,
};

pub(super) fn execute(command: Command, ctx: &mut Ctx<'_>) -> Result<(), CliError> {
    match command {
        Command::Ingest(a) => ingest(a, ctx),
        Command::SamplePaths(a) => sample_paths(a, ctx),
        Command::BuildIdf(a) => build_idf_cmd(a, ctx),
        Command::TrainPathlm(a) => train(a, ctx),
        Command::GenPath(a) => gen_path(a, ctx),
        Command::PrepCrg(a) => prep_crg(a, ctx),
        Command::Augment(a) => augment(a, ctx),
        Command::SynthTc(a) => synth_tc(a, ctx),
        Command::Eval(a) => eval(a, ctx),
        Command::Probe(a) => probe(a, ctx),
        Command::Clean(a) => clean(a, ctx),
        Command::Steer(a) => steer::run(a, ctx),
        Command::Replay(_) => unreachable!("replay is handled before settings load"),
    }
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

pub(super) fn read_jsonl<T: DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> anyhow::Result<()> {
    write_atomic(path, |w| {
        for item in items {
            serde_json::to_writer(&mut *w, item)?;
            writeln!(w)?;
        }
        Ok(())
    })
}

fn split_cmd(cmd: &str) -> Result<(String, Vec<String>), CliError> {
    let mut parts = shlex::split(cmd).ok_or_else(|| usage(format!("cannot parse command `{cmd}`")))?;
    if parts.is_empty() {
        return Err(usage("empty command"));
    }
    let program = parts.remove(0);
    Ok((program, parts))
}

pub(super) fn load_graph_cache(path: &Path) -> anyhow::Result<KnowledgeGraph> {
    KnowledgeGraph::read_cache(open(path)?)
        .with_context(|| format!("{} is not a graph cache (create one with `ingest`)", path.display()))
}

pub(super) fn load_model(path: &Path) -> anyhow::Result<PathModel> {
    PathModel::load(path).with_context(|| format!("loading path model {}", path.display()))
}

pub(super) fn load_idf(path: &Path) -> anyhow::Result<IdfTable> {
    IdfTable::read_tsv(open(path)?).with_context(|| format!("reading {}", path.display()))
}

pub(super) fn templates(
    s: &Settings,
    flag: Option<PathBuf>,
    ctx_inputs: &mut Vec<PathBuf>,
) -> Result<RelationTemplateTable, CliError> {
    match s.opt(flag, "templates")? {
        Some(p) => {
            ctx_inputs.push(p.clone());
            Ok(RelationTemplateTable::from_file_over_defaults(&p)
                .with_context(|| format!("reading {}", p.display()))?)
        }
        None => Ok(RelationTemplateTable::default()),
    }
}

pub(super) fn decode_config(s: &Settings, a: DecodeArgs, seed: u64) -> Result<DecodeConfig, CliError> {
    let d = DecodeConfig::default();
    let cfg = DecodeConfig {
        temperature: s.pick(a.temperature, "temperature", d.temperature)?,
        top_p: s.pick(a.top_p, "top-p", d.top_p)?,
        beam_width: s.pick(a.beam_width, "beam-width", d.beam_width)?,
        max_len: s.pick(a.max_len, "max-len", d.max_len)?,
        num_samples: s.pick(a.num_samples, "num-samples", d.num_samples)?,
        max_hops: s.pick(a.max_hops, "max-hops", d.max_hops)?,
        strategy: s.pick(a.strategy, "strategy", DecodeStrategy::default())?,
        seed,
        ..d
    };
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

pub(super) struct Extraction {
    pub tagger: Box<dyn Tagger>,
    pub vocab_graph: Option<KnowledgeGraph>,
}

pub(super) fn extraction(s: &Settings, a: ExtractionArgs, inputs: &mut Vec<PathBuf>) -> Result<Extraction, CliError> {
    let tagger: Box<dyn Tagger> = match s.opt(a.tagger_cmd, "tagger-cmd")? {
        Some(cmd) => {
            let (program, args) = split_cmd(&cmd)?;
            Box::new(CommandTagger { program, args })
        }
        None => {
            let mut t = LexiconTagger::default();
            if let Some(p) = s.opt(a.lexicon, "lexicon")? {
                t.extend_from_reader(open(&p)?)
                    .with_context(|| format!("reading {}", p.display()))?;
                inputs.push(p);
            }
            Box::new(t)
        }
    };
    let vocab_graph = match s.opt(a.vocab_graph, "vocab-graph")? {
        Some(p) => {
            let g = load_graph_cache(&p)?;
            inputs.push(p);
            Some(g)
        }
        None => None,
    };
    Ok(Extraction { tagger, vocab_graph })
}

fn ingest(a: super::IngestArgs, ctx: &mut Ctx<'_>) -> Result<(), CliError> {
    let s = &ctx.settings;
    let assertions: PathBuf = s.require(a.assertions, "assertions")?;
    let out: PathBuf = s.require(a.out, "out")?;
    let mut cfg = GraphConfig::default();
    if let Some(p) = s.opt(a.exclude_file, "exclude-file")? {
        cfg = cfg
            .with_exclusion_file(&p)
            .with_context(|| format!("reading {}", p.display()))?;
        ctx.record.inputs.push(p);
    }
    cfg.synthesize_inverses = !s.switch(a.no_inverses, "no-inverses")?;
    let g = load_graph_file(&assertions, &cfg).with_context(|| format!("loading {}", assertions.display()))?;
    write_atomic(&out, |w| Ok(g.write_cache(w)?))?;
    log::info!("{} concepts, {} directed edges", g.concept_count(), g.edge_count());
    ctx.record.inputs.push(assertions);
    ctx.record.outputs.push(out);
    Ok(())
}

fn sample_paths(a: super::SampleArgs, ctx: &mut Ctx<'_>) -> Result<(), CliError> {
    let s = &ctx.settings;
    let graph_path: PathBuf = s.require(a.graph, "graph")?;
    let out: PathBuf = s.require(a.out, "out")?;
    let seed: u64 = s.require(a.seed, "seed")?;
    let cfg = SamplerConfig {
        max_hops: s.pick(a.max_hops, "max-hops", 6)?,
        seed,
        count: s.require(a.count, "count")?,
        allow_immediate_backtrack: s.switch(a.allow_backtrack, "allow-backtrack")?,
        start: s.pick(a.start, "start", StartDistribution::Uniform)?,
        workers: ctx.workers,
    };
    cfg.validate().map_err(usage)?;
    let g = load_graph_cache(&graph_path)?;
    let corpus = sample_corpus(&g, &cfg)?;
    write_atomic(&out, |w| Ok(corpus.write_lines(w)?))?;
    log::info!("{} paths", corpus.len());
    ctx.record.seed = Some(seed);
    ctx.record.inputs.push(graph_path);
    ctx.record.outputs.push(out);
    Ok(())
}

fn instance_texts(inst: &TransitionInstance) -> Vec<String> {
    let mut out = inst.context.clone();
    out.push(inst.target.clone());
    out.extend(inst.response.clone());
    out
}

fn build_idf_cmd(a: super::IdfArgs, ctx: &mut Ctx<'_>) -> Result<(), CliError> {
    let s = &ctx.settings;
    let docs_path: Option<PathBuf> = s.opt(a.docs, "docs")?;
    let inst_path: Option<PathBuf> = s.opt(a.instances, "instances")?;
    let out: PathBuf = s.require(a.out, "out")?;
    if docs_path.is_none() && inst_path.is_none() {
        return Err(usage("build-idf needs --docs or --instances"));
    }
    let mut docs: Vec<String> = Vec::new();
    if let Some(p) = &docs_path {
        for line in open(p)?.lines() {
            let line = line?;
            if !line.trim().is_empty() {
                docs.push(line);
            }
        }
    }
    if let Some(p) = &inst_path {
        for inst in read_jsonl::<TransitionInstance>(p)? {
            docs.extend(instance_texts(&inst));
        }
    }
    let idf = build_idf(&docs)?;
    write_atomic(&out, |w| Ok(idf.write_tsv(w)?))?;
    ctx.record.inputs.extend(docs_path.into_iter().chain(inst_path));
    ctx.record.outputs.push(out);
    Ok(())
}

fn train(a: super::TrainArgs, ctx: &mut Ctx<'_>) -> Result<(), CliError> {
    let s = &ctx.settings;
    let paths_file: PathBuf = s.require(a.paths, "paths")?;
    let out: PathBuf = s.require(a.out, "out")?;
    let seed: u64 = s.require(a.seed, "seed")?;
    let cfg = TrainConfig {
        order: s.pick(a.order, "order", 3)?,
        smoothing: s.pick(a.smoothing, "smoothing", 0.01)?,
        seed,
        format: s.pick(a.format, "format", TrainFormat::Both)?,
    };
    cfg.validate().map_err(usage)?;
    let paths = read_corpus(open(&paths_file)?).with_context(|| format!("reading {}", paths_file.display()))?;
    let model = crate::pathlm::train_path_model(&paths, &cfg)?;
    write_atomic(&out, |w| Ok(model.write_json(w)?))?;
    log::info!("{} paths, vocabulary {}", paths.len(), model.vocab_size());
    ctx.record.seed = Some(seed);
    ctx.record.inputs.push(paths_file);
    ctx.record.outputs.push(out);
    Ok(())
}

fn concept(text: &str) -> Result<Concept, CliError> {
    Concept::new(text).map_err(|e| usage(format!("`{text}`: {e}")))
}

fn gen_path(a: super::GenArgs, ctx: &mut Ctx<'_>) -> Result<(), CliError> {
    let s = &ctx.settings;
    let model_path: PathBuf = s.require(a.model, "model")?;
    let serve = s.switch(a.serve, "serve")?;
    // A server takes its seed per query from the caller's environment.
    let env_seed = serve
        .then(|| std::env::var("BRIDGEPATH_SEED").ok().and_then(|v| v.parse().ok()))
        .flatten();
    let seed: u64 = match env_seed {
        Some(v) => s.pick(a.seed, "seed", v)?,
        None => s.require(a.seed, "seed")?,
    };
    let cfg = decode_config(s, a.decode, seed)?;
    let model = load_model(&model_path)?;
    ctx.record.inputs.push(model_path);
    ctx.record.seed = Some(seed);
    if serve {
        let cfg = DecodeConfig {
            seed: env_seed.unwrap_or(seed),
            num_samples: std::env::var("BRIDGEPATH_NUM_SAMPLES")
                .ok()
                .and_then(|v| v.parse().ok())
                .unwrap_or(cfg.num_samples),
            ..cfg
        };
        serve_protocol(&model, &mut *ctx.input, &mut *ctx.output, &cfg)?;
        return Ok(());
    }
    let head = concept(&s.require::<String>(a.head, "head")?)?;
    let tail = concept(&s.require::<String>(a.tail, "tail")?)?;
    let required_raw: Vec<String> = s.pick((!a.require.is_empty()).then_some(a.require), "require", Vec::new())?;
    let required = required_raw.iter().map(|r| concept(r)).collect::<Result<Vec<_>, _>>()?;
    let table = templates(s, a.templates, &mut ctx.record.inputs)?;
    let out: Option<PathBuf> = s.opt(a.out, "out")?;
    let found = generate_path(&model, &head, &tail, &required, &cfg)?;
    let mut lines = Vec::with_capacity(found.len());
    for g in &found {
        lines.push(format!(
            "{:.6}\t{}\t{}",
            g.log_prob,
            g.path,
            render_text(&g.path, &table)?
        ));
    }
    match out {
        Some(p) => {
            write_atomic(&p, |w| {
                for l in &lines {
                    writeln!(w, "{l}")?;
                }
                Ok(())
            })?;
            ctx.record.outputs.push(p);
        }
        None => {
            for l in &lines {
                writeln!(ctx.output, "{l}").map_err(anyhow::Error::from)?;
            }
        }
    }
    Ok(())
}

fn prep_crg(a: super::PrepArgs, ctx: &mut Ctx<'_>) -> Result<(), CliError> {
    let s = &ctx.settings;
    let inst_path: PathBuf = s.require(a.instances, "instances")?;
    let out: PathBuf = s.require(a.out, "out")?;
    let idf_path: PathBuf = s.require(a.idf, "idf")?;
    let seed: u64 = s.require(a.seed, "seed")?;
    let phase: Phase = s.pick(a.phase, "phase", Phase::Train)?;
    let model_path: Option<PathBuf> = s.opt(a.model, "model")?;
    let generator_cmd: Option<String> = s.opt(a.generator_cmd, "generator-cmd")?;
    let skip_log: PathBuf = s.pick(a.skip_log, "skip-log", sibling(&out, ".skipped.jsonl"))?;
    let defaults = PipelineConfig::default();
    let config = PipelineConfig {
        q: s.pick(a.q, "q", defaults.q)?,
        d: s.pick(a.d, "d", defaults.d)?,
        filter: FilterConfig {
            perplexity_factor: s.pick(
                a.perplexity_factor,
                "perplexity-factor",
                defaults.filter.perplexity_factor,
            )?,
            order: s.pick(a.filter_order, "filter-order", FilterOrder::default())?,
            gold_match: s.pick(a.gold_match, "gold-match", GoldMatch::default())?,
        },
        decode: decode_config(s, a.decode, seed)?,
        seed,
        relax: !s.switch(a.no_relax, "no-relax")?,
    };
    config.validate().map_err(usage)?;
    let table = templates(s, a.templates, &mut ctx.record.inputs)?;
    let ex = extraction(s, a.extraction, &mut ctx.record.inputs)?;
    let model = match &model_path {
        Some(p) => Some(load_model(p)?),
        None => None,
    };
    let generator: Box<dyn PathGenerator> = match (generator_cmd, model.clone()) {
        (Some(cmd), m) => {
            let (program, args) = split_cmd(&cmd)?;
            let g = ExternalGenerator::new(program, args);
            Box::new(match m {
                Some(m) => g.with_scorer(m),
                None => g,
            })
        }
        (None, Some(m)) => Box::new(m),
        (None, None) => return Err(usage("prep-crg needs --model or --generator-cmd")),
    };
    let vocab: Option<&(dyn ConceptVocab + Sync)> = match (&ex.vocab_graph, &model) {
        (Some(g), _) => Some(g),
        (None, Some(m)) => Some(m),
        (None, None) => None,
    };
    let idf = load_idf(&idf_path)?;
    let instances: Vec<TransitionInstance> = read_jsonl(&inst_path)?;
    let pipeline = Pipeline {
        generator: generator.as_ref(),
        tagger: ex.tagger.as_ref(),
        extractor: Extractor::default(),
        idf: &idf,
        vocab,
        templates: &table,
        config,
    };
    let result = pipeline.run_batch(&instances, phase, ctx.workers);
    write_jsonl(&out, &result.records)?;
    write_jsonl(&skip_log, &result.skipped)?;
    log::info!(
        "{} instances: {} records, {} skipped",
        instances.len(),
        result.records.len(),
        result.skipped.len()
    );
    ctx.record.seed = Some(seed);
    ctx.record.inputs.extend([inst_path, idf_path]);
    ctx.record.inputs.extend(model_path);
    ctx.record.outputs.extend([out, skip_log]);
    Ok(())
}

fn scorer_from(cmd: Option<String>) -> Result<Box<dyn Scorer>, CliError> {
    Ok(match cmd {
        Some(c) => {
            let (program, args) = split_cmd(&c)?;
            Box::new(CommandScorer::new(program, args))
        }
        None => Box::new(ReferenceScorer),
    })
}

fn augment(a: super::AugmentArgs, ctx: &mut Ctx<'_>) -> Result<(), CliError> {
    let s = &ctx.settings;
    let input: PathBuf = s.require(a.dialogues, "dialogues")?;
    let out: PathBuf = s.require(a.out, "out")?;
    let defaults = AugmentConfig::default();
    let cfg = AugmentConfig {
        threshold: s.pick(a.threshold, "threshold", defaults.threshold)?,
        max_history: s.pick(a.max_history, "max-history", defaults.max_history)?,
    };
    cfg.validate().map_err(usage)?;
    let scorer = scorer_from(s.opt(a.scorer_cmd, "scorer-cmd")?)?;
    let records: Vec<DialogueRecord> = read_jsonl(&input)?;
    let result = augment_records(&records, scorer.as_ref(), &cfg);
    let skip_log = sibling(&out, ".skipped.jsonl");
    let score_log = sibling(&out, ".scores.jsonl");
    write_jsonl(&out, &result.kept)?;
    write_jsonl(&skip_log, &result.skipped)?;
    write_jsonl(&score_log, &result.scores)?;
    log::info!(
        "{} records: {} kept, {} skipped",
        records.len(),
        result.kept.len(),
        result.skipped.len()
    );
    ctx.record.inputs.push(input);
    ctx.record.outputs.extend([out, skip_log, score_log]);
    Ok(())
}

fn synth_tc(a: super::SynthArgs, ctx: &mut Ctx<'_>) -> Result<(), CliError> {
    let s = &ctx.settings;
    let input: PathBuf = s.require(a.instances, "instances")?;
    let out: PathBuf = s.require(a.out, "out")?;
    let seed: u64 = s.require(a.seed, "seed")?;
    let defaults = SynthConfig::default();
    let mechanisms: Vec<Mechanism> = s.pick(
        (!a.mechanisms.is_empty()).then_some(a.mechanisms),
        "mechanisms",
        defaults.mechanisms,
    )?;
    let cfg = SynthConfig {
        max_per_mechanism: s.pick(a.max_per_mechanism, "max-per-mechanism", defaults.max_per_mechanism)?,
        seed,
        mechanisms,
    };
    let generator: Option<Box<dyn ResponseGenerator>> = match s.opt(a.generator_cmd, "generator-cmd")? {
        Some(c) => {
            let (program, args) = split_cmd(&c)?;
            Some(Box::new(CommandGenerator { program, args }))
        }
        None => None,
    };
    let no_balance = s.switch(a.no_balance, "no-balance")?;
    let data: Vec<TransitionInstance> = read_jsonl(&input)?;
    let labeled = synthesize_negatives(&data, generator.as_deref(), &cfg)?;
    let rows = if no_balance {
        labeled
    } else {
        balance(&labeled, derive_seed(seed, u64::MAX))?
    };
    write_jsonl(&out, &rows)?;
    ctx.record.seed = Some(seed);
    ctx.record.inputs.push(input);
    ctx.record.outputs.push(out);
    Ok(())
}

fn eval(a: super::EvalArgs, ctx: &mut Ctx<'_>) -> Result<(), CliError> {
    let s = &ctx.settings;
    let input: PathBuf = s.require(a.input, "input")?;
    let out: PathBuf = s.require(a.out, "out")?;
    let scorer = scorer_from(s.opt(a.scorer_cmd, "scorer-cmd")?)?;
    let ratings: Option<PathBuf> = s.opt(a.ratings, "ratings")?;
    let data: Vec<EvalInstance> = read_jsonl(&input)?;
    let corpus: Vec<(String, Vec<String>)> = data
        .iter()
        .map(|e| (e.hypothesis.clone(), e.references.clone()))
        .collect();
    let mut rows = vec![
        vec!["BLEU".to_string(), format!("{:.6}", Bleu.corpus_score(&corpus)?)],
        vec!["ROUGE-L".to_string(), format!("{:.6}", RougeL.corpus_score(&corpus)?)],
    ];
    let triples: Vec<(String, String, String)> = data
        .iter()
        .map(|e| (e.context.clone(), e.hypothesis.clone(), e.target.clone()))
        .collect();
    let scores = scorer.score_batch(&triples);
    let mut total = 0.0;
    for (i, sc) in scores.into_iter().enumerate() {
        total += sc.with_context(|| format!("scoring instance {i}"))?;
    }
    rows.push(vec![
        "TARGET-COHERENCE".to_string(),
        format!("{:.6}", total / data.len() as f64),
    ]);
    if let Some(p) = &ratings {
        let r = read_ratings(File::open(p).with_context(|| format!("opening {}", p.display()))?)?;
        rows.push(vec!["SPEARMAN".to_string(), format!("{:.6}", ratings_correlation(&r)?)]);
    }
    write_atomic(&out, |w| Ok(write_tsv(w, &["metric", "score"], &rows)?))?;
    ctx.record.inputs.push(input);
    ctx.record.inputs.extend(ratings);
    ctx.record.outputs.push(out);
    Ok(())
}

fn probe(a: super::ProbeArgs, ctx: &mut Ctx<'_>) -> Result<(), CliError> {
    let s = &ctx.settings;
    let input: PathBuf = s.require(a.input, "input")?;
    let out: PathBuf = s.require(a.out, "out")?;
    let names: Vec<String> = s.pick(
        (!a.metrics.is_empty()).then_some(a.metrics),
        "metrics",
        vec!["bleu".to_string(), "rouge-l".to_string()],
    )?;
    let mut metrics: Vec<Box<dyn CorpusMetric>> = Vec::new();
    for n in &names {
        metrics.push(match n.as_str() {
            "bleu" => Box::new(Bleu),
            "rouge-l" => Box::new(RougeL),
            other => return Err(usage(format!("unknown metric `{other}` (bleu, rouge-l)"))),
        });
    }
    let data: Vec<EvalInstance> = read_jsonl(&input)?;
    let mut reports = Vec::new();
    for m in &metrics {
        reports.push(bias_probe(&data, m.as_ref())?);
    }
    if let Some(r) = reports.first() {
        if !r.target_copied_into_reference.is_empty() {
            log::warn!(
                "{} instance(s) have the target copied into a reference: {:?}",
                r.target_copied_into_reference.len(),
                r.target_copied_into_reference
            );
        }
    }
    write_atomic(&out, |w| {
        Ok(write_tsv(w, &["metric", "condition", "score"], &probe_table(&reports))?)
    })?;
    ctx.record.inputs.push(input);
    ctx.record.outputs.push(out);
    Ok(())
}

fn clean(a: super::CleanArgs, ctx: &mut Ctx<'_>) -> Result<(), CliError> {
    let s = &ctx.settings;
    let input: PathBuf = s.require(a.instances, "instances")?;
    let out: PathBuf = s.require(a.out, "out")?;
    let threshold: f64 = s.pick(a.threshold, "threshold", 0.75)?;
    let denominator = s.pick(a.denominator, "denominator", OverlapDenominator::Target)?;
    let data: Vec<TransitionInstance> = read_jsonl(&input)?;
    let kept = clean_test_set(&data, threshold, denominator)?;
    log::info!("kept {} of {}", kept.len(), data.len());
    write_jsonl(&out, &kept)?;
    ctx.record.inputs.push(input);
    ctx.record.outputs.push(out);
    Ok(())
}

pub(super) fn replay(path: &Path, input: &mut dyn BufRead, output: &mut dyn Write) -> Result<(), CliError> {
    let m = RunManifest::read(path)?;
    if m.subcommand == "replay" {
        return Err(usage("a replay manifest cannot be replayed"));
    }
    if m.cwd.is_dir() {
        std::env::set_current_dir(&m.cwd).with_context(|| format!("entering {}", m.cwd.display()))?;
    }
    let mut argv = vec!["bridgepath".to_string()];
    argv.extend(m.argv.iter().cloned());
    let mut err = Vec::new();
    let code = if m.stdin.is_empty() {
        super::dispatch_io(argv, input, output, &mut err)
    } else {
        let mut recorded = std::io::Cursor::new(m.stdin.join("\n") + "\n");
        super::dispatch_io(argv, &mut recorded, output, &mut err)
    };
    if code != super::EXIT_OK {
        return Err(anyhow::anyhow!(
            "replayed command failed ({code}): {}",
            String::from_utf8_lossy(&err).trim()
        )
        .into());
    }
    Ok(())
}
