//! Build CRG training and inference records from transition instances.
//!
//! cargo run --release --example crg_pipeline

use std::error::Error;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use bridgepath::entities::{build_idf, Extractor, LexiconTagger, Phase};
use bridgepath::kg::{load_graph_file, GraphConfig};
use bridgepath::pathlm::{train_path_model, RelationTemplateTable, TrainConfig};
use bridgepath::pipeline::{Pipeline, PipelineConfig, TransitionInstance};
use bridgepath::sampler::{sample_corpus, SamplerConfig};

fn main() -> Result<(), Box<dyn Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let graph = load_graph_file(&fixtures.join("assertions.tsv"), &GraphConfig::default())?;
    let walks = sample_corpus(
        &graph,
        &SamplerConfig {
            seed: 7,
            count: 10_000,
            max_hops: 4,
            ..SamplerConfig::default()
        },
    )?
    .to_paths();
    let model = train_path_model(
        &walks,
        &TrainConfig {
            order: 5,
            ..TrainConfig::default()
        },
    )?;

    let mut instances = Vec::new();
    for line in BufReader::new(File::open(fixtures.join("instances.jsonl"))?).lines() {
        instances.push(serde_json::from_str::<TransitionInstance>(&line?)?);
    }
    let idf = build_idf(instances.iter().flat_map(|i| i.context.iter().chain([&i.target])))?;
    let mut tagger = LexiconTagger::default();
    tagger.extend_from_reader(BufReader::new(File::open(fixtures.join("lexicon.tsv"))?))?;
    let templates = RelationTemplateTable::default();

    let pipeline = Pipeline {
        generator: &model,
        tagger: &tagger,
        extractor: Extractor::default(),
        idf: &idf,
        vocab: Some(&graph),
        templates: &templates,
        config: PipelineConfig {
            seed: 7,
            q: 5,
            d: 2,
            ..PipelineConfig::default()
        },
    };
    for phase in [Phase::Train, Phase::Infer] {
        let out = pipeline.run_batch(&instances, phase, 1);
        println!(
            "{phase:?}: {} records, {} skipped",
            out.records.len(),
            out.skipped.len()
        );
        for r in out.records.iter().take(3) {
            println!("  {}", r.crg_sequence);
        }
        for s in out.skipped.iter().take(2) {
            println!("  skipped #{}: {}", s.index, s.reason);
        }
    }
    Ok(())
}
