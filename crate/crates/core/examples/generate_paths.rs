//! Train the path model on sampled walks, then decode bridging paths with
//! and without a required entity.
//!
//! cargo run --release --example generate_paths

use std::error::Error;
use std::path::Path;

use bridgepath::kg::{load_graph_file, Concept, GraphConfig};
use bridgepath::pathlm::{
    generate_path, render_text, train_path_model, DecodeConfig, DecodeStrategy, RelationTemplateTable, TrainConfig,
};
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
    println!("vocabulary: {} tokens", model.vocabulary().len());

    let table = RelationTemplateTable::default();
    let (head, tail) = (Concept::new("garden")?, Concept::new("restaurant")?);
    let queries = [
        ("head-tail", vec![]),
        ("must contain best ingredients", vec![Concept::new("best_ingredients")?]),
    ];
    for (label, required) in queries {
        println!("{label}:");
        for strategy in [DecodeStrategy::Sample, DecodeStrategy::Beam] {
            let cfg = DecodeConfig {
                seed: 1,
                strategy,
                ..DecodeConfig::default()
            };
            for g in generate_path(&model, &head, &tail, &required, &cfg)? {
                println!("  {strategy:?} {:8.3}  {}", g.log_prob, render_text(&g.path, &table)?);
            }
        }
    }
    Ok(())
}
