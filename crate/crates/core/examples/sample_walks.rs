//! Sample seeded random walks and show the hop-length histogram.
//!
//! cargo run --example sample_walks -- [count] [seed]

use std::error::Error;
use std::path::Path;

use bridgepath::kg::{load_graph_file, GraphConfig};
use bridgepath::sampler::{sample_corpus, SamplerConfig};

fn main() -> Result<(), Box<dyn Error>> {
    let mut args = std::env::args().skip(1);
    let count = args.next().map_or(Ok(2000), |a| a.parse())?;
    let seed = args.next().map_or(Ok(7), |a| a.parse())?;
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let graph = load_graph_file(&fixtures.join("assertions.tsv"), &GraphConfig::default())?;

    let cfg = SamplerConfig {
        seed,
        count,
        ..SamplerConfig::default()
    };
    let corpus = sample_corpus(&graph, &cfg)?;
    for p in corpus.iter().take(5) {
        println!("{p}");
    }
    let mut hist = vec![0usize; cfg.max_hops + 1];
    for p in corpus.iter() {
        hist[p.hops()] += 1;
    }
    for (hops, n) in hist.iter().enumerate().skip(1) {
        println!("{hops} hops: {n}");
    }
    Ok(())
}
