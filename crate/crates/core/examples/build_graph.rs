//! Load assertions into a graph, inspect it and round-trip the binary cache.
//!
//! cargo run --example build_graph

use std::error::Error;
use std::path::Path;

use bridgepath::kg::{load_graph_file, Concept, GraphConfig, KnowledgeGraph};

fn main() -> Result<(), Box<dyn Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let graph = load_graph_file(&fixtures.join("assertions.tsv"), &GraphConfig::default())?;
    println!(
        "{} concepts, {} directed edges",
        graph.concept_count(),
        graph.edge_count()
    );
    println!("excluded relations: {:?}", graph.excluded_relations());

    let sand = Concept::new("sand")?;
    for (rel, tail) in graph.neighbors(&sand) {
        println!("  sand {rel} {tail}");
    }

    let mut cache = Vec::new();
    graph.write_cache(&mut cache)?;
    let back = KnowledgeGraph::read_cache(cache.as_slice())?;
    println!("cache: {} bytes, {} edges after reload", cache.len(), back.edge_count());
    Ok(())
}
