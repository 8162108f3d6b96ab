//! Extract entities from a context and target, then rank head-tail pairs
//! by IDF.
//!
//! cargo run --example entity_pairs

use std::error::Error;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use bridgepath::entities::{build_idf, score_pairs, EntitySource, Extractor, LexiconTagger, Tagger};
use bridgepath::kg::{load_graph_file, GraphConfig};
use bridgepath::pipeline::TransitionInstance;

fn main() -> Result<(), Box<dyn Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let graph = load_graph_file(&fixtures.join("assertions.tsv"), &GraphConfig::default())?;
    let mut tagger = LexiconTagger::default();
    tagger.extend_from_reader(BufReader::new(File::open(fixtures.join("lexicon.tsv"))?))?;

    let mut instances = Vec::new();
    for line in BufReader::new(File::open(fixtures.join("instances.jsonl"))?).lines() {
        instances.push(serde_json::from_str::<TransitionInstance>(&line?)?);
    }
    let docs = instances.iter().flat_map(|i| i.context.iter().chain([&i.target]));
    let idf = build_idf(docs)?;

    let extractor = Extractor::default();
    for inst in instances.iter().take(3) {
        let tagged = tagger.tag(&inst.context.join(" "))?;
        let heads = extractor.extract(&tagged, Some(&graph), EntitySource::Context);
        let tails = extractor.extract(&tagger.tag(&inst.target)?, Some(&graph), EntitySource::Target);
        println!("{tagged}");
        println!("  heads {:?}", heads.entities);
        println!("  tails {:?}", tails.entities);
        for p in score_pairs(&heads, &tails, &idf)?.iter().take(3) {
            println!("  {:6.3}  {} -> {}", p.score, p.head, p.tail);
        }
    }
    Ok(())
}
