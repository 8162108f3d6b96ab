//! Synthesize labeled negatives for target-coherence training and balance
//! the labels.
//!
//! cargo run --example target_coherence_data

use std::collections::BTreeMap;
use std::error::Error;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use bridgepath::pipeline::TransitionInstance;
use bridgepath::tcmetric::{balance, synthesize_negatives, ResponseGenerator, SynthConfig, TcError};

/// Echoes the target; a real generator would be a trained response model.
struct Parrot;

impl ResponseGenerator for Parrot {
    fn generate(&self, _context: &str, target: &str, _seed: u64) -> Result<String, TcError> {
        Ok(format!("well, {target}"))
    }
}

fn main() -> Result<(), Box<dyn Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut instances = Vec::new();
    for line in BufReader::new(File::open(fixtures.join("instances.jsonl"))?).lines() {
        instances.push(serde_json::from_str::<TransitionInstance>(&line?)?);
    }
    let cfg = SynthConfig {
        seed: 3,
        ..SynthConfig::default()
    };
    let labeled = synthesize_negatives(&instances, Some(&Parrot), &cfg)?;
    let mut by_kind: BTreeMap<String, usize> = BTreeMap::new();
    for t in &labeled {
        *by_kind.entry(t.provenance.to_string()).or_default() += 1;
    }
    println!("{by_kind:#?}");
    let balanced = balance(&labeled, 3)?;
    for t in balanced.iter().take(4) {
        println!(
            "{:?} {}: {} | {} | {}",
            t.label, t.provenance, t.context, t.response, t.target
        );
    }
    Ok(())
}
