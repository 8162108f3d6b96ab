//! Turn free-form dialogues into transition instances: carve a target out
//! of the response with SRL frames, then keep instances the scorer likes.
//!
//! cargo run --example augment_dialogues -- [threshold]

use std::error::Error;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use bridgepath::augment::{augment_records, create_target, AugmentConfig, DialogueRecord};
use bridgepath::tcmetric::ReferenceScorer;

fn main() -> Result<(), Box<dyn Error>> {
    let threshold = std::env::args().nth(1).map_or(Ok(0.0), |a| a.parse())?;
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut records = Vec::new();
    for line in BufReader::new(File::open(fixtures.join("dialogues.jsonl"))?).lines() {
        records.push(serde_json::from_str::<DialogueRecord>(&line?)?);
    }
    for r in &records {
        println!("{:?} -> {:?}", r.response, create_target(&r.response, &r.frames)?);
    }

    let cfg = AugmentConfig {
        threshold,
        ..AugmentConfig::default()
    };
    let out = augment_records(&records, &ReferenceScorer, &cfg);
    for k in &out.kept {
        println!(
            "kept {:.3}: {:?} => {:?}",
            k.score, k.instance.context, k.instance.target
        );
    }
    for s in &out.skipped {
        println!("skipped #{}: {}", s.index, s.reason);
    }
    Ok(())
}
