//! Reference metrics, the metric-bias probe, rank correlation with human
//! ratings and copy cleaning.
//!
//! cargo run --example metrics

use std::error::Error;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use bridgepath::evalkit::{
    bias_probe, bleu, clean_test_set, copy_overlap, ratings_correlation, read_ratings, rouge_l, Bleu, EvalInstance,
    OverlapDenominator, RougeL,
};
use bridgepath::pipeline::TransitionInstance;

fn main() -> Result<(), Box<dyn Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut data = Vec::new();
    for line in BufReader::new(File::open(fixtures.join("eval.jsonl"))?).lines() {
        data.push(serde_json::from_str::<EvalInstance>(&line?)?);
    }
    let corpus: Vec<(String, Vec<String>)> = data
        .iter()
        .map(|d| (d.hypothesis.clone(), d.references.clone()))
        .collect();
    println!("BLEU    {:.4}", bleu(&corpus)?);
    let rl: f64 = corpus.iter().map(|(h, r)| rouge_l(h, r)).sum::<f64>() / corpus.len() as f64;
    println!("ROUGE-L {rl:.4}");

    // Copying the target already scores well against references.
    for report in [bias_probe(&data, &Bleu)?, bias_probe(&data, &RougeL)?] {
        for row in &report.rows {
            println!("{:8} {:?} {:.4}", row.metric, row.condition, row.score);
        }
    }

    let ratings = read_ratings(File::open(fixtures.join("ratings.csv"))?)?;
    println!("spearman vs human: {:.4}", ratings_correlation(&ratings)?);

    let test: Vec<TransitionInstance> = data
        .iter()
        .map(|d| TransitionInstance {
            context: vec![d.context.clone()],
            target: d.target.clone(),
            response: d.references.first().cloned(),
        })
        .collect();
    for t in test.iter().take(3) {
        let overlap = copy_overlap(
            t.response.as_deref().unwrap_or(""),
            &t.target,
            OverlapDenominator::Target,
        );
        println!("overlap {overlap:.2}: {}", t.target);
    }
    let kept = clean_test_set(&test, 0.75, OverlapDenominator::Target)?;
    println!("clean keeps {} of {}", kept.len(), test.len());
    Ok(())
}
