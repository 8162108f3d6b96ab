#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;

use bridgepath::kg::{load_graph_file, GraphConfig, KnowledgeGraph};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixture_graph() -> KnowledgeGraph {
    load_graph_file(&fixture("assertions.tsv"), &GraphConfig::default()).expect("fixture graph loads")
}

/// Additively smoothed n-gram counts built straight from token streams.
pub struct NgramOracle {
    order: usize,
    eps: f64,
    vocab: usize,
    counts: HashMap<Vec<String>, HashMap<String, u64>>,
}

pub const BOS: &str = "<s>";

impl NgramOracle {
    pub fn new(order: usize, eps: f64, streams: &[Vec<String>]) -> Self {
        let mut counts: HashMap<Vec<String>, HashMap<String, u64>> = HashMap::new();
        let mut vocab = std::collections::HashSet::new();
        for s in streams {
            let mut window = vec![BOS.to_string(); order - 1];
            for tok in s {
                vocab.insert(tok.clone());
                let ctx = window[window.len() - (order - 1)..].to_vec();
                *counts.entry(ctx).or_default().entry(tok.clone()).or_insert(0) += 1;
                window.push(tok.clone());
            }
        }
        NgramOracle {
            order,
            eps,
            vocab: vocab.len(),
            counts,
        }
    }

    pub fn log_prob(&self, ctx: &[String], next: &str) -> f64 {
        let (c, total) = match self.counts.get(ctx) {
            Some(m) => (m.get(next).copied().unwrap_or(0), m.values().sum::<u64>()),
            None => (0, 0),
        };
        ((c as f64 + self.eps) / (total as f64 + self.eps * self.vocab as f64)).ln()
    }

    /// Sum of log-probabilities over `tokens` from an all-`<s>` context.
    pub fn sequence(&self, tokens: &[String]) -> f64 {
        let mut window = vec![BOS.to_string(); self.order - 1];
        let mut total = 0.0;
        for t in tokens {
            total += self.log_prob(&window[window.len() - (self.order - 1)..], t);
            window.push(t.clone());
        }
        total
    }
}
