//! Inverse document frequencies and head-tail pair scoring.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{EntitySet, EntitySource};
use crate::kg::Concept;
use crate::text::words;

pub const DEFAULT_ROW: &str = "[default]";

#[derive(Debug, Error)]
pub enum IdfError {
    #[error("idf line {line_no}: {reason}")]
    BadLine { line_no: usize, reason: String },
    #[error("cannot build an idf table from zero documents")]
    NoDocuments,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PairError {
    #[error("the {0} entity set is empty")]
    EmptyEntitySet(PairSide),
    #[error("no entity pairs to select from")]
    NoPairs,
    #[error("the train-phase pair budget must be >= 1")]
    ZeroBudget,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairSide {
    Head,
    Tail,
}

impl std::fmt::Display for PairSide {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PairSide::Head => "head",
            PairSide::Tail => "tail",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Train,
    Infer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdfTable {
    values: BTreeMap<String, f64>,
    default: f64,
}

impl IdfTable {
    /// `default` applies to tokens absent from `values`. Negative or
    /// non-finite inputs are clamped to 0.
    pub fn new(values: impl IntoIterator<Item = (String, f64)>, default: f64) -> Self {
        let clamp = |v: f64| if v.is_finite() && v > 0.0 { v } else { 0.0 };
        IdfTable {
            values: values.into_iter().map(|(k, v)| (k, clamp(v))).collect(),
            default: clamp(default),
        }
    }

    pub fn get(&self, token: &str) -> f64 {
        self.values.get(token).copied().unwrap_or(self.default)
    }

    pub fn default_value(&self) -> f64 {
        self.default
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Highest idf among the words of `entity`.
    pub fn max_token_idf(&self, entity: &Concept) -> f64 {
        entity.words().map(|w| self.get(w)).fold(0.0, f64::max)
    }

    /// Reads `token<TAB>value` lines. A `[default]` row sets the unknown-token
    /// value; without one the default is the table maximum.
    pub fn read_tsv<R: BufRead>(reader: R) -> Result<Self, IdfError> {
        let mut values = Vec::new();
        let mut default = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: String| IdfError::BadLine { line_no: i + 1, reason };
            let (tok, val) = line
                .split_once('\t')
                .ok_or_else(|| bad("expected token<TAB>value".into()))?;
            let v: f64 = val
                .trim()
                .parse()
                .map_err(|_| bad(format!("`{val}` is not a number")))?;
            if !v.is_finite() || v < 0.0 {
                return Err(bad(format!("idf must be finite and non-negative, got {v}")));
            }
            if tok == DEFAULT_ROW {
                default = Some(v);
            } else {
                values.push((tok.trim().to_lowercase(), v));
            }
        }
        let default = default.unwrap_or_else(|| values.iter().map(|(_, v)| *v).fold(0.0, f64::max));
        Ok(IdfTable::new(values, default))
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{DEFAULT_ROW}\t{}", self.default)?;
        for (k, v) in &self.values {
            writeln!(w, "{k}\t{v}")?;
        }
        Ok(())
    }
}

/// `idf(w) = ln(N / (1 + df(w)))`, clamped at 0, over lowercased words of
/// each document. The default (an unseen word) is `ln N`.
pub fn build_idf<I, S>(documents: I) -> Result<IdfTable, IdfError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut df: BTreeMap<String, u64> = BTreeMap::new();
    let mut n_docs = 0u64;
    for doc in documents {
        n_docs += 1;
        let unique: HashSet<String> = words(doc.as_ref()).into_iter().collect();
        for w in unique {
            *df.entry(w).or_insert(0) += 1;
        }
    }
    if n_docs == 0 {
        return Err(IdfError::NoDocuments);
    }
    let n = n_docs as f64;
    Ok(IdfTable::new(
        df.into_iter().map(|(w, d)| (w, (n / (1.0 + d as f64)).ln())),
        n.ln(),
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredPair {
    pub head: Concept,
    pub tail: Concept,
    pub score: f64,
}

/// Scores every head-tail pair by the sum of each side's highest word idf,
/// best first; ties go to the lexicographically smaller `(head, tail)`.
pub fn score_pairs(heads: &EntitySet, tails: &EntitySet, idf: &IdfTable) -> Result<Vec<ScoredPair>, PairError> {
    if heads.is_empty() {
        return Err(PairError::EmptyEntitySet(PairSide::Head));
    }
    if tails.is_empty() {
        return Err(PairError::EmptyEntitySet(PairSide::Tail));
    }
    let tail_scores: Vec<f64> = tails.entities.iter().map(|t| idf.max_token_idf(t)).collect();
    let mut out = Vec::with_capacity(heads.len() * tails.len());
    for h in &heads.entities {
        let hs = idf.max_token_idf(h);
        for (t, ts) in tails.entities.iter().zip(&tail_scores) {
            out.push(ScoredPair {
                head: h.clone(),
                tail: t.clone(),
                score: hs + ts,
            });
        }
    }
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.head.cmp(&b.head))
            .then_with(|| a.tail.cmp(&b.tail))
    });
    Ok(out)
}

/// TRAIN keeps the top `budget` pairs, INFER only the best one.
pub fn select_pairs(ranked: &[ScoredPair], phase: Phase, budget: usize) -> Result<Vec<ScoredPair>, PairError> {
    if ranked.is_empty() {
        return Err(PairError::NoPairs);
    }
    match phase {
        Phase::Train if budget == 0 => Err(PairError::ZeroBudget),
        Phase::Train => Ok(ranked[..budget.min(ranked.len())].to_vec()),
        Phase::Infer => Ok(ranked[..1].to_vec()),
    }
}

/// Convenience for tests and examples: an entity set from plain strings.
pub fn entity_set(source: EntitySource, items: &[&str]) -> EntitySet {
    let mut set = EntitySet::new(source);
    for s in items {
        set.push(Concept::new(s).expect("non-empty entity"));
    }
    set
}
