//! Constrained generation over a [`PathModel`].
//!
//! The prompt is the WC layout `[wc] k1 ... [target] tail [sep] head` (an
//! empty `[wc]` block gives the HT layout). Body tokens are then decoded
//! under a grammar mask:
//!
//! - after a concept comes a relation, or `</s>` once the concept is the tail;
//! - after a relation comes a concept;
//! - the tail may be emitted only when every required entity is covered, and
//!   it always ends the path;
//! - a step is allowed only if the remaining hop budget can still cover the
//!   uncovered entities and reach the tail.
//!
//! Required entities equal to the head or tail are covered by construction.

use std::cmp::Ordering;
use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::{ModelError, PathModel, TokenKind, BOS_ID, EOS};
use super::sequence::{SEP_TOKEN, TARGET_TOKEN, WC_TOKEN};
use crate::kg::{Concept, Relation};
use crate::path::KnowledgePath;
use crate::seed::{derive_seed, rng_from_seed};

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("unknown concept `{0}`")]
    UnknownConcept(String),
    #[error("no path satisfies the constraints within the length budget")]
    NoPathFound,
    #[error("invalid decode config: {0}")]
    Config(String),
    #[error("external generator: {0}")]
    External(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecodeStrategy {
    /// Temperature plus nucleus sampling, deduplicated.
    #[default]
    Sample,
    /// Beam search over raw model scores.
    Beam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub temperature: f64,
    pub top_p: f64,
    pub beam_width: usize,
    /// Cap on body tokens (nodes plus relations).
    pub max_len: usize,
    pub num_samples: usize,
    pub seed: u64,
    pub max_hops: usize,
    pub strategy: DecodeStrategy,
    /// Sampling draws per requested path before giving up on distinctness.
    pub max_attempts_factor: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            temperature: 0.7,
            top_p: 0.9,
            beam_width: 8,
            max_len: 13,
            num_samples: 5,
            seed: 0,
            max_hops: 6,
            strategy: DecodeStrategy::Sample,
            max_attempts_factor: 10,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<(), DecodeError> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(DecodeError::Config("temperature must be > 0".into()));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(DecodeError::Config("top_p must lie in (0, 1]".into()));
        }
        if self.beam_width == 0 {
            return Err(DecodeError::Config("beam_width must be >= 1".into()));
        }
        if self.num_samples == 0 {
            return Err(DecodeError::Config("num_samples must be >= 1".into()));
        }
        if self.max_hops == 0 {
            return Err(DecodeError::Config("max_hops must be >= 1".into()));
        }
        Ok(())
    }

    /// Hop budget after applying the token cap.
    pub fn hop_budget(&self) -> usize {
        self.max_hops.min(self.max_len.saturating_sub(1) / 2)
    }
}

/// A generated path with its total log-probability (body tokens and `</s>`).
#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    pub path: KnowledgePath,
    pub log_prob: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Expect {
    Relation,
    Concept,
    End,
}

#[derive(Clone, Debug)]
struct Hyp {
    tokens: Vec<u32>,
    body_start: usize,
    log_prob: f64,
    uncovered: Vec<u32>,
    hops: usize,
    expect: Expect,
}

struct Search<'m> {
    model: &'m PathModel,
    ctx_len: usize,
    tail: u32,
    concepts: Vec<u32>,
    relations: Vec<u32>,
    eos: u32,
    budget: usize,
}

impl<'m> Search<'m> {
    fn context<'h>(&self, hyp: &'h Hyp) -> &'h [u32] {
        &hyp.tokens[hyp.tokens.len() - self.ctx_len..]
    }

    /// Allowed next tokens for `hyp` (empty when finished).
    fn allowed(&self, hyp: &Hyp, out: &mut Vec<u32>) {
        out.clear();
        match hyp.expect {
            Expect::End => out.push(self.eos),
            Expect::Relation => {
                if hyp.hops + 1 + hyp.uncovered.len() <= self.budget {
                    out.extend_from_slice(&self.relations);
                }
            }
            Expect::Concept => {
                for &c in &self.concepts {
                    if c == self.tail {
                        if hyp.uncovered.is_empty() {
                            out.push(c);
                        }
                    } else {
                        let left = hyp.uncovered.len() - usize::from(hyp.uncovered.contains(&c));
                        if hyp.hops + left < self.budget {
                            out.push(c);
                        }
                    }
                }
            }
        }
    }

    fn advance(&self, hyp: &Hyp, token: u32, log_prob: f64) -> Hyp {
        let mut next = hyp.clone();
        next.tokens.push(token);
        next.log_prob += log_prob;
        next.expect = match hyp.expect {
            Expect::Relation => {
                next.hops += 1;
                Expect::Concept
            }
            Expect::Concept => {
                next.uncovered.retain(|&u| u != token);
                if token == self.tail {
                    Expect::End
                } else {
                    Expect::Relation
                }
            }
            Expect::End => Expect::End,
        };
        next
    }

    fn to_path(&self, hyp: &Hyp) -> KnowledgePath {
        let body = &hyp.tokens[hyp.body_start..hyp.tokens.len() - 1];
        let mut nodes = Vec::new();
        let mut relations = Vec::new();
        for (i, &id) in body.iter().enumerate() {
            let tok = self.model.token(id);
            if i % 2 == 0 {
                nodes.push(Concept::new(tok).expect("vocabulary concepts are normalized"));
            } else {
                relations.push(Relation::parse(tok).expect("vocabulary relations are well-formed"));
            }
        }
        KnowledgePath::new(nodes, relations).expect("decoding emits at least one hop")
    }
}

fn concept_id(model: &PathModel, concept: &Concept) -> Result<u32, DecodeError> {
    model
        .token_id(concept.as_str())
        .filter(|&id| model.kind(id) == TokenKind::Concept)
        .ok_or_else(|| DecodeError::UnknownConcept(concept.as_str().to_string()))
}

fn marker_id(model: &PathModel, token: &str) -> Result<u32, DecodeError> {
    model
        .token_id(token)
        .ok_or_else(|| DecodeError::Model(ModelError::UnknownToken(token.to_string())))
}

fn compare_generated(a: &Generated, b: &Generated) -> Ordering {
    b.log_prob
        .partial_cmp(&a.log_prob)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.path.to_line().cmp(&b.path.to_line()))
}

/// Generates up to `config.num_samples` distinct paths from `head` to
/// `tail` that visit every entity in `required`, best first.
pub fn generate_path(
    model: &PathModel,
    head: &Concept,
    tail: &Concept,
    required: &[Concept],
    config: &DecodeConfig,
) -> Result<Vec<Generated>, DecodeError> {
    config.validate()?;
    let head_id = concept_id(model, head)?;
    let tail_id = concept_id(model, tail)?;
    let mut required_ids = Vec::with_capacity(required.len());
    for k in required {
        required_ids.push(concept_id(model, k)?);
    }

    let ctx_len = model.order() - 1;
    let mut prompt = vec![BOS_ID; ctx_len];
    if !required_ids.is_empty() {
        let wc = marker_id(model, WC_TOKEN)?;
        for &k in &required_ids {
            prompt.push(wc);
            prompt.push(k);
        }
    }
    prompt.push(marker_id(model, TARGET_TOKEN)?);
    prompt.push(tail_id);
    prompt.push(marker_id(model, SEP_TOKEN)?);

    let mut uncovered: Vec<u32> = required_ids
        .iter()
        .copied()
        .filter(|&k| k != head_id && k != tail_id)
        .collect();
    uncovered.sort_unstable();
    uncovered.dedup();

    let search = Search {
        model,
        ctx_len,
        tail: tail_id,
        concepts: (0..model.vocab_size() as u32)
            .filter(|&i| model.kind(i) == TokenKind::Concept)
            .collect(),
        relations: (0..model.vocab_size() as u32)
            .filter(|&i| model.kind(i) == TokenKind::Relation)
            .collect(),
        eos: marker_id(model, EOS)?,
        budget: config.hop_budget(),
    };
    if search.budget == 0 || uncovered.len() + 1 > search.budget || search.relations.is_empty() {
        return Err(DecodeError::NoPathFound);
    }

    let mut root = Hyp {
        body_start: prompt.len(),
        tokens: prompt,
        log_prob: 0.0,
        uncovered,
        hops: 0,
        expect: Expect::Relation,
    };
    // The head is given, but its probability under the prompt is part of the
    // sequence score.
    root.log_prob = model.log_prob(search.context(&root), head_id);
    root.tokens.push(head_id);

    let mut found = match config.strategy {
        DecodeStrategy::Beam => beam_search(&search, root, config),
        DecodeStrategy::Sample => sample_paths(&search, root, config),
    };
    if found.is_empty() {
        return Err(DecodeError::NoPathFound);
    }
    found.sort_by(compare_generated);
    found.truncate(config.num_samples);
    Ok(found)
}

fn beam_search(search: &Search<'_>, root: Hyp, config: &DecodeConfig) -> Vec<Generated> {
    let mut beams = vec![root];
    let mut finished: Vec<Generated> = Vec::new();
    let mut allowed = Vec::new();
    while !beams.is_empty() {
        let mut candidates: Vec<Hyp> = Vec::new();
        for hyp in &beams {
            search.allowed(hyp, &mut allowed);
            let ctx = search.context(hyp);
            for &tok in &allowed {
                let lp = search.model.log_prob(ctx, tok);
                candidates.push(search.advance(hyp, tok, lp));
            }
        }
        candidates.sort_by(|a, b| {
            b.log_prob
                .partial_cmp(&a.log_prob)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.tokens.cmp(&b.tokens))
        });
        beams.clear();
        for hyp in candidates {
            if beams.len() >= config.beam_width {
                break;
            }
            if hyp.tokens.last() == Some(&search.eos) {
                finished.push(Generated {
                    path: search.to_path(&hyp),
                    log_prob: hyp.log_prob,
                });
            } else {
                beams.push(hyp);
            }
        }
    }
    finished
}

/// Draws from the temperature-scaled, nucleus-truncated distribution over
/// `allowed`. Returns the drawn token and its unscaled model log-probability.
fn draw<R: Rng>(
    search: &Search<'_>,
    hyp: &Hyp,
    allowed: &[u32],
    config: &DecodeConfig,
    rng: &mut R,
    scratch: &mut Vec<(u32, f64, f64)>,
) -> Option<(u32, f64)> {
    if allowed.is_empty() {
        return None;
    }
    let ctx = search.context(hyp);
    scratch.clear();
    let mut max_logit = f64::NEG_INFINITY;
    for &tok in allowed {
        let lp = search.model.log_prob(ctx, tok);
        let logit = lp / config.temperature;
        max_logit = max_logit.max(logit);
        scratch.push((tok, lp, logit));
    }
    let mut z = 0.0;
    for entry in scratch.iter_mut() {
        entry.2 = (entry.2 - max_logit).exp();
        z += entry.2;
    }
    scratch.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
    let mut kept = 0;
    let mut mass = 0.0;
    for entry in scratch.iter() {
        mass += entry.2 / z;
        kept += 1;
        if mass >= config.top_p {
            break;
        }
    }
    let nucleus = &scratch[..kept];
    let total: f64 = nucleus.iter().map(|e| e.2).sum();
    let mut x = rng.gen::<f64>() * total;
    for entry in nucleus {
        if x < entry.2 {
            return Some((entry.0, entry.1));
        }
        x -= entry.2;
    }
    let last = nucleus.last().unwrap();
    Some((last.0, last.1))
}

fn sample_paths(search: &Search<'_>, root: Hyp, config: &DecodeConfig) -> Vec<Generated> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut allowed = Vec::new();
    let mut scratch = Vec::new();
    let attempts = config.num_samples.saturating_mul(config.max_attempts_factor.max(1));
    for attempt in 0..attempts {
        if out.len() >= config.num_samples {
            break;
        }
        let mut rng = rng_from_seed(derive_seed(config.seed, attempt as u64));
        let mut hyp = root.clone();
        loop {
            search.allowed(&hyp, &mut allowed);
            let Some((tok, lp)) = draw(search, &hyp, &allowed, config, &mut rng, &mut scratch) else {
                break;
            };
            hyp = search.advance(&hyp, tok, lp);
            if tok == search.eos {
                break;
            }
        }
        if hyp.tokens.last() != Some(&search.eos) {
            continue;
        }
        let body = hyp.tokens[hyp.body_start..].to_vec();
        if seen.insert(body) {
            out.push(Generated {
                path: search.to_path(&hyp),
                log_prob: hyp.log_prob,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathlm::model::{train_path_model, TrainConfig};

    fn p(line: &str) -> KnowledgePath {
        KnowledgePath::from_line(line).unwrap()
    }

    fn c(s: &str) -> Concept {
        Concept::new(s).unwrap()
    }

    fn model(lines: &[&str]) -> PathModel {
        let paths: Vec<_> = lines.iter().map(|l| p(l)).collect();
        train_path_model(&paths, &TrainConfig::default()).unwrap()
    }

    #[test]
    fn single_path_model() {
        let m = model(&["a IsA b"]);
        for strategy in [DecodeStrategy::Beam, DecodeStrategy::Sample] {
            let cfg = DecodeConfig {
                strategy,
                num_samples: 1,
                ..DecodeConfig::default()
            };
            let got = generate_path(&m, &c("a"), &c("b"), &[], &cfg).unwrap();
            assert_eq!(got[0].path, p("a IsA b"), "{strategy:?}");
        }
    }

    #[test]
    fn unknown_tail() {
        let m = model(&["a IsA b"]);
        assert!(matches!(
            generate_path(&m, &c("a"), &c("z"), &[], &DecodeConfig::default()),
            Err(DecodeError::UnknownConcept(z)) if z == "z"
        ));
        // Relations are not concepts.
        assert!(matches!(
            generate_path(&m, &c("a"), &c("b"), &[c("isa")], &DecodeConfig::default()),
            Err(DecodeError::UnknownConcept(_))
        ));
    }

    #[test]
    fn wc_prefers_required_entity() {
        let m = model(&["a R1 m R2 b", "a R3 b"]);
        let cfg = DecodeConfig {
            strategy: DecodeStrategy::Beam,
            ..DecodeConfig::default()
        };
        let got = generate_path(&m, &c("a"), &c("b"), &[c("m")], &cfg).unwrap();
        assert_eq!(got[0].path, p("a R1 m R2 b"));
        assert!(got
            .iter()
            .all(|g| g.path.contains_node(&c("m")) && g.path.tail() == &c("b")));
    }

    #[test]
    fn budget_too_small() {
        let m = model(&["a R1 m R2 n R3 b"]);
        let cfg = DecodeConfig {
            max_hops: 2,
            ..DecodeConfig::default()
        };
        assert!(matches!(
            generate_path(&m, &c("a"), &c("b"), &[c("m"), c("n")], &cfg),
            Err(DecodeError::NoPathFound)
        ));
    }

    #[test]
    fn sampling_is_seeded() {
        let m = model(&["a R1 m R2 b", "a R3 b", "a R1 x R2 b", "x R3 m"]);
        let cfg = DecodeConfig {
            seed: 11,
            ..DecodeConfig::default()
        };
        let one = generate_path(&m, &c("a"), &c("b"), &[], &cfg).unwrap();
        let two = generate_path(&m, &c("a"), &c("b"), &[], &cfg).unwrap();
        assert_eq!(one, two);
        let mut lines: Vec<_> = one.iter().map(|g| g.path.to_line()).collect();
        lines.dedup();
        assert_eq!(lines.len(), one.len());
    }

    #[test]
    fn config_validation() {
        for bad in [
            DecodeConfig {
                temperature: 0.0,
                ..DecodeConfig::default()
            },
            DecodeConfig {
                top_p: 0.0,
                ..DecodeConfig::default()
            },
            DecodeConfig {
                beam_width: 0,
                ..DecodeConfig::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
        assert_eq!(DecodeConfig::default().hop_budget(), 6);
    }
}
