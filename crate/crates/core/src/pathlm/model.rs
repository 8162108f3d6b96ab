//! Order-n additively smoothed token model over path sequences.
//!
//! Each training path contributes token streams in the configured layouts
//! (by default its HT layout, plus its WC layout with a seeded permutation of
//! the intermediates when it has any), each followed by `</s>` and
//! left-padded with `n - 1` copies of `<s>`. For every stream
//! position the model counts the token given the preceding `n - 1` tokens,
//! and scores
//!
//! ```text
//! p(w | ctx) = (c(ctx, w) + eps) / (c(ctx) + eps * V)
//! ```
//!
//! where `V` is the vocabulary size (`<s>` is never predicted, so it is not
//! in the vocabulary). Unseen contexts fall back to the uniform `1 / V`.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::sequence::{format_ht, format_wc_training, PathSequence, SEP_TOKEN, TARGET_TOKEN, WC_TOKEN};
use crate::kg::Relation;
use crate::path::KnowledgePath;
use crate::seed::{fnv1a, rng_from_seed};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
const MODEL_FORMAT: &str = "bridgepath-pathlm";
const MODEL_VERSION: u32 = 1;
pub(crate) const BOS_ID: u32 = u32::MAX;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot train on an empty corpus")]
    EmptyCorpus,
    #[error("unknown concept `{0}`")]
    UnknownConcept(String),
    #[error("unknown token `{0}`")]
    UnknownToken(String),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainFormat {
    /// HT layout, plus the WC layout for paths with intermediates.
    Both,
    /// WC layout only (identical to HT for one-hop paths).
    WillContain,
    /// HT layout only.
    HeadTail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub order: usize,
    pub smoothing: f64,
    /// Keys the per-path permutation of the `[wc]` block.
    pub seed: u64,
    pub format: TrainFormat,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            order: 3,
            smoothing: 0.01,
            seed: 0,
            format: TrainFormat::Both,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.order < 2 {
            return Err(ModelError::Config("order must be >= 2".into()));
        }
        if !(self.smoothing > 0.0 && self.smoothing.is_finite()) {
            return Err(ModelError::Config("smoothing must be a positive finite number".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum TokenKind {
    Concept,
    Relation,
    Marker,
    Eos,
}

fn kind_of(token: &str) -> TokenKind {
    if token == EOS {
        TokenKind::Eos
    } else if token == TARGET_TOKEN || token == SEP_TOKEN || token == WC_TOKEN {
        TokenKind::Marker
    } else if Relation::looks_like_relation(token) {
        TokenKind::Relation
    } else {
        TokenKind::Concept
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub(crate) struct ContextCounts {
    pub total: u64,
    pub next: HashMap<u32, u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathModel {
    order: usize,
    smoothing: f64,
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    kinds: Vec<TokenKind>,
    contexts: HashMap<Vec<u32>, ContextCounts>,
}

fn sequence_tokens(seq: &PathSequence) -> Vec<String> {
    let mut tokens = seq.tokens();
    tokens.push(EOS.to_string());
    tokens
}

/// Training streams for one path, before `<s>` padding.
pub fn training_streams(path: &KnowledgePath, config: &TrainConfig) -> Vec<Vec<String>> {
    let wc = || {
        let key = fnv1a(path.to_line().as_bytes()) ^ config.seed;
        sequence_tokens(&format_wc_training(path, &mut rng_from_seed(key)))
    };
    match config.format {
        TrainFormat::HeadTail => vec![sequence_tokens(&format_ht(path))],
        TrainFormat::WillContain => vec![wc()],
        TrainFormat::Both if path.hops() == 1 => vec![sequence_tokens(&format_ht(path))],
        TrainFormat::Both => vec![sequence_tokens(&format_ht(path)), wc()],
    }
}

/// Trains on `paths`. Counts are exact n-gram frequencies, so training on a
/// corpus twice doubles every count.
pub fn train_path_model<'a, I>(paths: I, config: &TrainConfig) -> Result<PathModel, ModelError>
where
    I: IntoIterator<Item = &'a KnowledgePath>,
{
    config.validate()?;
    let streams: Vec<Vec<String>> = paths.into_iter().flat_map(|p| training_streams(p, config)).collect();
    if streams.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    let mut vocab: Vec<String> = streams.iter().flatten().cloned().collect();
    vocab.sort();
    vocab.dedup();
    let mut model = PathModel::with_vocab(config.order, config.smoothing, vocab);
    let ctx_len = config.order - 1;
    let mut window: Vec<u32> = Vec::new();
    for stream in &streams {
        window.clear();
        window.resize(ctx_len, BOS_ID);
        for tok in stream {
            let id = model.index[tok];
            let start = window.len() - ctx_len;
            let entry = model.contexts.entry(window[start..].to_vec()).or_default();
            entry.total += 1;
            *entry.next.entry(id).or_insert(0) += 1;
            window.push(id);
        }
    }
    Ok(model)
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    order: usize,
    smoothing: f64,
    vocabulary: Vec<String>,
    counts: Vec<CountRow>,
}

#[derive(Serialize, Deserialize)]
struct CountRow {
    context: Vec<String>,
    next: Vec<(String, u64)>,
}

impl PathModel {
    fn with_vocab(order: usize, smoothing: f64, vocab: Vec<String>) -> Self {
        let index = vocab.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        let kinds = vocab.iter().map(|t| kind_of(t)).collect();
        PathModel {
            order,
            smoothing,
            vocab,
            index,
            kinds,
            contexts: HashMap::new(),
        }
    }

    /// Builds a model from explicit `(context, next, count)` rows. Context
    /// tokens may include `<s>`; every other token joins the vocabulary,
    /// together with any listed in `extra_vocab`.
    pub fn from_counts<'a>(
        order: usize,
        smoothing: f64,
        extra_vocab: impl IntoIterator<Item = &'a str>,
        rows: &[(Vec<&str>, &str, u64)],
    ) -> Result<Self, ModelError> {
        TrainConfig {
            order,
            smoothing,
            ..TrainConfig::default()
        }
        .validate()?;
        let mut vocab: Vec<String> = extra_vocab.into_iter().map(str::to_string).collect();
        for (ctx, next, _) in rows {
            if ctx.len() != order - 1 {
                return Err(ModelError::Format(format!(
                    "context {ctx:?} does not have {} tokens",
                    order - 1
                )));
            }
            vocab.extend(ctx.iter().filter(|t| **t != BOS).map(|t| t.to_string()));
            vocab.push(next.to_string());
        }
        if vocab.iter().any(|t| t == BOS) {
            return Err(ModelError::Format(format!("`{BOS}` cannot be predicted")));
        }
        vocab.sort();
        vocab.dedup();
        let mut model = PathModel::with_vocab(order, smoothing, vocab);
        for (ctx, next, count) in rows {
            let key = ctx.iter().map(|t| model.id_or_bos(t)).collect();
            let entry = model.contexts.entry(key).or_default();
            entry.total += count;
            *entry.next.entry(model.index[*next]).or_insert(0) += count;
        }
        Ok(model)
    }

    fn id_or_bos(&self, token: &str) -> u32 {
        if token == BOS {
            BOS_ID
        } else {
            self.index[token]
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn token_id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.vocab[id as usize]
    }

    pub(crate) fn kind(&self, id: u32) -> TokenKind {
        self.kinds[id as usize]
    }

    pub fn contains_concept(&self, concept: &str) -> bool {
        self.token_id(concept)
            .is_some_and(|id| self.kind(id) == TokenKind::Concept)
    }

    /// Raw count of `next` after `context` (context given as token ids).
    pub fn count(&self, context: &[u32], next: u32) -> u64 {
        self.contexts
            .get(context)
            .and_then(|c| c.next.get(&next))
            .copied()
            .unwrap_or(0)
    }

    pub fn context_total(&self, context: &[u32]) -> u64 {
        self.contexts.get(context).map_or(0, |c| c.total)
    }

    /// Smoothed `ln p(next | context)`; `context` holds exactly `order - 1` ids.
    pub fn log_prob(&self, context: &[u32], next: u32) -> f64 {
        let v = self.vocab.len() as f64;
        let (c, total) = match self.contexts.get(context) {
            Some(ctx) => (ctx.next.get(&next).copied().unwrap_or(0), ctx.total),
            None => (0, 0),
        };
        ((c as f64 + self.smoothing) / (total as f64 + self.smoothing * v)).ln()
    }

    /// Maps tokens to ids, reporting the first unknown one.
    pub fn encode(&self, tokens: &[String]) -> Result<Vec<u32>, ModelError> {
        tokens
            .iter()
            .map(|t| {
                self.token_id(t).ok_or_else(|| {
                    if kind_of(t) == TokenKind::Concept {
                        ModelError::UnknownConcept(t.clone())
                    } else {
                        ModelError::UnknownToken(t.clone())
                    }
                })
            })
            .collect()
    }

    /// Sum of `ln p` over `tokens` (which should end with `</s>`), starting
    /// from an all-`<s>` context. Returns the sum and the token count.
    pub fn sequence_log_prob(&self, tokens: &[String]) -> Result<(f64, usize), ModelError> {
        let ids = self.encode(tokens)?;
        let ctx_len = self.order - 1;
        let mut window = vec![BOS_ID; ctx_len];
        window.reserve(ids.len());
        let mut total = 0.0;
        for &id in &ids {
            total += self.log_prob(&window[window.len() - ctx_len..], id);
            window.push(id);
        }
        Ok((total, ids.len()))
    }

    /// `exp` of the mean negative log-probability over the head-tail
    /// sequence of `path` and its end marker.
    pub fn path_perplexity(&self, path: &KnowledgePath) -> Result<f64, ModelError> {
        let tokens = sequence_tokens(&format_ht(path));
        let (lp, n) = self.sequence_log_prob(&tokens)?;
        Ok((-lp / n as f64).exp())
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<(), ModelError> {
        let token_or_bos = |id: u32| {
            if id == BOS_ID {
                BOS.to_string()
            } else {
                self.vocab[id as usize].clone()
            }
        };
        let sorted: BTreeMap<Vec<String>, BTreeMap<String, u64>> = self
            .contexts
            .iter()
            .map(|(ctx, counts)| {
                (
                    ctx.iter().map(|&i| token_or_bos(i)).collect(),
                    counts.next.iter().map(|(&n, &c)| (token_or_bos(n), c)).collect(),
                )
            })
            .collect();
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            order: self.order,
            smoothing: self.smoothing,
            vocabulary: self.vocab.clone(),
            counts: sorted
                .into_iter()
                .map(|(context, next)| CountRow {
                    context,
                    next: next.into_iter().collect(),
                })
                .collect(),
        };
        serde_json::to_writer(w, &file)?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self, ModelError> {
        let file: ModelFile = serde_json::from_reader(r)?;
        if file.format != MODEL_FORMAT {
            return Err(ModelError::Format(format!("unexpected format tag `{}`", file.format)));
        }
        if file.version != MODEL_VERSION {
            return Err(ModelError::Format(format!("unsupported version {}", file.version)));
        }
        TrainConfig {
            order: file.order,
            smoothing: file.smoothing,
            ..TrainConfig::default()
        }
        .validate()?;
        let mut sorted = file.vocabulary.clone();
        sorted.sort();
        sorted.dedup();
        if sorted != file.vocabulary || sorted.iter().any(|t| t == BOS) {
            return Err(ModelError::Format(
                "vocabulary must be sorted, unique and exclude <s>".into(),
            ));
        }
        let mut model = PathModel::with_vocab(file.order, file.smoothing, file.vocabulary);
        let lookup = |m: &PathModel, t: &str| -> Result<u32, ModelError> {
            if t == BOS {
                Ok(BOS_ID)
            } else {
                m.token_id(t)
                    .ok_or_else(|| ModelError::Format(format!("count row uses `{t}` outside the vocabulary")))
            }
        };
        for row in file.counts {
            if row.context.len() != model.order - 1 {
                return Err(ModelError::Format("context length does not match order".into()));
            }
            let ctx = row
                .context
                .iter()
                .map(|t| lookup(&model, t))
                .collect::<Result<Vec<_>, _>>()?;
            let mut counts = ContextCounts::default();
            for (t, c) in row.next {
                let id = lookup(&model, &t)?;
                if id == BOS_ID {
                    return Err(ModelError::Format(format!("`{BOS}` cannot be predicted")));
                }
                counts.total += c;
                counts.next.insert(id, c);
            }
            model.contexts.insert(ctx, counts);
        }
        Ok(model)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), ModelError> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_json(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ModelError> {
        let file = std::fs::File::open(path)?;
        PathModel::read_json(std::io::BufReader::new(file))
    }
}
