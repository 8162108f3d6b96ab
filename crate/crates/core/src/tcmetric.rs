//! Training data for a target-coherence classifier (adversarial negatives
//! and balancing) plus a lexical reference scorer.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::process::{Command, Stdio};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::context_text;
use crate::pipeline::TransitionInstance;
use crate::scorer::{protocol_field, Scorer, ScorerError};
use crate::seed::{derive_seed, rng_from_seed};
use crate::text::content_tokens;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TcError {
    #[error("synthesis needs at least 2 gold instances, got {0}")]
    InsufficientDataset(usize),
    #[error("instance {0} has no response")]
    MissingResponse(usize),
    #[error("balancing needs at least one positive")]
    NoPositives,
    #[error("unknown provenance `{0}`")]
    BadProvenance(String),
    #[error("response generator: {0}")]
    Generator(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Label {
    Positive,
    Negative,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Field {
    Context,
    Target,
    Response,
}

impl Field {
    const ALL: [Field; 3] = [Field::Context, Field::Target, Field::Response];

    fn letter(self) -> char {
        match self {
            Field::Context => 'c',
            Field::Target => 't',
            Field::Response => 'r',
        }
    }
}

/// Which rule produced a triple. Serialized as `GOLD`, `RAND_SWAP(c)`, ...
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Provenance {
    Gold,
    RandSwap(Field),
    GenRandomTarget,
    SameTargetOtherContext,
    RepeatPositive,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Gold => f.write_str("GOLD"),
            Provenance::RandSwap(x) => write!(f, "RAND_SWAP({})", x.letter()),
            Provenance::GenRandomTarget => f.write_str("GEN_RANDOM_TARGET"),
            Provenance::SameTargetOtherContext => f.write_str("SAME_TARGET_OTHER_CONTEXT"),
            Provenance::RepeatPositive => f.write_str("REPEAT_POSITIVE"),
        }
    }
}

impl FromStr for Provenance {
    type Err = TcError;

    fn from_str(s: &str) -> Result<Self, TcError> {
        Ok(match s {
            "GOLD" => Provenance::Gold,
            "RAND_SWAP(c)" => Provenance::RandSwap(Field::Context),
            "RAND_SWAP(t)" => Provenance::RandSwap(Field::Target),
            "RAND_SWAP(r)" => Provenance::RandSwap(Field::Response),
            "GEN_RANDOM_TARGET" => Provenance::GenRandomTarget,
            "SAME_TARGET_OTHER_CONTEXT" => Provenance::SameTargetOtherContext,
            "REPEAT_POSITIVE" => Provenance::RepeatPositive,
            other => return Err(TcError::BadProvenance(other.to_string())),
        })
    }
}

impl Serialize for Provenance {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Provenance {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Provenance {
    pub fn label(self) -> Label {
        match self {
            Provenance::Gold | Provenance::RepeatPositive => Label::Positive,
            _ => Label::Negative,
        }
    }

    pub fn mechanism(self) -> Option<Mechanism> {
        match self {
            Provenance::RandSwap(_) => Some(Mechanism::RandomSwap),
            Provenance::GenRandomTarget => Some(Mechanism::GeneratedRandomTarget),
            Provenance::SameTargetOtherContext => Some(Mechanism::SameTargetOtherContext),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledTriple {
    pub context: String,
    pub response: String,
    pub target: String,
    pub label: Label,
    pub provenance: Provenance,
    /// Index of the gold instance this triple derives from.
    #[serde(default)]
    pub source: usize,
}

impl LabeledTriple {
    pub fn field(&self, f: Field) -> &str {
        match f {
            Field::Context => &self.context,
            Field::Target => &self.target,
            Field::Response => &self.response,
        }
    }

    fn with_field(&self, f: Field, value: String, provenance: Provenance) -> Self {
        let mut out = LabeledTriple {
            label: provenance.label(),
            provenance,
            ..self.clone()
        };
        match f {
            Field::Context => out.context = value,
            Field::Target => out.target = value,
            Field::Response => out.response = value,
        }
        out
    }

    /// Fields whose text differs from `other`.
    pub fn differing_fields(&self, other: &LabeledTriple) -> Vec<Field> {
        Field::ALL
            .into_iter()
            .filter(|&f| self.field(f) != other.field(f))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mechanism {
    /// Replace one of context, target, response with a random other value.
    RandomSwap,
    /// Generated response for the gold context and a random target.
    GeneratedRandomTarget,
    /// Response of another instance with the same target and a different context.
    SameTargetOtherContext,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub max_per_mechanism: usize,
    pub seed: u64,
    pub mechanisms: Vec<Mechanism>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            max_per_mechanism: 2,
            seed: 0,
            mechanisms: vec![
                Mechanism::RandomSwap,
                Mechanism::GeneratedRandomTarget,
                Mechanism::SameTargetOtherContext,
            ],
        }
    }
}

/// Produces a response for `(context, target)`.
pub trait ResponseGenerator: Sync {
    fn generate(&self, context: &str, target: &str, seed: u64) -> Result<String, TcError>;
}

/// One process per call: `context<TAB>target` on stdin, the response as the
/// first stdout line. The seed is passed in `BRIDGEPATH_SEED`.
#[derive(Clone, Debug)]
pub struct CommandGenerator {
    pub program: String,
    pub args: Vec<String>,
}

impl ResponseGenerator for CommandGenerator {
    fn generate(&self, context: &str, target: &str, seed: u64) -> Result<String, TcError> {
        let err = |e: std::io::Error| TcError::Generator(format!("{}: {e}", self.program));
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .env("BRIDGEPATH_SEED", seed.to_string())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(err)?;
        {
            let mut stdin = child.stdin.take().expect("stdin is piped");
            writeln!(stdin, "{}\t{}", protocol_field(context), protocol_field(target)).map_err(err)?;
        }
        let out = child.wait_with_output().map_err(err)?;
        if !out.status.success() {
            return Err(TcError::Generator(format!(
                "{} exited with {}",
                self.program, out.status
            )));
        }
        let text = String::from_utf8_lossy(&out.stdout);
        let line = text.lines().next().unwrap_or("").trim();
        if line.is_empty() {
            return Err(TcError::Generator(format!("{} produced no response", self.program)));
        }
        Ok(line.to_string())
    }
}

/// Distinct values in first-appearance order.
fn pool<'a>(values: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut seen = HashSet::new();
    values.filter(|v| seen.insert(*v)).collect()
}

fn draw_other<'a, R: Rng>(rng: &mut R, pool: &[&'a str], exclude: &str) -> Option<&'a str> {
    let candidates: Vec<&str> = pool.iter().copied().filter(|v| *v != exclude).collect();
    candidates.choose(rng).copied()
}

/// Gold positives followed, per positive, by their negatives in mechanism
/// order. Swap pools are drawn from `dataset` only.
pub fn synthesize_negatives(
    dataset: &[TransitionInstance],
    generator: Option<&dyn ResponseGenerator>,
    cfg: &SynthConfig,
) -> Result<Vec<LabeledTriple>, TcError> {
    if dataset.len() < 2 {
        return Err(TcError::InsufficientDataset(dataset.len()));
    }
    let gold: Vec<LabeledTriple> = dataset
        .iter()
        .enumerate()
        .map(|(i, inst)| {
            Ok(LabeledTriple {
                context: context_text(&inst.context),
                response: inst.response.clone().ok_or(TcError::MissingResponse(i))?,
                target: inst.target.clone(),
                label: Label::Positive,
                provenance: Provenance::Gold,
                source: i,
            })
        })
        .collect::<Result<_, TcError>>()?;
    let pools: Vec<Vec<&str>> = Field::ALL
        .iter()
        .map(|&f| pool(gold.iter().map(|g| g.field(f))))
        .collect();
    let enabled = |m: Mechanism| cfg.mechanisms.contains(&m);
    if enabled(Mechanism::GeneratedRandomTarget) && generator.is_none() {
        log::warn!("no response generator configured; skipping the generated-response mechanism");
    }
    let mut out = Vec::new();
    for (i, pos) in gold.iter().enumerate() {
        out.push(pos.clone());
        let mut rng = rng_from_seed(derive_seed(cfg.seed, i as u64));
        if enabled(Mechanism::RandomSwap) {
            let mut fields = Field::ALL.to_vec();
            fields.shuffle(&mut rng);
            for f in fields.into_iter().take(cfg.max_per_mechanism) {
                let k = Field::ALL.iter().position(|&x| x == f).expect("field in ALL");
                if let Some(v) = draw_other(&mut rng, &pools[k], pos.field(f)) {
                    out.push(pos.with_field(f, v.to_string(), Provenance::RandSwap(f)));
                }
            }
        }
        if let (true, Some(g)) = (enabled(Mechanism::GeneratedRandomTarget), generator) {
            let targets = &pools[1];
            let mut made = 0;
            for attempt in 0..cfg.max_per_mechanism * 2 {
                if made == cfg.max_per_mechanism {
                    break;
                }
                let Some(t2) = draw_other(&mut rng, targets, &pos.target) else {
                    break;
                };
                match g.generate(&pos.context, t2, derive_seed(cfg.seed ^ i as u64, attempt as u64)) {
                    Ok(r2) if r2 != pos.response => {
                        out.push(pos.with_field(Field::Response, r2, Provenance::GenRandomTarget));
                        made += 1;
                    }
                    Ok(_) => {}
                    Err(e) => log::warn!("instance {i}: {e}"),
                }
            }
        }
        if enabled(Mechanism::SameTargetOtherContext) {
            let mut others: Vec<&LabeledTriple> = gold
                .iter()
                .filter(|o| o.target == pos.target && o.context != pos.context && o.response != pos.response)
                .collect();
            others.shuffle(&mut rng);
            for o in others.into_iter().take(cfg.max_per_mechanism) {
                out.push(pos.with_field(Field::Response, o.response.clone(), Provenance::SameTargetOtherContext));
            }
        }
    }
    Ok(out)
}

/// Equalizes labels: positives are repeated cyclically (as REPEAT_POSITIVE)
/// until they match the negatives, or truncated when they outnumber them.
/// The result is shuffled with `seed`.
pub fn balance(labeled: &[LabeledTriple], seed: u64) -> Result<Vec<LabeledTriple>, TcError> {
    let (mut pos, neg): (Vec<LabeledTriple>, Vec<LabeledTriple>) =
        labeled.iter().cloned().partition(|t| t.label == Label::Positive);
    if pos.is_empty() {
        return Err(TcError::NoPositives);
    }
    let p = pos.len();
    if p > neg.len() {
        pos.truncate(neg.len());
    }
    for k in 0..neg.len().saturating_sub(p) {
        let mut extra = pos[k % p].clone();
        extra.provenance = Provenance::RepeatPositive;
        pos.push(extra);
    }
    let mut out = pos;
    out.extend(neg);
    out.shuffle(&mut rng_from_seed(seed));
    Ok(out)
}

fn token_set(text: &str) -> HashSet<String> {
    content_tokens(text).into_iter().collect()
}

/// Lexical stand-in for a trained coherence classifier.
///
/// With content-token sets R, C, T: `a = (|R∩C| + ½) / (|R| + ½)` and
/// `b = (|R∩T| + ½) / (|R| + ½)`; the score is `HM(a, b)` times
/// `(1 - |R∩T|/|T|) · (1 - (|R∩C|/|C|)²)`, and 0 when R shares nothing
/// with either side.
pub fn reference_scorer(context: &str, response: &str, target: &str) -> f64 {
    let r = token_set(response);
    let c = token_set(context);
    let t = token_set(target);
    let rc = r.intersection(&c).count() as f64;
    let rt = r.intersection(&t).count() as f64;
    if r.is_empty() || (rc == 0.0 && rt == 0.0) {
        return 0.0;
    }
    let n = r.len() as f64 + 0.5;
    let a = (rc + 0.5) / n;
    let b = (rt + 0.5) / n;
    let hm = 2.0 * a * b / (a + b);
    let copy = |k: f64, x: &HashSet<String>| if x.is_empty() { 0.0 } else { k / x.len() as f64 };
    let penalty = (1.0 - copy(rt, &t)) * (1.0 - copy(rc, &c).powi(2));
    (hm * penalty).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ReferenceScorer;

impl Scorer for ReferenceScorer {
    fn score(&self, context: &str, response: &str, target: &str) -> Result<f64, ScorerError> {
        Ok(reference_scorer(context, response, target))
    }
}
