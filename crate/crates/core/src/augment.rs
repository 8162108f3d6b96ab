//! Turns free-flow dialogue into target-guided instances: the last SRL
//! clause of a response becomes the target, the preceding turns the context.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{SkipRecord, TransitionInstance};
use crate::scorer::Scorer;
use crate::text::{collapse_whitespace, words};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AugmentError {
    #[error("frame {frame}: span {start}..{end} lies outside the response ({len} chars)")]
    SpanOutOfRange {
        frame: usize,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("frame {frame}: span {start}..{end} reads `{actual}`, annotated as `{annotated}`")]
    SpanTextMismatch {
        frame: usize,
        start: usize,
        end: usize,
        annotated: String,
        actual: String,
    },
    #[error("frame {0}: empty predicate")]
    EmptyPredicate(usize),
    #[error("invalid augment config: {0}")]
    Config(String),
}

/// Character-offset span (`start` inclusive, `end` exclusive). An empty
/// `text` skips the consistency check.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SrlSpan {
    #[serde(default)]
    pub text: String,
    pub start: usize,
    pub end: usize,
}

impl SrlSpan {
    pub fn new(text: &str, start: usize, end: usize) -> Self {
        SrlSpan {
            text: text.to_string(),
            start,
            end,
        }
    }

    /// Locates the first occurrence of `text` at or after char `from`.
    pub fn find(response: &str, text: &str, from: usize) -> Option<Self> {
        let byte_from = response.char_indices().nth(from).map_or(response.len(), |(b, _)| b);
        let b = response[byte_from..].find(text)? + byte_from;
        let start = response[..b].chars().count();
        Some(SrlSpan::new(text, start, start + text.chars().count()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SrlFrame {
    pub predicate: SrlSpan,
    #[serde(default)]
    pub arguments: Vec<SrlSpan>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub threshold: f64,
    pub max_history: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            threshold: 0.7,
            max_history: 2,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), AugmentError> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(AugmentError::Config(format!(
                "threshold {} is outside [0, 1]",
                self.threshold
            )));
        }
        Ok(())
    }
}

fn char_slice(s: &str, start: usize, end: usize) -> &str {
    let mut idx = s.char_indices().map(|(b, _)| b).chain(std::iter::once(s.len()));
    let b0 = idx.nth(start).unwrap_or(s.len());
    let b1 = if end > start {
        idx.nth(end - start - 1).unwrap_or(s.len())
    } else {
        b0
    };
    &s[b0..b1]
}

fn check_span(response: &str, len: usize, frame: usize, span: &SrlSpan) -> Result<(), AugmentError> {
    if span.start > span.end || span.end > len {
        return Err(AugmentError::SpanOutOfRange {
            frame,
            start: span.start,
            end: span.end,
            len,
        });
    }
    let actual = char_slice(response, span.start, span.end);
    if !span.text.is_empty() && collapse_whitespace(&span.text) != collapse_whitespace(actual) {
        return Err(AugmentError::SpanTextMismatch {
            frame,
            start: span.start,
            end: span.end,
            annotated: span.text.clone(),
            actual: actual.to_string(),
        });
    }
    Ok(())
}

/// Clause of the frame whose predicate starts last: predicate and arguments
/// in character order, overlapping spans merged. Terminal punctuation that
/// directly follows the clause is kept.
pub fn create_target(response: &str, frames: &[SrlFrame]) -> Result<Option<String>, AugmentError> {
    let len = response.chars().count();
    for (i, f) in frames.iter().enumerate() {
        check_span(response, len, i, &f.predicate)?;
        if f.predicate.start == f.predicate.end {
            return Err(AugmentError::EmptyPredicate(i));
        }
        for a in &f.arguments {
            check_span(response, len, i, a)?;
        }
    }
    // First frame wins among equal predicate offsets.
    let Some(frame) = frames.iter().rev().max_by_key(|f| f.predicate.start) else {
        return Ok(None);
    };
    let mut spans: Vec<(usize, usize)> = std::iter::once(&frame.predicate)
        .chain(&frame.arguments)
        .filter(|s| s.start < s.end)
        .map(|s| (s.start, s.end))
        .collect();
    spans.sort_unstable();
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for (s, e) in spans {
        match merged.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }
    let pieces: Vec<&str> = merged.iter().map(|&(s, e)| char_slice(response, s, e)).collect();
    let mut clause = collapse_whitespace(&pieces.join(" "));
    let end = merged.last().map_or(0, |m| m.1);
    let tail: String = response
        .chars()
        .skip(end)
        .take_while(|c| matches!(c, '.' | '!' | '?'))
        .collect();
    if !clause.ends_with(['.', '!', '?']) {
        clause.push_str(&tail);
    }
    Ok(Some(clause))
}

/// The last `max_history` utterances, order preserved.
pub fn truncate_history(dialogue: &[String], max_history: usize) -> Vec<String> {
    dialogue[dialogue.len().saturating_sub(max_history)..].to_vec()
}

/// One dialogue turn with SRL annotations on its response.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueRecord {
    /// Turns preceding the response, oldest first.
    pub dialogue: Vec<String>,
    pub response: String,
    #[serde(default)]
    pub frames: Vec<SrlFrame>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SkipReason {
    NoFrames,
    EmptyContext,
    TargetIsResponse,
    Invalid(AugmentError),
}

impl std::fmt::Display for SkipReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SkipReason::NoFrames => f.write_str("no SRL frames"),
            SkipReason::EmptyContext => f.write_str("empty context after history truncation"),
            SkipReason::TargetIsResponse => f.write_str("created target equals the whole response"),
            SkipReason::Invalid(e) => write!(f, "{e}"),
        }
    }
}

/// Builds the instance for one record, before scoring.
pub fn build_instance(record: &DialogueRecord, cfg: &AugmentConfig) -> Result<TransitionInstance, SkipReason> {
    let context: Vec<String> = truncate_history(&record.dialogue, cfg.max_history)
        .into_iter()
        .filter(|u| !u.trim().is_empty())
        .collect();
    if context.is_empty() {
        return Err(SkipReason::EmptyContext);
    }
    let target = create_target(&record.response, &record.frames)
        .map_err(SkipReason::Invalid)?
        .ok_or(SkipReason::NoFrames)?;
    if words(&target) == words(&record.response) {
        return Err(SkipReason::TargetIsResponse);
    }
    Ok(TransitionInstance {
        context,
        target,
        response: Some(record.response.clone()),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredInstance {
    #[serde(flatten)]
    pub instance: TransitionInstance,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreLog {
    pub index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub kept: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FilterOutcome {
    pub kept: Vec<ScoredInstance>,
    /// One entry per input instance.
    pub log: Vec<ScoreLog>,
}

/// Context utterances as one scorer field.
pub fn context_text(context: &[String]) -> String {
    context.join(" ")
}

/// Keeps instances scoring at least `cfg.threshold`. Scorer failures drop
/// the instance and are logged.
pub fn filter_augmented(instances: &[TransitionInstance], scorer: &dyn Scorer, cfg: &AugmentConfig) -> FilterOutcome {
    let triples: Vec<(String, String, String)> = instances
        .iter()
        .map(|i| {
            (
                context_text(&i.context),
                i.response.clone().unwrap_or_default(),
                i.target.clone(),
            )
        })
        .collect();
    let scores = scorer.score_batch(&triples);
    let mut out = FilterOutcome::default();
    for (index, (inst, s)) in instances.iter().zip(scores).enumerate() {
        match s {
            Ok(score) => {
                let kept = score >= cfg.threshold;
                if kept {
                    out.kept.push(ScoredInstance {
                        instance: inst.clone(),
                        score,
                    });
                }
                out.log.push(ScoreLog {
                    index,
                    score: Some(score),
                    error: None,
                    kept,
                });
            }
            Err(e) => out.log.push(ScoreLog {
                index,
                score: None,
                error: Some(format!("ScorerFailure({index}): {e}")),
                kept: false,
            }),
        }
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AugmentOutput {
    pub kept: Vec<ScoredInstance>,
    pub skipped: Vec<SkipRecord>,
    pub scores: Vec<ScoreLog>,
}

/// Full augmentation over dialogue records. Skip and score indices refer
/// to `records`.
pub fn augment_records(records: &[DialogueRecord], scorer: &dyn Scorer, cfg: &AugmentConfig) -> AugmentOutput {
    let mut built = Vec::new();
    let mut origin = Vec::new();
    let mut out = AugmentOutput::default();
    for (i, r) in records.iter().enumerate() {
        match build_instance(r, cfg) {
            Ok(inst) => {
                built.push(inst);
                origin.push(i);
            }
            Err(reason) => out.skipped.push(SkipRecord {
                index: i,
                reason: reason.to_string(),
            }),
        }
    }
    let filtered = filter_augmented(&built, scorer, cfg);
    out.kept = filtered.kept;
    out.scores = filtered
        .log
        .into_iter()
        .map(|mut l| {
            l.index = origin[l.index];
            l
        })
        .collect();
    out
}
