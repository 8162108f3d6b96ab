//! Path sequence layouts.
//!
//! ```text
//! HT:      [target] n_t [sep] n_h e_0 n_1 ... n_t
//! WC:      [wc] k1 [wc] k2 ... [target] n_t [sep] n_h e_0 n_1 ... n_t
//! ONEENT:  [wc] k [target] n_t [sep] n_h e_0 n_1 ... n_t
//! ```

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::kg::{Concept, Relation};
use crate::path::KnowledgePath;

pub const TARGET_TOKEN: &str = "[target]";
pub const SEP_TOKEN: &str = "[sep]";
pub const WC_TOKEN: &str = "[wc]";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SequenceError {
    #[error("entity `{0}` is not an intermediate node of the path")]
    EntityNotOnPath(Concept),
    #[error("one-entity sequences take exactly one entity, got {0}")]
    OneEntityArity(usize),
    /// `position` indexes the last well-formed token before the break.
    #[error("parse error at token {position}: {reason}")]
    Parse { position: usize, reason: String },
    #[error("declared target `{declared}` but the path ends at `{found}`")]
    TargetMismatch { declared: Concept, found: Concept },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FormatMode {
    HeadTail,
    WillContain(Vec<Concept>),
    OneEntity(Concept),
}

/// A formatted path with its optional `[wc]` block.
///
/// HT and a WC block that happens to be empty print identically, so the
/// layout kind is derived from `required` rather than stored.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PathSequence {
    pub required: Vec<Concept>,
    pub path: KnowledgePath,
}

impl PathSequence {
    pub fn tokens(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.required.len() * 2 + 3 + self.path.hops() * 2 + 1);
        for k in &self.required {
            out.push(WC_TOKEN.to_string());
            out.push(k.as_str().to_string());
        }
        out.push(TARGET_TOKEN.to_string());
        out.push(self.path.tail().as_str().to_string());
        out.push(SEP_TOKEN.to_string());
        out.extend(self.path.tokens());
        out
    }

    pub fn text(&self) -> String {
        self.tokens().join(" ")
    }
}

impl fmt::Display for PathSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

/// Formats `path`. Unless `allow_off_path` is set, every `[wc]` entity must
/// be an intermediate node (the training-time contract).
pub fn format_sequence(
    path: &KnowledgePath,
    mode: &FormatMode,
    allow_off_path: bool,
) -> Result<PathSequence, SequenceError> {
    let required = match mode {
        FormatMode::HeadTail => Vec::new(),
        FormatMode::WillContain(list) => list.clone(),
        FormatMode::OneEntity(k) => vec![k.clone()],
    };
    if !allow_off_path {
        if let Some(missing) = required.iter().find(|k| !path.intermediates().contains(k)) {
            return Err(SequenceError::EntityNotOnPath(missing.clone()));
        }
    }
    Ok(PathSequence {
        required,
        path: path.clone(),
    })
}

/// Shorthand for the head-tail layout.
pub fn format_ht(path: &KnowledgePath) -> PathSequence {
    PathSequence {
        required: Vec::new(),
        path: path.clone(),
    }
}

/// Training layout: the `[wc]` block is a random permutation of all
/// intermediate nodes.
pub fn format_wc_training<R: Rng>(path: &KnowledgePath, rng: &mut R) -> PathSequence {
    let mut required = path.intermediates().to_vec();
    required.shuffle(rng);
    PathSequence {
        required,
        path: path.clone(),
    }
}

fn parse_err(position: usize, reason: impl Into<String>) -> SequenceError {
    SequenceError::Parse {
        position,
        reason: reason.into(),
    }
}

fn parse_concept(tokens: &[&str], i: usize) -> Result<Concept, SequenceError> {
    let tok = tokens
        .get(i)
        .ok_or_else(|| parse_err(i.saturating_sub(1), "expected a concept, found end of input"))?;
    if Relation::looks_like_relation(tok) || tok.starts_with('[') {
        return Err(parse_err(
            i.saturating_sub(1),
            format!("expected a concept, found `{tok}`"),
        ));
    }
    Concept::new(tok).map_err(|e| parse_err(i.saturating_sub(1), e.to_string()))
}

/// Parses a sequence back into its `[wc]` block and path.
pub fn parse_sequence(text: &str) -> Result<PathSequence, SequenceError> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let mut i = 0;
    let mut required = Vec::new();
    while tokens.get(i) == Some(&WC_TOKEN) {
        required.push(parse_concept(&tokens, i + 1)?);
        i += 2;
    }
    if tokens.get(i) != Some(&TARGET_TOKEN) {
        return Err(parse_err(i.saturating_sub(1), format!("expected `{TARGET_TOKEN}`")));
    }
    let declared = parse_concept(&tokens, i + 1)?;
    if tokens.get(i + 2) != Some(&SEP_TOKEN) {
        return Err(parse_err(i + 1, format!("expected `{SEP_TOKEN}`")));
    }
    i += 3;

    let mut nodes = vec![parse_concept(&tokens, i)?];
    let mut relations = Vec::new();
    i += 1;
    while i < tokens.len() {
        let tok = tokens[i];
        if !Relation::looks_like_relation(tok) {
            return Err(parse_err(i - 1, format!("expected a relation, found `{tok}`")));
        }
        let rel = Relation::parse(tok).map_err(|e| parse_err(i - 1, e.to_string()))?;
        if i + 1 >= tokens.len() {
            return Err(parse_err(i, "relation is not followed by a concept"));
        }
        nodes.push(parse_concept(&tokens, i + 1)?);
        relations.push(rel);
        i += 2;
    }
    if relations.is_empty() {
        return Err(parse_err(i - 1, "path body has no hops"));
    }
    let path = KnowledgePath::new(nodes, relations).map_err(|e| parse_err(i - 1, e.to_string()))?;
    if path.tail() != &declared {
        return Err(SequenceError::TargetMismatch {
            declared,
            found: path.tail().clone(),
        });
    }
    Ok(PathSequence { required, path })
}
