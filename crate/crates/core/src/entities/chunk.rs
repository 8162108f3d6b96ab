//! Tag-pattern chunking over POS-tagged tokens.
//!
//! A grammar is written `{<A|B>*<C.*>}`: a sequence of tag atoms, each a
//! regular expression over whole tags with an optional `*`, `+` or `?`
//! quantifier. Matching is greedy with backtracking; chunks are the
//! leftmost non-overlapping matches scanning left to right.

use regex::Regex;
use thiserror::Error;

pub const NP_GRAMMAR: &str = "{<NN.*|JJ>*<NN.*>}";
pub const VP_GRAMMAR: &str = "{<RB.?>*<VB.?>*<JJ>*<VB.?>+<VB>?}";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GrammarError {
    #[error("grammar must be wrapped in braces: `{0}`")]
    Braces(String),
    #[error("malformed tag atom at byte {0}")]
    Atom(usize),
    #[error("bad tag regex `{0}`: {1}")]
    Regex(String, String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Quant {
    One,
    Star,
    Plus,
    Optional,
}

impl Quant {
    fn bounds(self) -> (usize, usize) {
        match self {
            Quant::One => (1, 1),
            Quant::Star => (0, usize::MAX),
            Quant::Plus => (1, usize::MAX),
            Quant::Optional => (0, 1),
        }
    }
}

#[derive(Clone, Debug)]
struct Atom {
    tag: Regex,
    quant: Quant,
}

#[derive(Clone, Debug)]
pub struct TagPattern {
    source: String,
    atoms: Vec<Atom>,
}

impl TagPattern {
    pub fn parse(grammar: &str) -> Result<Self, GrammarError> {
        let g = grammar.trim();
        let inner = g
            .strip_prefix('{')
            .and_then(|s| s.strip_suffix('}'))
            .ok_or_else(|| GrammarError::Braces(grammar.to_string()))?;
        let bytes = inner.as_bytes();
        let mut atoms = Vec::new();
        let mut i = 0;
        while i < bytes.len() {
            if bytes[i].is_ascii_whitespace() {
                i += 1;
                continue;
            }
            if bytes[i] != b'<' {
                return Err(GrammarError::Atom(i));
            }
            let close = inner[i..].find('>').ok_or(GrammarError::Atom(i))? + i;
            let body = &inner[i + 1..close];
            if body.is_empty() {
                return Err(GrammarError::Atom(i));
            }
            let tag = Regex::new(&format!("^(?:{body})$"))
                .map_err(|e| GrammarError::Regex(body.to_string(), e.to_string()))?;
            i = close + 1;
            let quant = match bytes.get(i) {
                Some(b'*') => Quant::Star,
                Some(b'+') => Quant::Plus,
                Some(b'?') => Quant::Optional,
                _ => Quant::One,
            };
            if quant != Quant::One {
                i += 1;
            }
            atoms.push(Atom { tag, quant });
        }
        if atoms.is_empty() {
            return Err(GrammarError::Atom(0));
        }
        Ok(TagPattern {
            source: grammar.to_string(),
            atoms,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    fn match_from(&self, atom: usize, tags: &[&str], pos: usize) -> Option<usize> {
        let Some(a) = self.atoms.get(atom) else {
            return Some(pos);
        };
        let (min, max) = a.quant.bounds();
        let mut run = 0;
        while run < max && pos + run < tags.len() && a.tag.is_match(tags[pos + run]) {
            run += 1;
        }
        if run < min {
            return None;
        }
        (min..=run).rev().find_map(|n| self.match_from(atom + 1, tags, pos + n))
    }

    /// End (exclusive) of the greedy match starting at `start`, if any.
    pub fn match_at(&self, tags: &[&str], start: usize) -> Option<usize> {
        self.match_from(0, tags, start)
    }

    /// Leftmost non-overlapping non-empty matches as `(start, end)` spans.
    pub fn find_all(&self, tags: &[&str]) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < tags.len() {
            match self.match_at(tags, i) {
                Some(end) if end > i => {
                    out.push((i, end));
                    i = end;
                }
                _ => i += 1,
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChunkKind {
    Noun,
    Verb,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Chunk {
    pub kind: ChunkKind,
    pub start: usize,
    pub end: usize,
}

/// Noun-phrase chunks first, then verb-phrase chunks within the gaps the
/// noun phrases leave. Output is sorted by start.
pub fn chunk_tags(np: &TagPattern, vp: &TagPattern, tags: &[&str]) -> Vec<Chunk> {
    let mut chunks: Vec<Chunk> = np
        .find_all(tags)
        .into_iter()
        .map(|(start, end)| Chunk {
            kind: ChunkKind::Noun,
            start,
            end,
        })
        .collect();
    let mut gaps = Vec::new();
    let mut cursor = 0;
    for c in &chunks {
        if c.start > cursor {
            gaps.push((cursor, c.start));
        }
        cursor = c.end;
    }
    if cursor < tags.len() {
        gaps.push((cursor, tags.len()));
    }
    for (gs, ge) in gaps {
        for (s, e) in vp.find_all(&tags[gs..ge]) {
            chunks.push(Chunk {
                kind: ChunkKind::Verb,
                start: gs + s,
                end: gs + e,
            });
        }
    }
    chunks.sort_by_key(|c| c.start);
    chunks
}
