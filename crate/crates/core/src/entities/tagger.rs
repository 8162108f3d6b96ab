//! POS-tagged input and the tagger contract.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::process::{Command, Stdio};

use thiserror::Error;

use crate::text::split_punct;

#[derive(Debug, Error)]
pub enum TagError {
    #[error("token {position} (`{token}`) is not of the form surface/TAG")]
    Malformed { position: usize, token: String },
    #[error("tagger command: {0}")]
    Command(String),
    #[error("lexicon line {line_no}: {reason}")]
    Lexicon { line_no: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct TaggedSentence {
    pub tokens: Vec<(String, String)>,
}

impl TaggedSentence {
    pub fn new(tokens: Vec<(String, String)>) -> Self {
        TaggedSentence {
            tokens: tokens.into_iter().map(|(s, t)| (s, t.to_ascii_uppercase())).collect(),
        }
    }

    /// Parses space-separated `surface/TAG` tokens; the tag follows the last `/`.
    pub fn parse(line: &str) -> Result<Self, TagError> {
        let mut tokens = Vec::new();
        for (i, tok) in line.split_whitespace().enumerate() {
            let malformed = || TagError::Malformed {
                position: i,
                token: tok.to_string(),
            };
            let (surface, tag) = tok.rsplit_once('/').ok_or_else(malformed)?;
            if surface.is_empty() || tag.is_empty() {
                return Err(malformed());
            }
            tokens.push((surface.to_string(), tag.to_ascii_uppercase()));
        }
        Ok(TaggedSentence { tokens })
    }

    pub fn tags(&self) -> Vec<&str> {
        self.tokens.iter().map(|(_, t)| t.as_str()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl std::fmt::Display for TaggedSentence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.tokens.iter().map(|(s, t)| format!("{s}/{t}")).collect();
        f.write_str(&parts.join(" "))
    }
}

pub trait Tagger: Sync {
    fn tag(&self, sentence: &str) -> Result<TaggedSentence, TagError>;
}

const BUILTIN_LEXICON: &[(&str, &str)] = &[
    ("a", "DT"),
    ("an", "DT"),
    ("the", "DT"),
    ("this", "DT"),
    ("that", "DT"),
    ("these", "DT"),
    ("those", "DT"),
    ("every", "DT"),
    ("some", "DT"),
    ("any", "DT"),
    ("i", "PRP"),
    ("you", "PRP"),
    ("he", "PRP"),
    ("she", "PRP"),
    ("it", "PRP"),
    ("we", "PRP"),
    ("they", "PRP"),
    ("me", "PRP"),
    ("him", "PRP"),
    ("her", "PRP$"),
    ("us", "PRP"),
    ("them", "PRP"),
    ("my", "PRP$"),
    ("your", "PRP$"),
    ("his", "PRP$"),
    ("its", "PRP$"),
    ("our", "PRP$"),
    ("their", "PRP$"),
    ("in", "IN"),
    ("on", "IN"),
    ("at", "IN"),
    ("of", "IN"),
    ("for", "IN"),
    ("with", "IN"),
    ("from", "IN"),
    ("by", "IN"),
    ("about", "IN"),
    ("along", "IN"),
    ("into", "IN"),
    ("near", "IN"),
    ("to", "TO"),
    ("and", "CC"),
    ("or", "CC"),
    ("but", "CC"),
    ("not", "RB"),
    ("very", "RB"),
    ("really", "RB"),
    ("now", "RB"),
    ("here", "RB"),
    ("there", "EX"),
    ("also", "RB"),
    ("too", "RB"),
    ("today", "NN"),
    ("enough", "RB"),
    ("can", "MD"),
    ("will", "MD"),
    ("would", "MD"),
    ("should", "MD"),
    ("could", "MD"),
    ("is", "VBZ"),
    ("am", "VBP"),
    ("are", "VBP"),
    ("was", "VBD"),
    ("were", "VBD"),
    ("be", "VB"),
    ("been", "VBN"),
    ("have", "VBP"),
    ("has", "VBZ"),
    ("had", "VBD"),
    ("do", "VBP"),
    ("does", "VBZ"),
    ("did", "VBD"),
    ("like", "VBP"),
    ("love", "VBP"),
    ("need", "VBP"),
    ("want", "VBP"),
    ("enjoy", "VBP"),
    ("run", "VBP"),
    ("try", "VB"),
    ("go", "VBP"),
    ("went", "VBD"),
    ("walk", "VBP"),
    ("walks", "VBZ"),
    ("drive", "VB"),
    ("eat", "VBP"),
    ("tastes", "VBZ"),
    ("called", "VBN"),
    ("trained", "VBD"),
    ("barks", "VBZ"),
    ("looks", "VBZ"),
    ("is", "VBZ"),
    ("big", "JJ"),
    ("red", "JJ"),
    ("nice", "JJ"),
    ("good", "JJ"),
    ("best", "JJS"),
    ("amazing", "JJ"),
    ("authentic", "JJ"),
    ("european", "JJ"),
    ("new", "JJ"),
    ("old", "JJ"),
    ("happy", "JJ"),
    ("little", "JJ"),
    ("fresh", "JJ"),
    ("no", "DT"),
    (".", "."),
    (",", ","),
    ("!", "."),
    ("?", "."),
];

/// Dictionary tagger with suffix fallbacks (`-ing` VBG, `-ed` VBD, `-ly` RB,
/// `-s` NNS, otherwise NN). Adequate for fixtures only.
#[derive(Clone, Debug)]
pub struct LexiconTagger {
    lexicon: HashMap<String, String>,
}

impl Default for LexiconTagger {
    fn default() -> Self {
        LexiconTagger {
            lexicon: BUILTIN_LEXICON
                .iter()
                .map(|(w, t)| (w.to_string(), t.to_string()))
                .collect(),
        }
    }
}

impl LexiconTagger {
    pub fn insert(&mut self, word: &str, tag: &str) {
        self.lexicon.insert(word.to_lowercase(), tag.to_ascii_uppercase());
    }

    /// Adds `word<TAB>TAG` lines over the built-in lexicon.
    pub fn extend_from_reader<R: BufRead>(&mut self, reader: R) -> Result<(), TagError> {
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (w, t) = line.split_once('\t').ok_or_else(|| TagError::Lexicon {
                line_no: i + 1,
                reason: "expected word<TAB>TAG".into(),
            })?;
            self.insert(w.trim(), t.trim());
        }
        Ok(())
    }

    fn tag_word(&self, w: &str) -> String {
        if let Some(t) = self.lexicon.get(w) {
            return t.clone();
        }
        if !w.chars().any(char::is_alphanumeric) {
            return ".".into();
        }
        if w.chars().all(|c| c.is_ascii_digit()) {
            return "CD".into();
        }
        let tag = if w.len() > 4 && w.ends_with("ing") {
            "VBG"
        } else if w.len() > 3 && w.ends_with("ed") {
            "VBD"
        } else if w.len() > 3 && w.ends_with("ly") {
            "RB"
        } else if w.len() > 3 && w.ends_with('s') && !w.ends_with("ss") {
            "NNS"
        } else {
            "NN"
        };
        tag.into()
    }
}

impl Tagger for LexiconTagger {
    fn tag(&self, sentence: &str) -> Result<TaggedSentence, TagError> {
        Ok(TaggedSentence {
            tokens: split_punct(sentence)
                .into_iter()
                .map(|w| {
                    let t = self.tag_word(&w);
                    (w, t)
                })
                .collect(),
        })
    }
}

/// Runs an external tagger once per sentence: the sentence goes to stdin,
/// one `surface/TAG` line is read back.
#[derive(Clone, Debug)]
pub struct CommandTagger {
    pub program: String,
    pub args: Vec<String>,
}

impl Tagger for CommandTagger {
    fn tag(&self, sentence: &str) -> Result<TaggedSentence, TagError> {
        let err = |e: std::io::Error| TagError::Command(format!("{}: {e}", self.program));
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(err)?;
        {
            let mut stdin = child.stdin.take().expect("stdin is piped");
            writeln!(stdin, "{sentence}").map_err(err)?;
        }
        let out = child.wait_with_output().map_err(err)?;
        if !out.status.success() {
            return Err(TagError::Command(format!(
                "{} exited with {}",
                self.program, out.status
            )));
        }
        let text = String::from_utf8_lossy(&out.stdout);
        TaggedSentence::parse(text.lines().next().unwrap_or(""))
    }
}
