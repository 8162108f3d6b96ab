//! Entity extraction from tagged sentences and IDF-based pair selection.
//!
//! Extraction chunks noun phrases with [`chunk::NP_GRAMMAR`] and verb phrases
//! with [`chunk::VP_GRAMMAR`], then normalizes each chunk:
//!
//! - determiners and pronouns are dropped, verbs are lemmatized and adverbs
//!   removed from verb phrases;
//! - a leading auxiliary is dropped when another verb follows it, and verb
//!   phrases made only of auxiliaries are discarded;
//! - with a concept vocabulary, a verb phrase directly followed (up to
//!   determiners) by a noun phrase is merged when some surface variant of
//!   the merge is a known concept, and otherwise each chunk prefers its first
//!   known variant (number variants of the last word, then shorter trailing
//!   sub-phrases).
//!
//! Stop entities are removed last and duplicates keep their first position.

pub mod chunk;
pub mod idf;
pub mod lemma;
pub mod tagger;

use std::collections::{BTreeSet, HashSet};

use crate::kg::{Concept, KnowledgeGraph};
use crate::pathlm::PathModel;
use chunk::{chunk_tags, Chunk, ChunkKind, TagPattern, NP_GRAMMAR, VP_GRAMMAR};
pub use idf::{build_idf, score_pairs, select_pairs, IdfTable, PairError, PairSide, Phase, ScoredPair};
use lemma::{is_auxiliary, lemmatize_verb, plural, singular};
pub use tagger::{CommandTagger, LexiconTagger, TagError, TaggedSentence, Tagger};

pub const DEFAULT_STOP_ENTITIES: &[&str] = &["today", "enough"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntitySource {
    Context,
    Target,
    Response,
}

/// Ordered, duplicate-free entities from one text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntitySet {
    pub entities: Vec<Concept>,
    pub source: EntitySource,
}

impl EntitySet {
    pub fn new(source: EntitySource) -> Self {
        EntitySet {
            entities: Vec::new(),
            source,
        }
    }

    /// Appends unless already present.
    pub fn push(&mut self, entity: Concept) -> bool {
        if self.entities.contains(&entity) {
            return false;
        }
        self.entities.push(entity);
        true
    }

    pub fn extend(&mut self, other: &EntitySet) {
        for e in &other.entities {
            self.push(e.clone());
        }
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn contains(&self, entity: &Concept) -> bool {
        self.entities.contains(entity)
    }
}

/// Membership test for concept names in storage form (`watch_stars`).
pub trait ConceptVocab {
    fn has_concept(&self, concept: &str) -> bool;
}

impl ConceptVocab for HashSet<String> {
    fn has_concept(&self, concept: &str) -> bool {
        self.contains(concept)
    }
}

impl ConceptVocab for BTreeSet<String> {
    fn has_concept(&self, concept: &str) -> bool {
        self.contains(concept)
    }
}

impl ConceptVocab for KnowledgeGraph {
    fn has_concept(&self, concept: &str) -> bool {
        Concept::new(concept).is_ok_and(|c| self.contains(&c))
    }
}

impl ConceptVocab for PathModel {
    fn has_concept(&self, concept: &str) -> bool {
        self.contains_concept(concept)
    }
}

#[derive(Clone, Debug)]
pub struct Extractor {
    np: TagPattern,
    vp: TagPattern,
    stop: HashSet<String>,
}

impl Default for Extractor {
    fn default() -> Self {
        Extractor {
            np: TagPattern::parse(NP_GRAMMAR).expect("built-in grammar"),
            vp: TagPattern::parse(VP_GRAMMAR).expect("built-in grammar"),
            stop: DEFAULT_STOP_ENTITIES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

struct Phrase {
    words: Vec<String>,
    // Alternatives for the last word (surface first).
    last_forms: Vec<String>,
}

impl Phrase {
    fn default_form(&self) -> String {
        self.words.join("_")
    }

    /// Variants in preference order: the full phrase with each last-word
    /// form, then the same for each shorter trailing sub-phrase.
    fn variants(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.words.len();
        for start in 0..n {
            for form in &self.last_forms {
                let mut w: Vec<&str> = self.words[start..n - 1].iter().map(String::as_str).collect();
                w.push(form);
                let v = w.join("_");
                if !out.contains(&v) {
                    out.push(v);
                }
            }
        }
        out
    }
}

fn is_function_tag(tag: &str) -> bool {
    matches!(tag, "DT" | "PDT" | "PRP" | "PRP$" | "WDT" | "WP" | "WP$" | "POS")
}

impl Extractor {
    pub fn with_grammars(np: &str, vp: &str) -> Result<Self, chunk::GrammarError> {
        Ok(Extractor {
            np: TagPattern::parse(np)?,
            vp: TagPattern::parse(vp)?,
            ..Extractor::default()
        })
    }

    pub fn add_stop_entities<I, S>(&mut self, items: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        for s in items {
            if let Ok(c) = Concept::new(s.as_ref()) {
                self.stop.insert(c.as_str().to_string());
            }
        }
    }

    pub fn is_stop(&self, entity: &Concept) -> bool {
        self.stop.contains(entity.as_str())
    }

    fn phrase(&self, sentence: &TaggedSentence, chunk: &Chunk) -> Option<Phrase> {
        let toks: Vec<(String, &str)> = sentence.tokens[chunk.start..chunk.end]
            .iter()
            .filter(|(_, t)| !is_function_tag(t))
            .map(|(s, t)| (s.to_lowercase(), t.as_str()))
            .collect();
        match chunk.kind {
            ChunkKind::Noun => {
                let words: Vec<String> = toks.into_iter().map(|(s, _)| s).collect();
                let last = words.last()?.clone();
                let mut last_forms = vec![last.clone(), singular(&last), plural(&last)];
                last_forms.dedup();
                Some(Phrase { words, last_forms })
            }
            ChunkKind::Verb => {
                let mut items: Vec<(String, bool)> = toks
                    .into_iter()
                    .filter(|(_, t)| !t.starts_with("RB"))
                    .map(|(s, t)| {
                        if t.starts_with("VB") {
                            (lemmatize_verb(&s, t), true)
                        } else {
                            (s, false)
                        }
                    })
                    .collect();
                while items.len() > 1 && items[0].1 && is_auxiliary(&items[0].0) && items[1..].iter().any(|(_, v)| *v) {
                    items.remove(0);
                }
                if items.iter().filter(|(_, v)| *v).all(|(w, _)| is_auxiliary(w)) {
                    return None;
                }
                let words: Vec<String> = items.into_iter().map(|(w, _)| w).collect();
                let last = words.last()?.clone();
                Some(Phrase {
                    words,
                    last_forms: vec![last],
                })
            }
        }
    }

    fn merged(&self, verb: &Phrase, noun: &Phrase, vocab: &dyn ConceptVocab) -> Option<String> {
        let prefix = verb.words.join("_");
        noun.variants()
            .into_iter()
            .map(|n| format!("{prefix}_{n}"))
            .find(|v| vocab.has_concept(v))
    }

    /// Entities of `sentence`, in order of appearance.
    pub fn extract(
        &self,
        sentence: &TaggedSentence,
        kg_vocab: Option<&dyn ConceptVocab>,
        source: EntitySource,
    ) -> EntitySet {
        let tags = sentence.tags();
        let chunks = chunk_tags(&self.np, &self.vp, &tags);
        let phrases: Vec<Option<Phrase>> = chunks.iter().map(|c| self.phrase(sentence, c)).collect();
        let mut names: Vec<String> = Vec::new();
        let mut i = 0;
        while i < chunks.len() {
            let Some(p) = &phrases[i] else {
                i += 1;
                continue;
            };
            if let (Some(vocab), ChunkKind::Verb) = (kg_vocab, chunks[i].kind) {
                if let Some(Some(next)) = phrases.get(i + 1) {
                    let n = &chunks[i + 1];
                    let bridged = n.kind == ChunkKind::Noun
                        && tags[chunks[i].end..n.start].iter().all(|t| matches!(*t, "DT" | "PRP$"));
                    if bridged {
                        if let Some(m) = self.merged(p, next, vocab) {
                            names.push(m);
                            i += 2;
                            continue;
                        }
                    }
                }
            }
            let name = kg_vocab
                .and_then(|v| p.variants().into_iter().find(|x| v.has_concept(x)))
                .unwrap_or_else(|| p.default_form());
            names.push(name);
            i += 1;
        }
        let mut set = EntitySet::new(source);
        for n in names {
            if let Ok(c) = Concept::new(&n) {
                if !self.is_stop(&c) {
                    set.push(c);
                }
            }
        }
        set
    }
}

/// [`Extractor::extract`] with the default grammars and stop list.
pub fn extract_entities(sentence: &TaggedSentence, kg_vocab: Option<&dyn ConceptVocab>) -> EntitySet {
    Extractor::default().extract(sentence, kg_vocab, EntitySource::Context)
}
