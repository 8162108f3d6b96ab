//! Path-to-sentence rendering via relation templates.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use thiserror::Error;

use crate::path::KnowledgePath;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("no template for relation `{0}`")]
    MissingTemplate(String),
    #[error("template line {line_no}: {reason}")]
    BadLine { line_no: usize, reason: String },
    #[error("relation `{0}` renders the same text forward and inverse")]
    NotDistinct(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// (relation, forward text, inverse text)
const DEFAULTS: &[(&str, &str, &str)] = &[
    ("AtLocation", "is at location", "is the location which has"),
    ("CapableOf", "capable of", "can be done by"),
    ("Causes", "causes", "is caused by"),
    ("CausesDesire", "causes desire", "is desired because of"),
    ("CreatedBy", "is created by", "creates"),
    ("DefinedAs", "is defined as", "is the definition of"),
    ("Desires", "desires", "is desired by"),
    ("DistinctFrom", "is distinct from", "is distinguished from"),
    ("Entails", "entails", "is entailed by"),
    ("HasA", "has a", "is part of"),
    ("HasContext", "has context", "is the context of"),
    ("HasFirstSubevent", "starts with", "is the first step of"),
    ("HasLastSubevent", "ends with", "is the last step of"),
    ("HasPrerequisite", "has prerequisite", "is a dependency of"),
    ("HasProperty", "has property", "is a property of"),
    ("HasSubevent", "has subevent", "is a subevent of"),
    ("InstanceOf", "is an instance of", "has instance"),
    ("IsA", "is a", "includes"),
    ("LocatedNear", "is located near", "is near"),
    ("MadeOf", "is made of", "is used to make"),
    ("MannerOf", "is a manner of", "can be done as"),
    ("MotivatedByGoal", "motivated by goal", "is a goal motivating"),
    ("NotCapableOf", "not capable of", "cannot be done by"),
    ("NotDesires", "not desires", "is not desired by"),
    ("NotHasProperty", "does not have property", "is not a property of"),
    ("ObstructedBy", "is obstructed by", "obstructs"),
    ("PartOf", "is part of", "has part"),
    ("ReceivesAction", "receives action", "is an action on"),
    ("SimilarTo", "is similar to", "is resembled by"),
    ("SymbolOf", "is a symbol of", "is symbolized by"),
    ("UsedFor", "is used for", "belongs to"),
    // Excluded from walks by default; present so overriding the exclusion
    // list does not break rendering.
    ("Antonym", "is the opposite of", "is opposed by"),
    ("DerivedFrom", "is derived from", "is the root of"),
    (
        "EtymologicallyDerivedFrom",
        "is etymologically derived from",
        "is the etymological root of",
    ),
    (
        "EtymologicallyRelatedTo",
        "is etymologically related to",
        "shares etymology with",
    ),
    ("FormOf", "is a form of", "has form"),
    ("RelatedTo", "is related to", "is associated with"),
    ("Synonym", "is a synonym of", "has synonym"),
];

/// Relation token (inverse with leading underscore) to surface text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationTemplateTable {
    templates: BTreeMap<String, String>,
}

impl Default for RelationTemplateTable {
    fn default() -> Self {
        let mut templates = BTreeMap::new();
        for (name, fwd, inv) in DEFAULTS {
            templates.insert(name.to_string(), fwd.to_string());
            templates.insert(format!("_{name}"), inv.to_string());
        }
        RelationTemplateTable { templates }
    }
}

impl RelationTemplateTable {
    pub fn empty() -> Self {
        RelationTemplateTable {
            templates: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, relation: &str, forward: &str, inverse: &str) -> Result<(), TemplateError> {
        if forward == inverse {
            return Err(TemplateError::NotDistinct(relation.to_string()));
        }
        let name = relation.trim_start_matches('_');
        self.templates.insert(name.to_string(), forward.to_string());
        self.templates.insert(format!("_{name}"), inverse.to_string());
        Ok(())
    }

    pub fn get(&self, relation_token: &str) -> Option<&str> {
        self.templates.get(relation_token).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    /// Relation names (forward form) covered by the table.
    pub fn relations(&self) -> impl Iterator<Item = &str> {
        self.templates
            .keys()
            .map(String::as_str)
            .filter(|k| !k.starts_with('_'))
    }

    /// Loads `relation<TAB>forward<TAB>inverse` lines over the defaults.
    /// Blank lines and `#` comments are skipped.
    pub fn extend_from_reader<R: BufRead>(&mut self, reader: R) -> Result<(), TemplateError> {
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
                return Err(TemplateError::BadLine {
                    line_no: i + 1,
                    reason: format!("expected 3 non-empty tab-separated fields, found {}", fields.len()),
                });
            }
            self.insert(fields[0], fields[1], fields[2])
                .map_err(|e| TemplateError::BadLine {
                    line_no: i + 1,
                    reason: e.to_string(),
                })?;
        }
        Ok(())
    }

    pub fn from_file_over_defaults(path: &Path) -> Result<Self, TemplateError> {
        let mut table = RelationTemplateTable::default();
        let file = std::fs::File::open(path)?;
        table.extend_from_reader(std::io::BufReader::new(file))?;
        Ok(table)
    }
}

/// Renders a path as a sentence: concepts with spaces, relations as template
/// text, single-space joined, no trailing punctuation.
pub fn render_text(path: &KnowledgePath, templates: &RelationTemplateTable) -> Result<String, TemplateError> {
    let mut out = path.head().display_text();
    for (rel, node) in path.relations().iter().zip(&path.nodes()[1..]) {
        let token = rel.token();
        let text = templates.get(&token).ok_or(TemplateError::MissingTemplate(token))?;
        out.push(' ');
        out.push_str(text);
        out.push(' ');
        out.push_str(&node.display_text());
    }
    Ok(out)
}
