//! Commonsense graph store.
//!
//! Assertions arrive as `relation<TAB>head<TAB>tail` lines. Excluded relation
//! types are dropped first, then every kept edge gets an underscore-prefixed
//! inverse so walks can travel against edge direction. After loading, the
//! graph is an immutable CSR adjacency: concepts and relations are interned in
//! sorted order, so sorting edges by `(relation id, neighbor id)` is the same
//! as sorting by `(relation name, neighbor name)`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relation types dropped at load unless the caller overrides the list.
pub const DEFAULT_EXCLUDED_RELATIONS: [&str; 7] = [
    "RelatedTo",
    "Synonym",
    "Antonym",
    "DerivedFrom",
    "FormOf",
    "EtymologicallyDerivedFrom",
    "EtymologicallyRelatedTo",
];

const CACHE_MAGIC: &[u8; 4] = b"BPKG";
const CACHE_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConceptError {
    #[error("concept text is empty after normalization")]
    Empty,
    #[error("concept `{0}` collides with a reserved token")]
    Reserved(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RelationError {
    #[error("relation name is empty")]
    Empty,
    #[error("relation `{0}` must start with an ASCII uppercase letter and contain no whitespace")]
    BadName(String),
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("line {line_no}: expected 3 tab-separated fields, found {found}")]
    MalformedLine { line_no: usize, found: usize },
    #[error("line {line_no}: {source}")]
    BadConcept {
        line_no: usize,
        #[source]
        source: ConceptError,
    },
    #[error("line {line_no}: {source}")]
    BadRelation {
        line_no: usize,
        #[source]
        source: RelationError,
    },
    #[error("no edges survived filtering")]
    EmptyGraph,
    #[error("graph cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A normalized concept: lowercase words joined by underscores.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Concept(String);

impl Concept {
    /// Lowercases and collapses runs of whitespace or underscores into a
    /// single underscore.
    pub fn new(text: &str) -> Result<Self, ConceptError> {
        let lower = text.to_lowercase();
        let joined = lower
            .split(|c: char| c.is_whitespace() || c == '_')
            .filter(|w| !w.is_empty())
            .collect::<Vec<_>>()
            .join("_");
        if joined.is_empty() {
            return Err(ConceptError::Empty);
        }
        if joined.starts_with('[') || joined.starts_with('<') {
            return Err(ConceptError::Reserved(joined));
        }
        Ok(Concept(joined))
    }

    /// Storage form, e.g. `art_gallery`.
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Rendered form, e.g. `art gallery`.
    pub fn display_text(&self) -> String {
        self.0.replace('_', " ")
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.0.split('_')
    }
}

impl fmt::Display for Concept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for Concept {
    type Error = ConceptError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Concept::new(&value)
    }
}

impl From<Concept> for String {
    fn from(c: Concept) -> String {
        c.0
    }
}

/// A typed edge label. Inverse relations print with a leading underscore.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Relation {
    name: String,
    inverse: bool,
}

impl Relation {
    pub fn new(name: &str) -> Result<Self, RelationError> {
        if name.is_empty() {
            return Err(RelationError::Empty);
        }
        let first = name.chars().next().unwrap();
        if !first.is_ascii_uppercase() || name.chars().any(char::is_whitespace) {
            return Err(RelationError::BadName(name.to_string()));
        }
        Ok(Relation {
            name: name.to_string(),
            inverse: false,
        })
    }

    /// Parses a token, treating a leading underscore as the inverse marker.
    pub fn parse(token: &str) -> Result<Self, RelationError> {
        match token.strip_prefix('_') {
            Some(rest) => Ok(Relation::new(rest)?.inverse()),
            None => Relation::new(token),
        }
    }

    /// True for tokens shaped like relations (`IsA`, `_UsedFor`).
    pub fn looks_like_relation(token: &str) -> bool {
        let body = token.strip_prefix('_').unwrap_or(token);
        body.chars().next().is_some_and(|c| c.is_ascii_uppercase())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_inverse(&self) -> bool {
        self.inverse
    }

    pub fn inverse(&self) -> Relation {
        Relation {
            name: self.name.clone(),
            inverse: !self.inverse,
        }
    }

    pub fn token(&self) -> String {
        if self.inverse {
            format!("_{}", self.name)
        } else {
            self.name.clone()
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.inverse {
            f.write_str("_")?;
        }
        f.write_str(&self.name)
    }
}

impl TryFrom<String> for Relation {
    type Error = RelationError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Relation::parse(&value)
    }
}

impl From<Relation> for String {
    fn from(r: Relation) -> String {
        r.token()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphConfig {
    pub excluded_relations: BTreeSet<String>,
    pub synthesize_inverses: bool,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            excluded_relations: DEFAULT_EXCLUDED_RELATIONS.iter().map(|s| s.to_string()).collect(),
            synthesize_inverses: true,
        }
    }
}

impl GraphConfig {
    /// Replaces the exclusion list with one relation name per line.
    /// Blank lines and `#` comments are ignored.
    pub fn with_exclusions_from<R: BufRead>(mut self, reader: R) -> std::io::Result<Self> {
        let mut set = BTreeSet::new();
        for line in reader.lines() {
            let line = line?;
            let name = line.trim();
            if name.is_empty() || name.starts_with('#') {
                continue;
            }
            set.insert(name.to_string());
        }
        self.excluded_relations = set;
        Ok(self)
    }

    pub fn with_exclusion_file(self, path: &Path) -> std::io::Result<Self> {
        let file = std::fs::File::open(path)?;
        self.with_exclusions_from(std::io::BufReader::new(file))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConceptId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId(pub u16);

/// One outgoing adjacency entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub relation: RelationId,
    pub target: ConceptId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KnowledgeGraph {
    concepts: Vec<Concept>,
    index: HashMap<String, u32>,
    relations: Vec<Relation>,
    inverse_of: Vec<Option<u16>>,
    offsets: Vec<u64>,
    edges: Vec<Edge>,
    excluded: BTreeSet<String>,
}

impl KnowledgeGraph {
    /// A graph of concepts with no edges at all.
    pub fn isolated(concepts: impl IntoIterator<Item = Concept>) -> Self {
        let concepts: Vec<Concept> = concepts.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let index = concepts
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str().to_string(), i as u32))
            .collect();
        KnowledgeGraph {
            offsets: vec![0; concepts.len() + 1],
            concepts,
            index,
            relations: Vec::new(),
            inverse_of: Vec::new(),
            edges: Vec::new(),
            excluded: BTreeSet::new(),
        }
    }

    pub fn concept_count(&self) -> usize {
        self.concepts.len()
    }

    /// Directed edge count, inverses included.
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn concepts(&self) -> &[Concept] {
        &self.concepts
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn excluded_relations(&self) -> &BTreeSet<String> {
        &self.excluded
    }

    pub fn contains(&self, concept: &Concept) -> bool {
        self.index.contains_key(concept.as_str())
    }

    pub fn concept_id(&self, concept: &Concept) -> Option<ConceptId> {
        self.index.get(concept.as_str()).map(|&i| ConceptId(i))
    }

    pub fn concept(&self, id: ConceptId) -> &Concept {
        &self.concepts[id.0 as usize]
    }

    pub fn relation(&self, id: RelationId) -> &Relation {
        &self.relations[id.0 as usize]
    }

    pub fn relation_id(&self, relation: &Relation) -> Option<RelationId> {
        let token = relation.token();
        self.relations
            .binary_search_by(|r| r.token().as_str().cmp(token.as_str()))
            .ok()
            .map(|i| RelationId(i as u16))
    }

    pub fn inverse_relation(&self, id: RelationId) -> Option<RelationId> {
        self.inverse_of[id.0 as usize].map(RelationId)
    }

    /// Outgoing edges of `id`, sorted by relation name then neighbor.
    #[inline]
    pub fn edges_of(&self, id: ConceptId) -> &[Edge] {
        let i = id.0 as usize;
        &self.edges[self.offsets[i] as usize..self.offsets[i + 1] as usize]
    }

    #[inline]
    pub fn out_degree(&self, id: ConceptId) -> usize {
        let i = id.0 as usize;
        (self.offsets[i + 1] - self.offsets[i]) as usize
    }

    /// All outgoing edges of `concept`; empty when the concept is absent.
    pub fn neighbors(&self, concept: &Concept) -> Vec<(&Relation, &Concept)> {
        match self.concept_id(concept) {
            Some(id) => self
                .edges_of(id)
                .iter()
                .map(|e| (self.relation(e.relation), self.concept(e.target)))
                .collect(),
            None => Vec::new(),
        }
    }

    pub fn has_edge(&self, head: &Concept, relation: &Relation, tail: &Concept) -> bool {
        let (Some(h), Some(r), Some(t)) = (self.concept_id(head), self.relation_id(relation), self.concept_id(tail))
        else {
            return false;
        };
        self.edges_of(h).binary_search(&Edge { relation: r, target: t }).is_ok()
    }

    /// Iterates `(head, edge)` pairs over the whole graph.
    pub fn iter_edges(&self) -> impl Iterator<Item = (ConceptId, Edge)> + '_ {
        (0..self.concepts.len()).flat_map(move |i| {
            let id = ConceptId(i as u32);
            self.edges_of(id).iter().map(move |e| (id, *e))
        })
    }

    /// Serializes to the versioned binary cache format.
    pub fn write_cache<W: Write>(&self, mut w: W) -> Result<(), GraphError> {
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&CACHE_VERSION.to_le_bytes())?;
        write_strings(&mut w, self.excluded.iter().map(String::as_str))?;
        write_strings(&mut w, self.concepts.iter().map(Concept::as_str))?;
        let tokens: Vec<String> = self.relations.iter().map(Relation::token).collect();
        write_strings(&mut w, tokens.iter().map(String::as_str))?;
        w.write_all(&(self.edges.len() as u64).to_le_bytes())?;
        for off in &self.offsets {
            w.write_all(&off.to_le_bytes())?;
        }
        for e in &self.edges {
            w.write_all(&e.relation.0.to_le_bytes())?;
            w.write_all(&e.target.0.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_cache<R: Read>(mut r: R) -> Result<Self, GraphError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(GraphError::Cache("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != CACHE_VERSION {
            return Err(GraphError::Cache(format!(
                "unsupported version {version} (expected {CACHE_VERSION})"
            )));
        }
        let excluded: BTreeSet<String> = read_strings(&mut r)?.into_iter().collect();
        let concepts = read_strings(&mut r)?
            .into_iter()
            .map(|s| Concept::new(&s).map_err(|e| GraphError::Cache(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let relations = read_strings(&mut r)?
            .into_iter()
            .map(|s| Relation::parse(&s).map_err(|e| GraphError::Cache(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let edge_count = read_u64(&mut r)? as usize;
        let mut offsets = Vec::with_capacity(concepts.len() + 1);
        for _ in 0..=concepts.len() {
            offsets.push(read_u64(&mut r)?);
        }
        if offsets.last().copied() != Some(edge_count as u64) {
            return Err(GraphError::Cache("offset table does not match edge count".into()));
        }
        let mut edges = Vec::with_capacity(edge_count);
        let mut b2 = [0u8; 2];
        let mut b4 = [0u8; 4];
        for _ in 0..edge_count {
            r.read_exact(&mut b2)?;
            r.read_exact(&mut b4)?;
            let e = Edge {
                relation: RelationId(u16::from_le_bytes(b2)),
                target: ConceptId(u32::from_le_bytes(b4)),
            };
            if e.relation.0 as usize >= relations.len() || e.target.0 as usize >= concepts.len() {
                return Err(GraphError::Cache("edge references unknown id".into()));
            }
            edges.push(e);
        }
        let index = concepts
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str().to_string(), i as u32))
            .collect();
        let inverse_of = inverse_table(&relations);
        Ok(KnowledgeGraph {
            concepts,
            index,
            relations,
            inverse_of,
            offsets,
            edges,
            excluded,
        })
    }
}

fn inverse_table(relations: &[Relation]) -> Vec<Option<u16>> {
    let by_token: HashMap<String, u16> = relations
        .iter()
        .enumerate()
        .map(|(i, r)| (r.token(), i as u16))
        .collect();
    relations
        .iter()
        .map(|r| by_token.get(&r.inverse().token()).copied())
        .collect()
}

fn write_strings<'a, W: Write>(w: &mut W, items: impl ExactSizeIterator<Item = &'a str>) -> std::io::Result<()> {
    w.write_all(&(items.len() as u64).to_le_bytes())?;
    for s in items {
        w.write_all(&(s.len() as u32).to_le_bytes())?;
        w.write_all(s.as_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_strings<R: Read>(r: &mut R) -> Result<Vec<String>, GraphError> {
    let n = read_u64(r)? as usize;
    let mut out = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let len = read_u32(r)? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)?;
        out.push(String::from_utf8(buf).map_err(|e| GraphError::Cache(e.to_string()))?);
    }
    Ok(out)
}

/// Builds a graph from an assertions stream.
pub fn load_graph<R: BufRead>(reader: R, config: &GraphConfig) -> Result<KnowledgeGraph, GraphError> {
    // Temporary interning in first-seen order; remapped to sorted ids below.
    let mut concept_ids: HashMap<String, u32> = HashMap::new();
    let mut concept_names: Vec<String> = Vec::new();
    let mut relation_ids: HashMap<String, u16> = HashMap::new();
    let mut relation_names: Vec<String> = Vec::new();
    let mut triples: Vec<(u32, u16, u32)> = Vec::new();

    let mut intern_concept = |name: String| -> u32 {
        if let Some(&id) = concept_ids.get(&name) {
            return id;
        }
        let id = concept_names.len() as u32;
        concept_ids.insert(name.clone(), id);
        concept_names.push(name);
        id
    };

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(GraphError::MalformedLine {
                line_no,
                found: fields.len(),
            });
        }
        let relation =
            Relation::parse(fields[0].trim()).map_err(|source| GraphError::BadRelation { line_no, source })?;
        let head = Concept::new(fields[1]).map_err(|source| GraphError::BadConcept { line_no, source })?;
        let tail = Concept::new(fields[2]).map_err(|source| GraphError::BadConcept { line_no, source })?;
        // An inverse-marked input line is the forward edge read backwards.
        let (head, tail) = if relation.is_inverse() {
            (tail, head)
        } else {
            (head, tail)
        };
        if config.excluded_relations.contains(relation.name()) || head == tail {
            continue;
        }
        let rel = match relation_ids.get(relation.name()) {
            Some(&r) => r,
            None => {
                if relation_names.len() >= (u16::MAX / 2) as usize {
                    return Err(GraphError::BadRelation {
                        line_no,
                        source: RelationError::BadName("too many relation types".into()),
                    });
                }
                let r = relation_names.len() as u16;
                relation_ids.insert(relation.name().to_string(), r);
                relation_names.push(relation.name().to_string());
                r
            }
        };
        let h = intern_concept(head.0);
        let t = intern_concept(tail.0);
        triples.push((h, rel, t));
    }

    if triples.is_empty() {
        return Err(GraphError::EmptyGraph);
    }

    // Sorted concept ids.
    let mut order: Vec<u32> = (0..concept_names.len() as u32).collect();
    order.sort_unstable_by(|&a, &b| concept_names[a as usize].cmp(&concept_names[b as usize]));
    let mut concept_remap = vec![0u32; concept_names.len()];
    for (new, &old) in order.iter().enumerate() {
        concept_remap[old as usize] = new as u32;
    }
    let concepts: Vec<Concept> = order
        .iter()
        .map(|&old| Concept(std::mem::take(&mut concept_names[old as usize])))
        .collect();

    // Sorted relation tokens, forward and inverse.
    let mut tokens: Vec<Relation> = Vec::new();
    for name in &relation_names {
        let fwd = Relation {
            name: name.clone(),
            inverse: false,
        };
        if config.synthesize_inverses {
            tokens.push(fwd.inverse());
        }
        tokens.push(fwd);
    }
    tokens.sort_by_key(|r| r.token());
    let token_index: HashMap<String, u16> = tokens.iter().enumerate().map(|(i, r)| (r.token(), i as u16)).collect();
    let forward_remap: Vec<u16> = relation_names.iter().map(|n| token_index[n]).collect();
    let inverse_remap: Vec<u16> = relation_names
        .iter()
        .map(|n| token_index.get(&format!("_{n}")).copied().unwrap_or(u16::MAX))
        .collect();

    let mut directed: Vec<(u32, u16, u32)> =
        Vec::with_capacity(triples.len() * if config.synthesize_inverses { 2 } else { 1 });
    for &(h, r, t) in &triples {
        let (h, t) = (concept_remap[h as usize], concept_remap[t as usize]);
        directed.push((h, forward_remap[r as usize], t));
        if config.synthesize_inverses {
            directed.push((t, inverse_remap[r as usize], h));
        }
    }
    drop(triples);
    directed.sort_unstable();
    directed.dedup();

    let mut offsets = vec![0u64; concepts.len() + 1];
    for &(h, _, _) in &directed {
        offsets[h as usize + 1] += 1;
    }
    for i in 0..concepts.len() {
        offsets[i + 1] += offsets[i];
    }
    let edges: Vec<Edge> = directed
        .into_iter()
        .map(|(_, r, t)| Edge {
            relation: RelationId(r),
            target: ConceptId(t),
        })
        .collect();

    let index = concepts
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str().to_string(), i as u32))
        .collect();
    let inverse_of = inverse_table(&tokens);
    Ok(KnowledgeGraph {
        concepts,
        index,
        relations: tokens,
        inverse_of,
        offsets,
        edges,
        excluded: config.excluded_relations.clone(),
    })
}

/// Convenience wrapper over [`load_graph`] for a file path.
pub fn load_graph_file(path: &Path, config: &GraphConfig) -> Result<KnowledgeGraph, GraphError> {
    let file = std::fs::File::open(path)?;
    load_graph(std::io::BufReader::new(file), config)
}
