use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use crate::kg::{Concept, KnowledgeGraph, Relation};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PathError {
    #[error("a path needs at least one hop")]
    NoHops,
    #[error("{nodes} nodes cannot alternate with {relations} relations")]
    Arity { nodes: usize, relations: usize },
    #[error("token {position} (`{token}`): expected a {expected}")]
    Token {
        position: usize,
        token: String,
        expected: &'static str,
    },
}

/// Alternating concept/relation sequence `n0 e0 n1 ... e(k-1) nk`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct KnowledgePath {
    nodes: Vec<Concept>,
    relations: Vec<Relation>,
}

impl KnowledgePath {
    pub fn new(nodes: Vec<Concept>, relations: Vec<Relation>) -> Result<Self, PathError> {
        if relations.is_empty() {
            return Err(PathError::NoHops);
        }
        if nodes.len() != relations.len() + 1 {
            return Err(PathError::Arity {
                nodes: nodes.len(),
                relations: relations.len(),
            });
        }
        Ok(KnowledgePath { nodes, relations })
    }

    /// Parses a corpus line: whitespace-separated tokens, concepts at even
    /// positions and relations at odd ones.
    pub fn from_line(line: &str) -> Result<Self, PathError> {
        let mut nodes = Vec::new();
        let mut relations = Vec::new();
        for (i, tok) in line.split_whitespace().enumerate() {
            if i % 2 == 0 {
                if Relation::looks_like_relation(tok) {
                    return Err(token_err(i, tok, "concept"));
                }
                nodes.push(Concept::new(tok).map_err(|_| token_err(i, tok, "concept"))?);
            } else {
                relations.push(Relation::parse(tok).map_err(|_| token_err(i, tok, "relation"))?);
            }
        }
        KnowledgePath::new(nodes, relations)
    }

    pub fn nodes(&self) -> &[Concept] {
        &self.nodes
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn hops(&self) -> usize {
        self.relations.len()
    }

    pub fn head(&self) -> &Concept {
        &self.nodes[0]
    }

    pub fn tail(&self) -> &Concept {
        self.nodes.last().unwrap()
    }

    /// Nodes strictly between head and tail.
    pub fn intermediates(&self) -> &[Concept] {
        &self.nodes[1..self.nodes.len() - 1]
    }

    /// Tokens in path order.
    pub fn tokens(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.nodes.len() * 2);
        for (i, n) in self.nodes.iter().enumerate() {
            out.push(n.as_str().to_string());
            if let Some(r) = self.relations.get(i) {
                out.push(r.token());
            }
        }
        out
    }

    pub fn to_line(&self) -> String {
        self.tokens().join(" ")
    }

    pub fn has_repeated_node(&self) -> bool {
        let mut seen = HashSet::with_capacity(self.nodes.len());
        !self.nodes.iter().all(|n| seen.insert(n))
    }

    pub fn contains_node(&self, concept: &Concept) -> bool {
        self.nodes.contains(concept)
    }

    /// Index of the first hop that is not an edge of `graph`.
    pub fn first_missing_edge(&self, graph: &KnowledgeGraph) -> Option<usize> {
        (0..self.hops()).find(|&i| !graph.has_edge(&self.nodes[i], &self.relations[i], &self.nodes[i + 1]))
    }
}

fn token_err(position: usize, token: &str, expected: &'static str) -> PathError {
    PathError::Token {
        position,
        token: token.to_string(),
        expected,
    }
}

impl fmt::Display for KnowledgePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_line())
    }
}
