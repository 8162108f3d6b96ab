//! Seeded random-walk path sampling.
//!
//! A walk starts at a walkable concept, draws a target hop count uniformly
//! from `1..=max_hops` and takes uniform steps over the allowed outgoing
//! edges. Stepping straight back over the inverse of the edge just used is
//! disallowed by default. A walk that reaches a dead end stops early; since
//! the first step always has a candidate, every walk has at least one hop.
//!
//! Corpus sampling splits `count` into contiguous shards, one per worker.
//! Worker `w` draws from ChaCha8 stream `w` of the configured seed and shards
//! are concatenated in worker order, so output depends only on
//! `(graph, seed, count, workers)`.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::kg::{ConceptId, KnowledgeGraph, RelationId};
use crate::path::{KnowledgePath, PathError};
use crate::seed::rng_from_seed;

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("no concept has an outgoing edge")]
    NoWalkableNode,
    #[error("invalid sampler config: {0}")]
    Config(String),
    #[error("corpus line {line_no}: {source}")]
    BadLine {
        line_no: usize,
        #[source]
        source: PathError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartDistribution {
    #[default]
    Uniform,
    DegreeProportional,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SamplerConfig {
    pub max_hops: usize,
    pub seed: u64,
    pub count: usize,
    pub allow_immediate_backtrack: bool,
    pub start: StartDistribution,
    pub workers: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            max_hops: 6,
            seed: 0,
            count: 1,
            allow_immediate_backtrack: false,
            start: StartDistribution::Uniform,
            workers: 1,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SampleError> {
        if self.max_hops == 0 {
            return Err(SampleError::Config("max_hops must be >= 1".into()));
        }
        if self.count == 0 {
            return Err(SampleError::Config("count must be >= 1".into()));
        }
        if self.workers == 0 {
            return Err(SampleError::Config("workers must be >= 1".into()));
        }
        Ok(())
    }
}

/// Walk over interned ids; reused across draws to avoid allocation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdWalk {
    pub nodes: Vec<ConceptId>,
    pub relations: Vec<RelationId>,
}

impl IdWalk {
    pub fn hops(&self) -> usize {
        self.relations.len()
    }

    pub fn to_path(&self, graph: &KnowledgeGraph) -> KnowledgePath {
        KnowledgePath::new(
            self.nodes.iter().map(|&n| graph.concept(n).clone()).collect(),
            self.relations.iter().map(|&r| graph.relation(r).clone()).collect(),
        )
        .expect("walks always have at least one hop")
    }
}

pub struct Walker<'g> {
    graph: &'g KnowledgeGraph,
    walkable: Vec<u32>,
    cumulative_degree: Vec<u64>,
    max_hops: usize,
    allow_backtrack: bool,
    start: StartDistribution,
}

impl<'g> Walker<'g> {
    pub fn new(graph: &'g KnowledgeGraph, config: &SamplerConfig) -> Result<Self, SampleError> {
        config.validate()?;
        let walkable: Vec<u32> = (0..graph.concept_count() as u32)
            .filter(|&i| graph.out_degree(ConceptId(i)) > 0)
            .collect();
        if walkable.is_empty() {
            return Err(SampleError::NoWalkableNode);
        }
        let cumulative_degree = match config.start {
            StartDistribution::Uniform => Vec::new(),
            StartDistribution::DegreeProportional => walkable
                .iter()
                .scan(0u64, |acc, &i| {
                    *acc += graph.out_degree(ConceptId(i)) as u64;
                    Some(*acc)
                })
                .collect(),
        };
        Ok(Walker {
            graph,
            walkable,
            cumulative_degree,
            max_hops: config.max_hops,
            allow_backtrack: config.allow_immediate_backtrack,
            start: config.start,
        })
    }

    /// Concepts with at least one outgoing edge, by id.
    pub fn walkable(&self) -> &[u32] {
        &self.walkable
    }

    fn draw_start<R: Rng>(&self, rng: &mut R) -> ConceptId {
        match self.start {
            StartDistribution::Uniform => ConceptId(self.walkable[rng.gen_range(0..self.walkable.len())]),
            StartDistribution::DegreeProportional => {
                let total = *self.cumulative_degree.last().unwrap();
                let x = rng.gen_range(0..total);
                let i = self.cumulative_degree.partition_point(|&c| c <= x);
                ConceptId(self.walkable[i])
            }
        }
    }

    /// Draws one walk into `out`.
    pub fn walk_into<R: Rng>(&self, rng: &mut R, out: &mut IdWalk) {
        loop {
            out.nodes.clear();
            out.relations.clear();
            let mut current = self.draw_start(rng);
            let target_hops = rng.gen_range(1..=self.max_hops);
            out.nodes.push(current);
            let mut previous: Option<(ConceptId, RelationId)> = None;
            while out.relations.len() < target_hops {
                let edges = self.graph.edges_of(current);
                let blocked = match previous {
                    Some((from, rel)) if !self.allow_backtrack => self.graph.inverse_relation(rel).and_then(|inv| {
                        edges
                            .binary_search(&crate::kg::Edge {
                                relation: inv,
                                target: from,
                            })
                            .ok()
                    }),
                    _ => None,
                };
                let choices = edges.len() - usize::from(blocked.is_some());
                if choices == 0 {
                    break;
                }
                let mut pick = rng.gen_range(0..choices);
                if let Some(b) = blocked {
                    if pick >= b {
                        pick += 1;
                    }
                }
                let edge = edges[pick];
                out.relations.push(edge.relation);
                out.nodes.push(edge.target);
                previous = Some((current, edge.relation));
                current = edge.target;
            }
            if !out.relations.is_empty() {
                return;
            }
        }
    }
}

/// Draws one walk as a [`KnowledgePath`].
pub fn sample_walk<R: Rng>(
    graph: &KnowledgeGraph,
    rng: &mut R,
    config: &SamplerConfig,
) -> Result<KnowledgePath, SampleError> {
    let walker = Walker::new(graph, config)?;
    let mut walk = IdWalk::default();
    walker.walk_into(rng, &mut walk);
    Ok(walk.to_path(graph))
}

/// Compact corpus of sampled walks, tied to the graph that produced it.
pub struct PathCorpus<'g> {
    graph: &'g KnowledgeGraph,
    nodes: Vec<ConceptId>,
    relations: Vec<RelationId>,
    // ends[i] = exclusive end of path i in `relations`.
    ends: Vec<u32>,
}

impl<'g> PathCorpus<'g> {
    pub fn len(&self) -> usize {
        self.ends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ends.is_empty()
    }

    fn bounds(&self, i: usize) -> (usize, usize) {
        let start = if i == 0 { 0 } else { self.ends[i - 1] as usize };
        (start, self.ends[i] as usize)
    }

    pub fn hops(&self, i: usize) -> usize {
        let (s, e) = self.bounds(i);
        e - s
    }

    pub fn get(&self, i: usize) -> KnowledgePath {
        let (s, e) = self.bounds(i);
        // Path i owns relations s..e and nodes s+i..=e+i.
        let nodes = self.nodes[s + i..=e + i]
            .iter()
            .map(|&n| self.graph.concept(n).clone())
            .collect();
        let rels = self.relations[s..e]
            .iter()
            .map(|&r| self.graph.relation(r).clone())
            .collect();
        KnowledgePath::new(nodes, rels).expect("walks always have at least one hop")
    }

    pub fn iter(&self) -> impl Iterator<Item = KnowledgePath> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    pub fn to_paths(&self) -> Vec<KnowledgePath> {
        self.iter().collect()
    }

    /// Writes one path per line in corpus token form.
    pub fn write_lines<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for i in 0..self.len() {
            let (s, e) = self.bounds(i);
            let nodes = &self.nodes[s + i..=e + i];
            for (j, &n) in nodes.iter().enumerate() {
                if j > 0 {
                    w.write_all(b" ")?;
                    w.write_all(self.graph.relation(self.relations[s + j - 1]).token().as_bytes())?;
                    w.write_all(b" ")?;
                }
                w.write_all(self.graph.concept(n).as_str().as_bytes())?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn shard_sizes(count: usize, workers: usize) -> Vec<usize> {
    let base = count / workers;
    let extra = count % workers;
    (0..workers).map(|w| base + usize::from(w < extra)).collect()
}

fn worker_rng(seed: u64, worker: usize) -> ChaCha8Rng {
    let mut rng = rng_from_seed(seed);
    rng.set_stream(worker as u64);
    rng
}

struct Shard {
    nodes: Vec<ConceptId>,
    relations: Vec<RelationId>,
    hops: Vec<u32>,
}

fn sample_shard(walker: &Walker<'_>, seed: u64, worker: usize, count: usize) -> Shard {
    let mut rng = worker_rng(seed, worker);
    let mut walk = IdWalk::default();
    let mut shard = Shard {
        nodes: Vec::with_capacity(count * 4),
        relations: Vec::with_capacity(count * 3),
        hops: Vec::with_capacity(count),
    };
    for _ in 0..count {
        walker.walk_into(&mut rng, &mut walk);
        shard.nodes.extend_from_slice(&walk.nodes);
        shard.relations.extend_from_slice(&walk.relations);
        shard.hops.push(walk.hops() as u32);
    }
    shard
}

/// Samples exactly `config.count` walks.
pub fn sample_corpus<'g>(graph: &'g KnowledgeGraph, config: &SamplerConfig) -> Result<PathCorpus<'g>, SampleError> {
    let walker = Walker::new(graph, config)?;
    let sizes = shard_sizes(config.count, config.workers);
    let shards: Vec<Shard> = if config.workers == 1 {
        vec![sample_shard(&walker, config.seed, 0, sizes[0])]
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = sizes
                .iter()
                .enumerate()
                .map(|(w, &n)| {
                    let walker = &walker;
                    scope.spawn(move || sample_shard(walker, config.seed, w, n))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("sampler worker panicked"))
                .collect()
        })
    };
    let mut corpus = PathCorpus {
        graph,
        nodes: Vec::new(),
        relations: Vec::new(),
        ends: Vec::with_capacity(config.count),
    };
    let mut end = 0u32;
    for shard in shards {
        corpus.nodes.extend(shard.nodes);
        corpus.relations.extend(shard.relations);
        for h in shard.hops {
            end += h;
            corpus.ends.push(end);
        }
    }
    Ok(corpus)
}

/// Reads a corpus file written by [`PathCorpus::write_lines`].
pub fn read_corpus<R: BufRead>(reader: R) -> Result<Vec<KnowledgePath>, SampleError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(KnowledgePath::from_line(&line).map_err(|source| SampleError::BadLine { line_no: i + 1, source })?);
    }
    Ok(out)
}
