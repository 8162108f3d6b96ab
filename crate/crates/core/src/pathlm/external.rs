//! Line protocol for plugging in an out-of-process path generator.
//!
//! The generator process receives one query on stdin,
//!
//! ```text
//! HT<TAB>head<TAB>tail
//! WC<TAB>head<TAB>tail<TAB>e1,e2,...
//! ```
//!
//! and answers with one path sequence per line on stdout. The decode seed
//! and sample count are passed as `BRIDGEPATH_SEED` and
//! `BRIDGEPATH_NUM_SAMPLES`.

use std::io::{BufRead, Write};
use std::process::{Command, Stdio};

use super::decode::{generate_path, DecodeConfig, DecodeError};
use super::model::{ModelError, PathModel};
use super::sequence::{format_sequence, parse_sequence, FormatMode};
use super::PathGenerator;
use crate::kg::Concept;
use crate::path::KnowledgePath;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Query {
    pub head: Concept,
    pub tail: Concept,
    pub required: Vec<Concept>,
}

impl Query {
    pub fn to_line(&self) -> String {
        if self.required.is_empty() {
            format!("HT\t{}\t{}", self.head, self.tail)
        } else {
            let req: Vec<&str> = self.required.iter().map(Concept::as_str).collect();
            format!("WC\t{}\t{}\t{}", self.head, self.tail, req.join(","))
        }
    }

    pub fn parse(line: &str) -> Result<Query, String> {
        let fields: Vec<&str> = line.trim_end_matches(['\r', '\n']).split('\t').collect();
        let concept = |s: &str| Concept::new(s).map_err(|e| e.to_string());
        match fields.as_slice() {
            ["HT", h, t] => Ok(Query {
                head: concept(h)?,
                tail: concept(t)?,
                required: Vec::new(),
            }),
            ["WC", h, t, req] => Ok(Query {
                head: concept(h)?,
                tail: concept(t)?,
                required: req
                    .split(',')
                    .filter(|s| !s.is_empty())
                    .map(concept)
                    .collect::<Result<_, _>>()?,
            }),
            _ => Err(format!("malformed query line `{line}`")),
        }
    }
}

/// Answers protocol queries from `input` with `model`, one sequence per line.
pub fn serve_protocol<R: BufRead, W: Write>(
    model: &PathModel,
    input: R,
    mut output: W,
    config: &DecodeConfig,
) -> Result<(), DecodeError> {
    for line in input.lines() {
        let line = line.map_err(|e| DecodeError::External(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let q = Query::parse(&line).map_err(DecodeError::External)?;
        // An unsatisfiable query answers with no lines.
        let found = match generate_path(model, &q.head, &q.tail, &q.required, config) {
            Ok(found) => found,
            Err(DecodeError::NoPathFound | DecodeError::UnknownConcept(_)) => Vec::new(),
            Err(e) => return Err(e),
        };
        for g in found {
            let seq = format_sequence(&g.path, &FormatMode::WillContain(q.required.clone()), true)
                .expect("off-path entities are allowed here");
            writeln!(output, "{seq}").map_err(|e| DecodeError::External(e.to_string()))?;
        }
    }
    output.flush().map_err(|e| DecodeError::External(e.to_string()))
}

/// Runs `program args...` once per query. Perplexity comes from `scorer`
/// when given, else every path scores 1.0 (which disables the perplexity
/// filter).
pub struct ExternalGenerator {
    pub program: String,
    pub args: Vec<String>,
    pub scorer: Option<PathModel>,
}

impl ExternalGenerator {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        ExternalGenerator {
            program: program.into(),
            args,
            scorer: None,
        }
    }

    pub fn with_scorer(mut self, scorer: PathModel) -> Self {
        self.scorer = Some(scorer);
        self
    }

    fn run(&self, query: &Query, config: &DecodeConfig) -> Result<String, DecodeError> {
        let ext = |e: std::io::Error| DecodeError::External(format!("{}: {e}", self.program));
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .env("BRIDGEPATH_SEED", config.seed.to_string())
            .env("BRIDGEPATH_NUM_SAMPLES", config.num_samples.to_string())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(ext)?;
        {
            let mut stdin = child.stdin.take().expect("stdin is piped");
            writeln!(stdin, "{}", query.to_line()).map_err(ext)?;
        }
        let out = child.wait_with_output().map_err(ext)?;
        if !out.status.success() {
            return Err(DecodeError::External(format!(
                "{} exited with {}",
                self.program, out.status
            )));
        }
        String::from_utf8(out.stdout).map_err(|e| DecodeError::External(e.to_string()))
    }
}

impl PathGenerator for ExternalGenerator {
    fn generate(
        &self,
        head: &Concept,
        tail: &Concept,
        required: &[Concept],
        config: &DecodeConfig,
    ) -> Result<Vec<KnowledgePath>, DecodeError> {
        let query = Query {
            head: head.clone(),
            tail: tail.clone(),
            required: required.to_vec(),
        };
        let stdout = self.run(&query, config)?;
        let mut out: Vec<KnowledgePath> = Vec::new();
        for line in stdout.lines().filter(|l| !l.trim().is_empty()) {
            let seq = parse_sequence(line).map_err(|e| DecodeError::External(format!("`{line}`: {e}")))?;
            let path = seq.path;
            if path.head() != head || path.tail() != tail {
                return Err(DecodeError::External(format!(
                    "`{line}` does not join {head} to {tail}"
                )));
            }
            if !out.contains(&path) {
                out.push(path);
            }
            if out.len() == config.num_samples {
                break;
            }
        }
        if out.is_empty() {
            return Err(DecodeError::NoPathFound);
        }
        Ok(out)
    }

    fn perplexity(&self, path: &KnowledgePath) -> Result<f64, ModelError> {
        match &self.scorer {
            Some(m) => m.path_perplexity(path),
            None => Ok(1.0),
        }
    }
}
