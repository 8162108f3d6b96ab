//! Triple scorer contract: `(context, response, target) -> [0, 1]`.
//!
//! Subprocess protocol: one `context<TAB>response<TAB>target` line per
//! triple on stdin, one score per line on stdout, same order.

use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScorerError {
    #[error("scorer command: {0}")]
    Command(String),
    #[error("scorer output line {line}: {reason}")]
    BadScore { line: usize, reason: String },
}

pub trait Scorer: Sync {
    fn score(&self, context: &str, response: &str, target: &str) -> Result<f64, ScorerError>;

    /// Scores many triples; results are positionally aligned with `triples`.
    fn score_batch(&self, triples: &[(String, String, String)]) -> Vec<Result<f64, ScorerError>> {
        triples.iter().map(|(c, r, t)| self.score(c, r, t)).collect()
    }
}

/// Tabs and newlines would break the line protocol.
pub fn protocol_field(text: &str) -> String {
    text.replace(['\t', '\n', '\r'], " ")
}

pub fn protocol_line(context: &str, response: &str, target: &str) -> String {
    format!(
        "{}\t{}\t{}",
        protocol_field(context),
        protocol_field(response),
        protocol_field(target)
    )
}

/// Parses one score; must be a finite number in [0, 1].
pub fn parse_score(line: &str, line_no: usize) -> Result<f64, ScorerError> {
    let bad = |reason: String| ScorerError::BadScore { line: line_no, reason };
    let v: f64 = line
        .trim()
        .parse()
        .map_err(|_| bad(format!("`{}` is not a number", line.trim())))?;
    if !(0.0..=1.0).contains(&v) {
        return Err(bad(format!("{v} is outside [0, 1]")));
    }
    Ok(v)
}

/// External scorer; one process per batch.
#[derive(Clone, Debug)]
pub struct CommandScorer {
    pub program: String,
    pub args: Vec<String>,
}

impl CommandScorer {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        CommandScorer {
            program: program.into(),
            args,
        }
    }

    fn run(&self, input: String, n: usize) -> Result<Vec<String>, ScorerError> {
        let err = |e: std::io::Error| ScorerError::Command(format!("{}: {e}", self.program));
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(err)?;
        let mut stdin = child.stdin.take().expect("stdin is piped");
        let writer = std::thread::spawn(move || stdin.write_all(input.as_bytes()));
        let stdout = child.stdout.take().expect("stdout is piped");
        let mut lines = Vec::with_capacity(n);
        for line in BufReader::new(stdout).lines() {
            lines.push(line.map_err(err)?);
        }
        // A scorer that exits early closes the pipe; its status reports why.
        let _ = writer.join();
        let status = child.wait().map_err(err)?;
        if !status.success() {
            return Err(ScorerError::Command(format!("{} exited with {status}", self.program)));
        }
        Ok(lines)
    }
}

impl Scorer for CommandScorer {
    fn score(&self, context: &str, response: &str, target: &str) -> Result<f64, ScorerError> {
        self.score_batch(&[(context.to_string(), response.to_string(), target.to_string())])
            .remove(0)
    }

    fn score_batch(&self, triples: &[(String, String, String)]) -> Vec<Result<f64, ScorerError>> {
        let mut input = String::new();
        for (c, r, t) in triples {
            input.push_str(&protocol_line(c, r, t));
            input.push('\n');
        }
        match self.run(input, triples.len()) {
            Ok(lines) => (0..triples.len())
                .map(|i| match lines.get(i) {
                    Some(l) => parse_score(l, i + 1),
                    None => Err(ScorerError::BadScore {
                        line: i + 1,
                        reason: "missing".into(),
                    }),
                })
                .collect(),
            Err(e) => vec![Err(e); triples.len()],
        }
    }
}
