//! Reference-based metrics, rank correlation, the metric bias probe and
//! test-set copy cleaning.
//!
//! All metrics tokenize by lowercasing and splitting on whitespace.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::pipeline::TransitionInstance;
use crate::text::{content_tokens, multiset_overlap, whitespace_tokens};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("rank correlation needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("a series is constant")]
    DegenerateInput,
    #[error("instance {0} has no references")]
    NoReferences(usize),
    #[error("instance {0} needs at least 2 references for the held-out reference probe")]
    InsufficientReferences(usize),
    #[error("instance {0} has no response")]
    MissingResponse(usize),
    #[error("ratings: {0}")]
    Ratings(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn string_or_list<'de, D: Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Either {
        One(String),
        Many(Vec<String>),
    }
    Ok(match Either::deserialize(d)? {
        Either::One(s) => s,
        Either::Many(v) => v.join(" "),
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalInstance {
    /// A list of utterances is joined with spaces.
    #[serde(deserialize_with = "string_or_list")]
    pub context: String,
    pub target: String,
    #[serde(default)]
    pub hypothesis: String,
    pub references: Vec<String>,
}

fn ngrams(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w).or_insert(0) += 1;
        }
    }
    out
}

/// Corpus BLEU-4 with uniform weights and no smoothing. The brevity penalty
/// uses, per hypothesis, the closest reference length (shorter on ties).
/// Any zero n-gram precision gives 0.
pub fn bleu<H, R>(corpus: &[(H, Vec<R>)]) -> Result<f64, EvalError>
where
    H: AsRef<str>,
    R: AsRef<str>,
{
    if corpus.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let mut matched = [0usize; 4];
    let mut total = [0usize; 4];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for (i, (hyp, refs)) in corpus.iter().enumerate() {
        if refs.is_empty() {
            return Err(EvalError::NoReferences(i));
        }
        let h = whitespace_tokens(hyp.as_ref());
        let rs: Vec<Vec<String>> = refs.iter().map(|r| whitespace_tokens(r.as_ref())).collect();
        hyp_len += h.len();
        ref_len += rs
            .iter()
            .map(|r| r.len())
            .min_by_key(|&l| (l.abs_diff(h.len()), l))
            .expect("references are non-empty");
        for n in 1..=4 {
            let hc = ngrams(&h, n);
            let mut max_ref: HashMap<&[String], usize> = HashMap::new();
            for r in &rs {
                for (g, c) in ngrams(r, n) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(c);
                }
            }
            for (g, c) in &hc {
                matched[n - 1] += (*c).min(max_ref.get(g).copied().unwrap_or(0));
            }
            total[n - 1] += h.len().saturating_sub(n - 1);
        }
    }
    if matched.contains(&0) {
        return Ok(0.0);
    }
    let log_p: f64 = (0..4).map(|n| (matched[n] as f64 / total[n] as f64).ln()).sum::<f64>() / 4.0;
    let bp = if hyp_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    Ok((bp * log_p.exp()).clamp(0.0, 1.0))
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Best LCS F1 over `references`; 0 with no references.
pub fn rouge_l<R: AsRef<str>>(hypothesis: &str, references: &[R]) -> f64 {
    let h = whitespace_tokens(hypothesis);
    references
        .iter()
        .map(|r| {
            let r = whitespace_tokens(r.as_ref());
            let l = lcs_len(&h, &r);
            if l == 0 {
                return 0.0;
            }
            let p = l as f64 / h.len() as f64;
            let rec = l as f64 / r.len() as f64;
            2.0 * p * rec / (p + rec)
        })
        .fold(0.0, f64::max)
}

/// 1-based fractional ranks; ties share their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    if xs.len() != ys.len() {
        return Err(EvalError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 3 {
        return Err(EvalError::TooFewPoints(xs.len()));
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::DegenerateInput);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// A corpus-level metric over `(hypothesis, references)` pairs.
pub trait CorpusMetric: Sync {
    fn name(&self) -> &str;
    fn corpus_score(&self, corpus: &[(String, Vec<String>)]) -> Result<f64, EvalError>;
}

pub struct Bleu;

impl CorpusMetric for Bleu {
    fn name(&self) -> &str {
        "BLEU"
    }

    fn corpus_score(&self, corpus: &[(String, Vec<String>)]) -> Result<f64, EvalError> {
        bleu(corpus)
    }
}

/// Mean sentence ROUGE-L.
pub struct RougeL;

impl CorpusMetric for RougeL {
    fn name(&self) -> &str {
        "ROUGE-L"
    }

    fn corpus_score(&self, corpus: &[(String, Vec<String>)]) -> Result<f64, EvalError> {
        if corpus.is_empty() {
            return Err(EvalError::EmptyCorpus);
        }
        Ok(corpus.iter().map(|(h, r)| rouge_l(h, r)).sum::<f64>() / corpus.len() as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ProbeCondition {
    TargetAsResponse,
    ContextAsResponse,
    ReferenceAsResponse,
}

impl ProbeCondition {
    pub const ALL: [ProbeCondition; 3] = [
        ProbeCondition::TargetAsResponse,
        ProbeCondition::ContextAsResponse,
        ProbeCondition::ReferenceAsResponse,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProbeCondition::TargetAsResponse => "TARGET_AS_RESPONSE",
            ProbeCondition::ContextAsResponse => "CONTEXT_AS_RESPONSE",
            ProbeCondition::ReferenceAsResponse => "REFERENCE_AS_RESPONSE",
        }
    }
}

/// The corpus a probe condition scores: the substituted response against
/// the references. The held-out condition uses the first reference as the
/// response and the rest as references.
pub fn probe_corpus(
    dataset: &[EvalInstance],
    condition: ProbeCondition,
) -> Result<Vec<(String, Vec<String>)>, EvalError> {
    dataset
        .iter()
        .enumerate()
        .map(|(i, inst)| {
            if inst.references.is_empty() {
                return Err(EvalError::NoReferences(i));
            }
            Ok(match condition {
                ProbeCondition::TargetAsResponse => (inst.target.clone(), inst.references.clone()),
                ProbeCondition::ContextAsResponse => (inst.context.clone(), inst.references.clone()),
                ProbeCondition::ReferenceAsResponse => {
                    if inst.references.len() < 2 {
                        return Err(EvalError::InsufficientReferences(i));
                    }
                    (inst.references[0].clone(), inst.references[1..].to_vec())
                }
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeRow {
    pub metric: String,
    pub condition: ProbeCondition,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeReport {
    pub rows: Vec<ProbeRow>,
    /// Instances with a reference equal to the target under tokenization;
    /// these inflate TARGET_AS_RESPONSE.
    pub target_copied_into_reference: Vec<usize>,
}

pub fn bias_probe(dataset: &[EvalInstance], metric: &dyn CorpusMetric) -> Result<ProbeReport, EvalError> {
    if dataset.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let mut rows = Vec::with_capacity(3);
    for condition in ProbeCondition::ALL {
        let corpus = probe_corpus(dataset, condition)?;
        rows.push(ProbeRow {
            metric: metric.name().to_string(),
            condition,
            score: metric.corpus_score(&corpus)?,
        });
    }
    let target_copied_into_reference = dataset
        .iter()
        .enumerate()
        .filter(|(_, inst)| {
            let t = whitespace_tokens(&inst.target);
            inst.references.iter().any(|r| whitespace_tokens(r) == t)
        })
        .map(|(i, _)| i)
        .collect();
    Ok(ProbeReport {
        rows,
        target_copied_into_reference,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverlapDenominator {
    /// Content tokens of the target.
    #[default]
    Target,
    /// Content tokens of the response.
    Response,
}

/// Multiset content-token overlap of `response` with `target`, divided by
/// the chosen side's content-token count (0 when that side is empty).
pub fn copy_overlap(response: &str, target: &str, denominator: OverlapDenominator) -> f64 {
    let r = content_tokens(response);
    let t = content_tokens(target);
    let d = match denominator {
        OverlapDenominator::Target => t.len(),
        OverlapDenominator::Response => r.len(),
    };
    if d == 0 {
        return 0.0;
    }
    multiset_overlap(&r, &t) as f64 / d as f64
}

/// Drops instances whose response copies the target (overlap > threshold).
pub fn clean_test_set(
    instances: &[TransitionInstance],
    overlap_threshold: f64,
    denominator: OverlapDenominator,
) -> Result<Vec<TransitionInstance>, EvalError> {
    let mut kept = Vec::new();
    for (i, inst) in instances.iter().enumerate() {
        let r = inst.response.as_deref().ok_or(EvalError::MissingResponse(i))?;
        if copy_overlap(r, &inst.target, denominator) <= overlap_threshold {
            kept.push(inst.clone());
        }
    }
    Ok(kept)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub instance_id: String,
    pub metric_score: f64,
    pub human_rating: f64,
}

/// Reads `instance_id,metric_score,human_rating` with a header row.
pub fn read_ratings<R: Read>(reader: R) -> Result<Vec<Rating>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(EvalError::from)).collect()
}

/// Metric-human rank correlation.
pub fn ratings_correlation(ratings: &[Rating]) -> Result<f64, EvalError> {
    let xs: Vec<f64> = ratings.iter().map(|r| r.metric_score).collect();
    let ys: Vec<f64> = ratings.iter().map(|r| r.human_rating).collect();
    spearman(&xs, &ys)
}

/// Writes a tab-separated table with a header row.
pub fn write_tsv<W: Write>(mut w: W, header: &[&str], rows: &[Vec<String>]) -> std::io::Result<()> {
    writeln!(w, "{}", header.join("\t"))?;
    for row in rows {
        writeln!(w, "{}", row.join("\t"))?;
    }
    Ok(())
}

pub fn probe_table(reports: &[ProbeReport]) -> Vec<Vec<String>> {
    reports
        .iter()
        .flat_map(|r| &r.rows)
        .map(|row| {
            vec![
                row.metric.clone(),
                row.condition.as_str().to_string(),
                format!("{:.6}", row.score),
            ]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(h: &str, refs: &[&str]) -> (String, Vec<String>) {
        (h.to_string(), refs.iter().map(|s| s.to_string()).collect())
    }

    #[test]
    fn bleu_identity_and_zero() {
        let corpus = vec![
            c("the cat sat on the mat", &["the cat sat on the mat"]),
            c("a b c d e", &["A B C D E"]),
        ];
        assert_eq!(bleu(&corpus).unwrap(), 1.0);
        let corpus = vec![c("a b c d", &["a b c x"])];
        assert_eq!(bleu(&corpus).unwrap(), 0.0);
        assert!(matches!(bleu::<String, String>(&[]), Err(EvalError::EmptyCorpus)));
    }

    #[test]
    fn bleu_hand_computed() {
        // hyp 5 tokens, ref 6: p1 = 5/5, p2 = 3/4, p3 = 2/3, p4 = 1/2.
        let corpus = vec![c("the cat sat on mat", &["the cat sat on the mat"])];
        let p: f64 = (1.0f64 * 0.75 * (2.0 / 3.0) * 0.5).powf(0.25);
        let want = (1.0f64 - 6.0 / 5.0).exp() * p;
        assert!((bleu(&corpus).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn bleu_closest_reference_prefers_shorter_on_tie() {
        // Hyp length 4, references 3 and 5: tie, so r = 3 and no penalty.
        let corpus = vec![c("a b c d", &["a b c d e", "a b c"])];
        assert_eq!(bleu(&corpus).unwrap(), 1.0);
    }

    #[test]
    fn rouge() {
        assert_eq!(rouge_l("the cat sat", &["the cat sat"]), 1.0);
        assert!((rouge_l("the cat sat", &["the cat ran"]) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(rouge_l("a b", &["c d"]), 0.0);
        assert_eq!(rouge_l("a b", &["c d", "a b"]), 1.0);
    }

    #[test]
    fn spearman_cases() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(spearman(&xs, &xs).unwrap(), 1.0);
        let rev: Vec<f64> = xs.iter().map(|x| -x * 10.0).collect();
        assert_eq!(spearman(&xs, &rev).unwrap(), -1.0);
        assert!(matches!(spearman(&xs, &xs[..4]), Err(EvalError::LengthMismatch(5, 4))));
        assert!(matches!(spearman(&xs, &[1.0; 5]), Err(EvalError::DegenerateInput)));
        assert!(matches!(spearman(&xs[..2], &xs[..2]), Err(EvalError::TooFewPoints(2))));
    }

    #[test]
    fn spearman_with_ties() {
        // x ranks [1, 2.5, 2.5, 4, 5, 6], y ranks [2, 1, 3, 4.5, 4.5, 6].
        let xs = [1.0, 2.0, 2.0, 3.0, 4.0, 5.0];
        let ys = [2.0, 1.0, 3.0, 4.0, 4.0, 9.0];
        assert_eq!(average_ranks(&xs), [1.0, 2.5, 2.5, 4.0, 5.0, 6.0]);
        assert_eq!(average_ranks(&ys), [2.0, 1.0, 3.0, 4.5, 4.5, 6.0]);
        // Deviations from 3.5: dx = [-2.5,-1,-1,.5,1.5,2.5], dy = [-1.5,-2.5,-.5,1,1,2.5].
        // sxy = 15, sxx = 17, syy = 17.
        let want = 15.0 / 17.0;
        assert!((spearman(&xs, &ys).unwrap() - want).abs() < 1e-12);
    }

    fn ev(ctx: &str, t: &str, refs: &[&str]) -> EvalInstance {
        EvalInstance {
            context: ctx.into(),
            target: t.into(),
            hypothesis: String::new(),
            references: refs.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn probe_rows_and_flags() {
        let data = vec![
            ev(
                "i like sand",
                "my puppy is georgie",
                &["my dog walks on sand with me", "my puppy is georgie"],
            ),
            ev(
                "i cook daily",
                "we eat pasta here",
                &["cooking pasta is what we do here", "we eat here a lot"],
            ),
        ];
        let rep = bias_probe(&data, &RougeL).unwrap();
        assert_eq!(rep.rows.len(), 3);
        assert_eq!(rep.target_copied_into_reference, [0]);
        let direct = RougeL
            .corpus_score(&[
                c(
                    "my puppy is georgie",
                    &["my dog walks on sand with me", "my puppy is georgie"],
                ),
                c(
                    "we eat pasta here",
                    &["cooking pasta is what we do here", "we eat here a lot"],
                ),
            ])
            .unwrap();
        assert_eq!(rep.rows[0].score, direct);
        let one_ref = vec![ev("a", "b", &["c"])];
        assert!(matches!(
            bias_probe(&one_ref, &Bleu),
            Err(EvalError::InsufficientReferences(0))
        ));
    }

    #[test]
    fn cleaning() {
        let inst = |r: &str, t: &str| TransitionInstance {
            context: vec!["c".into()],
            target: t.into(),
            response: Some(r.into()),
        };
        let data = vec![
            inst("my puppy is called georgie.", "my puppy is called georgie."),
            inst("sand and beaches", "my puppy is called georgie."),
            inst("puppy called georgie likes walks", "my puppy is called georgie."),
        ];
        let kept = clean_test_set(&data, 0.75, OverlapDenominator::Target).unwrap();
        assert_eq!(kept, vec![data[1].clone()]);
        assert_eq!(
            copy_overlap(
                "puppy called",
                "my puppy is called georgie.",
                OverlapDenominator::Target
            ),
            2.0 / 3.0
        );
    }

    #[test]
    fn ratings_csv() {
        let text = "instance_id,metric_score,human_rating\na,0.1,1\nb,0.5,2\nc,0.9,3\n";
        let r = read_ratings(text.as_bytes()).unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!(ratings_correlation(&r).unwrap(), 1.0);
        assert!(read_ratings("instance_id,metric_score,human_rating\na,x,1\n".as_bytes()).is_err());
    }

    #[test]
    fn context_list_is_joined() {
        let e: EvalInstance =
            serde_json::from_str(r#"{"context":["hi","there"],"target":"t","hypothesis":"h","references":["r"]}"#)
                .unwrap();
        assert_eq!(e.context, "hi there");
    }
}
