//! CRG data preparation: entity pairs, path generation, filtering, and
//! conditioning-sequence assembly.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entities::lemma::{lemmatize_verb, singular};
use crate::entities::{
    score_pairs, select_pairs, ConceptVocab, EntitySet, EntitySource, Extractor, IdfTable, PairError, Phase,
    ScoredPair, TagError, Tagger,
};
use crate::kg::Concept;
use crate::path::KnowledgePath;
use crate::pathlm::{
    render_text, DecodeConfig, DecodeError, ModelError, PathGenerator, RelationTemplateTable, TemplateError,
};
use crate::seed::{derive_seed, rng_from_seed};

/// Stream index reserved for the final path choice at inference.
const CHOICE_STREAM: u64 = u64::MAX;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no entities extracted from the {0:?}")]
    NoEntities(EntitySource),
    #[error("every candidate path was filtered out")]
    NoPathSurvived,
    #[error("training instances need a response")]
    MissingResponse,
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error(transparent)]
    Pair(#[from] PairError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Tag(#[from] TagError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionInstance {
    /// Utterances, oldest first.
    pub context: Vec<String>,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
}

impl TransitionInstance {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.context.is_empty() || self.context.iter().all(|u| u.trim().is_empty()) {
            return Err(PipelineError::InvalidInstance("context is empty".into()));
        }
        if self.target.trim().is_empty() {
            return Err(PipelineError::InvalidInstance("target is empty".into()));
        }
        Ok(())
    }
}

/// Where the perplexity mean is taken relative to the repetition filter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterOrder {
    /// Mean over every candidate of the pair.
    #[default]
    MeanBeforeRepetition,
    /// Mean over candidates without repeated nodes.
    MeanAfterRepetition,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GoldMatch {
    #[default]
    Exact,
    Lemma,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub perplexity_factor: f64,
    pub order: FilterOrder,
    pub gold_match: GoldMatch,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            perplexity_factor: 2.0,
            order: FilterOrder::default(),
            gold_match: GoldMatch::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Paths sampled per entity pair.
    pub q: usize,
    /// Train-phase pair budget.
    pub d: usize,
    pub filter: FilterConfig,
    pub decode: DecodeConfig,
    pub seed: u64,
    /// Retry with singleton subsets of the gold entities when the full set
    /// cannot be covered.
    pub relax: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            q: 5,
            d: 2,
            filter: FilterConfig::default(),
            decode: DecodeConfig::default(),
            seed: 0,
            relax: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.q == 0 {
            return Err(PipelineError::Config("q must be >= 1".into()));
        }
        if self.d == 0 {
            return Err(PipelineError::Config("d must be >= 1".into()));
        }
        // NaN fails too.
        if self.filter.perplexity_factor.partial_cmp(&1.0) != Some(std::cmp::Ordering::Greater) {
            return Err(PipelineError::Config("perplexity_factor must be > 1".into()));
        }
        self.decode.validate()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredPath {
    pub path: KnowledgePath,
    pub perplexity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredPathSet {
    pub phase: Phase,
    pub paths: Vec<ScoredPath>,
    /// Pairs whose generation failed, with the reason.
    pub pair_errors: Vec<(ScoredPair, String)>,
    /// Candidates generated before filtering.
    pub candidates: usize,
}

fn word_key(w: &str) -> String {
    if w.ends_with("ing") {
        lemmatize_verb(w, "VBG")
    } else if w.ends_with("ed") {
        lemmatize_verb(w, "VBD")
    } else {
        singular(w)
    }
}

fn lemma_key(c: &Concept) -> String {
    c.words().map(word_key).collect::<Vec<_>>().join("_")
}

/// True when every intermediate node of `path` is a gold entity.
pub fn intermediates_in_gold(path: &KnowledgePath, gold: &EntitySet, matching: GoldMatch) -> bool {
    match matching {
        GoldMatch::Exact => path.intermediates().iter().all(|n| gold.contains(n)),
        GoldMatch::Lemma => {
            let keys: HashSet<String> = gold.entities.iter().map(lemma_key).collect();
            path.intermediates().iter().all(|n| keys.contains(&lemma_key(n)))
        }
    }
}

/// Filters one pair's candidates. Removes paths whose perplexity exceeds
/// `factor` times the pair mean, paths with a repeated node, and (when
/// `gold` is given) paths with an intermediate node outside `gold`. Order
/// is preserved.
pub fn filter_paths(candidates: &[ScoredPath], gold: Option<&EntitySet>, config: &FilterConfig) -> Vec<ScoredPath> {
    let mean = |items: &[&ScoredPath]| {
        if items.is_empty() {
            0.0
        } else {
            items.iter().map(|c| c.perplexity).sum::<f64>() / items.len() as f64
        }
    };
    let all: Vec<&ScoredPath> = candidates.iter().collect();
    let no_repeat: Vec<&ScoredPath> = all.iter().copied().filter(|c| !c.path.has_repeated_node()).collect();
    let cutoff = config.perplexity_factor
        * match config.order {
            FilterOrder::MeanBeforeRepetition => mean(&all),
            FilterOrder::MeanAfterRepetition => mean(&no_repeat),
        };
    no_repeat
        .into_iter()
        .filter(|c| c.perplexity <= cutoff)
        .filter(|c| gold.is_none_or(|g| intermediates_in_gold(&c.path, g, config.gold_match)))
        .cloned()
        .collect()
}

/// `PATH [target] TARGET [context] C1 [sep] C2 ... [response] RESPONSE`,
/// with the response segment omitted when absent.
pub fn assemble_crg_sequence(path_text: &str, target: &str, context: &[String], response: Option<&str>) -> String {
    let mut out = format!("{path_text} [target] {target} [context] {}", context.join(" [sep] "));
    if let Some(r) = response {
        out.push_str(" [response] ");
        out.push_str(r);
    }
    out
}

/// Seeded uniform choice among `n` survivors.
pub fn choose_index(seed: u64, n: usize) -> usize {
    rng_from_seed(derive_seed(seed, CHOICE_STREAM)).gen_range(0..n)
}

#[derive(Clone, Debug, PartialEq)]
pub struct InferencePath {
    pub pair: ScoredPair,
    pub path: KnowledgePath,
    pub text: String,
    pub perplexity: f64,
    pub survivors: usize,
}

pub struct Pipeline<'a> {
    pub generator: &'a dyn PathGenerator,
    pub tagger: &'a dyn Tagger,
    pub extractor: Extractor,
    pub idf: &'a IdfTable,
    pub vocab: Option<&'a (dyn ConceptVocab + Sync)>,
    pub templates: &'a RelationTemplateTable,
    pub config: PipelineConfig,
}

impl<'a> Pipeline<'a> {
    pub fn entities(&self, texts: &[String], source: EntitySource) -> Result<EntitySet, PipelineError> {
        let mut set = EntitySet::new(source);
        for t in texts {
            let tagged = self.tagger.tag(t)?;
            let vocab = self.vocab.map(|v| v as &dyn ConceptVocab);
            set.extend(&self.extractor.extract(&tagged, vocab, source));
        }
        Ok(set)
    }

    fn score(&self, paths: Vec<KnowledgePath>) -> Result<Vec<ScoredPath>, PipelineError> {
        paths
            .into_iter()
            .map(|path| {
                let perplexity = self.generator.perplexity(&path)?;
                Ok(ScoredPath { path, perplexity })
            })
            .collect()
    }

    /// WC generation for one pair with the relaxation ladder.
    fn generate_for_pair(
        &self,
        pair: &ScoredPair,
        gold: &EntitySet,
        decode: &DecodeConfig,
    ) -> Result<Vec<KnowledgePath>, DecodeError> {
        let required: Vec<Concept> = gold
            .entities
            .iter()
            .filter(|e| **e != pair.head && **e != pair.tail)
            .cloned()
            .collect();
        let full = self.generator.generate(&pair.head, &pair.tail, &required, decode);
        let relaxable = |e: &DecodeError| matches!(e, DecodeError::NoPathFound | DecodeError::UnknownConcept(_));
        match full {
            Ok(paths) => return Ok(paths),
            Err(e) if !(self.config.relax && required.len() > 1 && relaxable(&e)) => return Err(e),
            Err(_) => {}
        }
        let mut out: Vec<KnowledgePath> = Vec::new();
        let mut last_err = DecodeError::NoPathFound;
        for (k, entity) in required.iter().enumerate() {
            let cfg = DecodeConfig {
                seed: derive_seed(decode.seed, k as u64 + 1),
                ..decode.clone()
            };
            match self
                .generator
                .generate(&pair.head, &pair.tail, std::slice::from_ref(entity), &cfg)
            {
                Ok(paths) => {
                    for p in paths {
                        if out.len() < decode.num_samples && !out.contains(&p) {
                            out.push(p);
                        }
                    }
                }
                Err(e) if relaxable(&e) => last_err = e,
                Err(e) => return Err(e),
            }
            if out.len() >= decode.num_samples {
                break;
            }
        }
        if out.is_empty() {
            Err(last_err)
        } else {
            Ok(out)
        }
    }

    /// Training flow: top-D pairs, WC generation with the gold-response
    /// entities as requirements, all three filters.
    pub fn build_training_paths(
        &self,
        instance: &TransitionInstance,
        seed: u64,
    ) -> Result<ScoredPathSet, PipelineError> {
        self.config.validate()?;
        instance.validate()?;
        let response = instance.response.as_ref().ok_or(PipelineError::MissingResponse)?;
        let heads = self.entities(&instance.context, EntitySource::Context)?;
        let tails = self.entities(std::slice::from_ref(&instance.target), EntitySource::Target)?;
        let gold = self.entities(std::slice::from_ref(response), EntitySource::Response)?;
        if heads.is_empty() {
            return Err(PipelineError::NoEntities(EntitySource::Context));
        }
        if tails.is_empty() {
            return Err(PipelineError::NoEntities(EntitySource::Target));
        }
        let ranked = score_pairs(&heads, &tails, self.idf)?;
        let pairs = select_pairs(&ranked, Phase::Train, self.config.d)?;
        let mut set = ScoredPathSet {
            phase: Phase::Train,
            paths: Vec::new(),
            pair_errors: Vec::new(),
            candidates: 0,
        };
        for (j, pair) in pairs.into_iter().enumerate() {
            let decode = DecodeConfig {
                seed: derive_seed(seed, j as u64),
                num_samples: self.config.q,
                ..self.config.decode.clone()
            };
            let generated = match self.generate_for_pair(&pair, &gold, &decode) {
                Ok(p) => p,
                Err(e) => {
                    set.pair_errors.push((pair, e.to_string()));
                    continue;
                }
            };
            let scored = match self.score(generated) {
                Ok(s) => s,
                Err(e) => {
                    set.pair_errors.push((pair, e.to_string()));
                    continue;
                }
            };
            set.candidates += scored.len();
            set.paths
                .extend(filter_paths(&scored, Some(&gold), &self.config.filter));
        }
        Ok(set)
    }

    /// Inference flow: best pair only, HT generation, perplexity and
    /// repetition filters, seeded uniform choice.
    pub fn build_inference_path(
        &self,
        context: &[String],
        target: &str,
        seed: u64,
    ) -> Result<InferencePath, PipelineError> {
        let pair = self.best_pair(context, target)?;
        self.infer_for_pair(pair, &[], seed)
    }

    /// The top-ranked context/target entity pair.
    pub fn best_pair(&self, context: &[String], target: &str) -> Result<ScoredPair, PipelineError> {
        self.config.validate()?;
        let heads = self.entities(context, EntitySource::Context)?;
        let tails = self.entities(&[target.to_string()], EntitySource::Target)?;
        if heads.is_empty() {
            return Err(PipelineError::NoEntities(EntitySource::Context));
        }
        if tails.is_empty() {
            return Err(PipelineError::NoEntities(EntitySource::Target));
        }
        let ranked = score_pairs(&heads, &tails, self.idf)?;
        Ok(select_pairs(&ranked, Phase::Infer, 1)?.remove(0))
    }

    /// HT (or ONEENT when `required` is set) candidates for one pair after
    /// the perplexity and repetition filters.
    pub fn candidates_for_pair(
        &self,
        pair: &ScoredPair,
        required: &[Concept],
        seed: u64,
    ) -> Result<Vec<ScoredPath>, PipelineError> {
        let decode = DecodeConfig {
            seed: derive_seed(seed, 0),
            num_samples: self.config.q,
            ..self.config.decode.clone()
        };
        let generated = self.generator.generate(&pair.head, &pair.tail, required, &decode)?;
        let scored = self.score(generated)?;
        Ok(filter_paths(&scored, None, &self.config.filter))
    }

    /// Inference for a fixed pair, optionally steering through `required`.
    pub fn infer_for_pair(
        &self,
        pair: ScoredPair,
        required: &[Concept],
        seed: u64,
    ) -> Result<InferencePath, PipelineError> {
        let survivors = self.candidates_for_pair(&pair, required, seed)?;
        if survivors.is_empty() {
            return Err(PipelineError::NoPathSurvived);
        }
        let chosen = survivors[choose_index(seed, survivors.len())].clone();
        let text = render_text(&chosen.path, self.templates)?;
        Ok(InferencePath {
            pair,
            path: chosen.path,
            text,
            perplexity: chosen.perplexity,
            survivors: survivors.len(),
        })
    }

    fn process(&self, index: usize, instance: &TransitionInstance, phase: Phase) -> Result<Vec<CrgRecord>, String> {
        let seed = derive_seed(self.config.seed, index as u64);
        match phase {
            Phase::Train => {
                let set = self.build_training_paths(instance, seed).map_err(|e| e.to_string())?;
                if set.paths.is_empty() {
                    let mut reason = format!("no path survived filtering ({} candidates)", set.candidates);
                    for (pair, err) in &set.pair_errors {
                        reason.push_str(&format!("; {}-{}: {err}", pair.head, pair.tail));
                    }
                    return Err(reason);
                }
                set.paths
                    .iter()
                    .map(|sp| {
                        let text = render_text(&sp.path, self.templates).map_err(|e| e.to_string())?;
                        Ok(CrgRecord::new(instance, &sp.path, text, sp.perplexity, true))
                    })
                    .collect()
            }
            Phase::Infer => {
                instance.validate().map_err(|e| e.to_string())?;
                let inf = self
                    .build_inference_path(&instance.context, &instance.target, seed)
                    .map_err(|e| e.to_string())?;
                Ok(vec![CrgRecord::new(
                    instance,
                    &inf.path,
                    inf.text,
                    inf.perplexity,
                    false,
                )])
            }
        }
    }

    /// Processes `instances` on `workers` threads. Results are in input
    /// order and do not depend on `workers`.
    pub fn run_batch(&self, instances: &[TransitionInstance], phase: Phase, workers: usize) -> BatchOutput {
        let workers = workers.max(1).min(instances.len().max(1));
        let mut results: Vec<Option<Result<Vec<CrgRecord>, String>>> = vec![None; instances.len()];
        if workers == 1 {
            for (i, inst) in instances.iter().enumerate() {
                results[i] = Some(self.process(i, inst, phase));
            }
        } else {
            let chunk = instances.len().div_ceil(workers);
            std::thread::scope(|scope| {
                for (w, slots) in results.chunks_mut(chunk).enumerate() {
                    let base = w * chunk;
                    scope.spawn(move || {
                        for (k, slot) in slots.iter_mut().enumerate() {
                            *slot = Some(self.process(base + k, &instances[base + k], phase));
                        }
                    });
                }
            });
        }
        let mut out = BatchOutput::default();
        for (i, r) in results.into_iter().enumerate() {
            match r.expect("every slot is filled") {
                Ok(records) => out.records.extend(records),
                Err(reason) => out.skipped.push(SkipRecord { index: i, reason }),
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrgRecord {
    pub context: Vec<String>,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    pub path: String,
    pub path_text: String,
    pub perplexity: f64,
    pub crg_sequence: String,
}

impl CrgRecord {
    fn new(
        inst: &TransitionInstance,
        path: &KnowledgePath,
        path_text: String,
        perplexity: f64,
        with_response: bool,
    ) -> Self {
        let response = if with_response { inst.response.clone() } else { None };
        CrgRecord {
            crg_sequence: assemble_crg_sequence(&path_text, &inst.target, &inst.context, response.as_deref()),
            context: inst.context.clone(),
            target: inst.target.clone(),
            response: inst.response.clone(),
            path: path.to_line(),
            path_text,
            perplexity,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub index: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BatchOutput {
    pub records: Vec<CrgRecord>,
    pub skipped: Vec<SkipRecord>,
}
