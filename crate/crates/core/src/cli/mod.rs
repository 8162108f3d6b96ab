//! The `bridgepath` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error. Every run that writes
//! a file also writes `<first output>.manifest.json`, which `replay` re-runs.

mod commands;
pub mod manifest;
pub mod settings;
pub mod steer;

use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use thiserror::Error;

use crate::entities::Phase;
use crate::evalkit::OverlapDenominator;
use crate::pathlm::{DecodeStrategy, TrainFormat};
use crate::pipeline::{FilterOrder, GoldMatch};
use crate::sampler::StartDistribution;
use crate::tcmetric::Mechanism;
use manifest::{manifest_path, unix_now, RunManifest};
use settings::Settings;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] anyhow::Error),
}

macro_rules! data_errors {
    ($($t:ty),* $(,)?) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.into())
            }
        }
    )*};
}

data_errors!(
    std::io::Error,
    crate::sampler::SampleError,
    crate::entities::idf::IdfError,
    crate::pathlm::ModelError,
    crate::pathlm::DecodeError,
    crate::pathlm::TemplateError,
    crate::tcmetric::TcError,
    crate::evalkit::EvalError,
    crate::kg::GraphError,
);

pub(crate) fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

/// Parses a kebab-case enum name through its serde representation.
fn kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "bridgepath",
    version,
    about = "Commonsense path bridging for target-guided dialogue data"
)]
pub struct Cli {
    /// TOML config; flags override it, it overrides defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for batch subcommands.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Repeat for more log output on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a TSV assertion file into a graph cache.
    Ingest(IngestArgs),
    /// Sample a random-walk path corpus.
    SamplePaths(SampleArgs),
    /// Build an IDF table from documents.
    BuildIdf(IdfArgs),
    /// Train the reference n-gram path model.
    TrainPathlm(TrainArgs),
    /// Generate bridging paths, or serve the generator protocol with --serve.
    GenPath(GenArgs),
    /// Prepare CRG conditioning sequences from transition instances.
    PrepCrg(PrepArgs),
    /// Build target-guided instances from SRL-annotated dialogue.
    Augment(AugmentArgs),
    /// Synthesize labeled triples for a target-coherence classifier.
    SynthTc(SynthArgs),
    /// Score hypotheses with BLEU, ROUGE-L and a coherence scorer.
    Eval(EvalArgs),
    /// Substitute target, context or a held-out reference as the response.
    Probe(ProbeArgs),
    /// Remove test instances whose response copies the target.
    Clean(CleanArgs),
    /// Interactive keyword steering of bridging paths.
    Steer(SteerArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::SamplePaths(_) => "sample-paths",
            Command::BuildIdf(_) => "build-idf",
            Command::TrainPathlm(_) => "train-pathlm",
            Command::GenPath(_) => "gen-path",
            Command::PrepCrg(_) => "prep-crg",
            Command::Augment(_) => "augment",
            Command::SynthTc(_) => "synth-tc",
            Command::Eval(_) => "eval",
            Command::Probe(_) => "probe",
            Command::Clean(_) => "clean",
            Command::Steer(_) => "steer",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub assertions: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replaces the default excluded relations; one name per line.
    #[arg(long)]
    pub exclude_file: Option<PathBuf>,
    #[arg(long)]
    pub no_inverses: bool,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Graph cache written by `ingest`.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_hops: Option<usize>,
    #[arg(long)]
    pub allow_backtrack: bool,
    #[arg(long, value_parser = kebab::<StartDistribution>)]
    pub start: Option<StartDistribution>,
}

#[derive(Debug, Args)]
pub struct IdfArgs {
    /// Plain text, one document per line.
    #[arg(long)]
    pub docs: Option<PathBuf>,
    /// Transition-instance JSONL; every utterance is a document.
    #[arg(long)]
    pub instances: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub paths: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub smoothing: Option<f64>,
    #[arg(long, value_parser = kebab::<TrainFormat>)]
    pub format: Option<TrainFormat>,
}

#[derive(Debug, Args, Default)]
pub struct DecodeArgs {
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub top_p: Option<f64>,
    #[arg(long)]
    pub beam_width: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub num_samples: Option<usize>,
    #[arg(long)]
    pub max_hops: Option<usize>,
    #[arg(long, value_parser = kebab::<DecodeStrategy>)]
    pub strategy: Option<DecodeStrategy>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub head: Option<String>,
    #[arg(long)]
    pub tail: Option<String>,
    /// Entity the path must contain; repeatable.
    #[arg(long = "require")]
    pub require: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Relation templates TSV layered over the built-in table.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Write results here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Answer protocol queries from stdin.
    #[arg(long)]
    pub serve: bool,
    #[command(flatten)]
    pub decode: DecodeArgs,
}

#[derive(Debug, Args, Default)]
pub struct ExtractionArgs {
    /// External POS tagger: reads a sentence, prints `word/TAG` tokens.
    #[arg(long)]
    pub tagger_cmd: Option<String>,
    /// Extra `word<TAB>TAG` lexicon for the built-in tagger.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Graph cache whose concepts guide entity normalization.
    #[arg(long)]
    pub vocab_graph: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PrepArgs {
    #[arg(long)]
    pub instances: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub idf: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = kebab::<Phase>)]
    pub phase: Option<Phase>,
    /// Reference path model; also scores perplexity for --generator-cmd.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// External path generator speaking the query protocol.
    #[arg(long)]
    pub generator_cmd: Option<String>,
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub perplexity_factor: Option<f64>,
    #[arg(long, value_parser = kebab::<FilterOrder>)]
    pub filter_order: Option<FilterOrder>,
    #[arg(long, value_parser = kebab::<GoldMatch>)]
    pub gold_match: Option<GoldMatch>,
    /// Disable the singleton fallback for required entities.
    #[arg(long)]
    pub no_relax: bool,
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long)]
    pub skip_log: Option<PathBuf>,
    #[command(flatten)]
    pub extraction: ExtractionArgs,
    #[command(flatten)]
    pub decode: DecodeArgs,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// JSONL records {dialogue, response, frames}.
    #[arg(long)]
    pub dialogues: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub max_history: Option<usize>,
    /// External scorer; defaults to the built-in lexical scorer.
    #[arg(long)]
    pub scorer_cmd: Option<String>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub instances: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_per_mechanism: Option<usize>,
    /// Enabled mechanism; repeatable. Defaults to all.
    #[arg(long = "mechanism", value_parser = kebab::<Mechanism>)]
    pub mechanisms: Vec<Mechanism>,
    /// Response generator for the generated-response mechanism.
    #[arg(long)]
    pub generator_cmd: Option<String>,
    /// Emit unbalanced output.
    #[arg(long)]
    pub no_balance: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// JSONL {context, target, hypothesis, references}.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub scorer_cmd: Option<String>,
    /// CSV instance_id,metric_score,human_rating for rank correlation.
    #[arg(long)]
    pub ratings: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `bleu` or `rouge-l`; repeatable. Defaults to both.
    #[arg(long = "metric")]
    pub metrics: Vec<String>,
}

#[derive(Debug, Args)]
pub struct CleanArgs {
    #[arg(long)]
    pub instances: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, value_parser = kebab::<OverlapDenominator>)]
    pub denominator: Option<OverlapDenominator>,
}

#[derive(Debug, Args)]
pub struct SteerArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub idf: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Instances to steer; otherwise --context and --target.
    #[arg(long)]
    pub instances: Option<PathBuf>,
    /// Context utterance; repeatable, oldest first.
    #[arg(long)]
    pub context: Vec<String>,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Also append chosen CRG sequences to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub extraction: ExtractionArgs,
    #[command(flatten)]
    pub decode: DecodeArgs,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

/// What a run read and wrote, for its manifest.
#[derive(Debug, Default)]
pub struct RunRecord {
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub stdin: Vec<String>,
    pub skip_manifest: bool,
}

pub struct Ctx<'a> {
    pub settings: Settings,
    pub workers: usize,
    pub input: &'a mut dyn BufRead,
    pub output: &'a mut dyn Write,
    pub record: RunRecord,
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
    log::set_max_level(level);
}

/// Runs the CLI with process stdio.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdin = std::io::stdin();
    let mut input = stdin.lock();
    let stdout = std::io::stdout();
    let mut output = stdout.lock();
    let mut err = std::io::stderr();
    dispatch_io(args, &mut input, &mut output, &mut err)
}

/// [`dispatch`] with explicit streams.
pub fn dispatch_io<I, T>(args: I, input: &mut dyn BufRead, output: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(output, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    init_logging(cli.verbose);
    let argv: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match run(cli, argv, input, output) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(
                err,
                "error: {msg}\n\nUsage: bridgepath <COMMAND> [OPTIONS]  (see `bridgepath --help`)"
            );
            EXIT_USAGE
        }
        Err(CliError::Data(e)) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_DATA
        }
    }
}

fn run(cli: Cli, argv: Vec<String>, input: &mut dyn BufRead, output: &mut dyn Write) -> Result<(), CliError> {
    let name = cli.command.name();
    if let Command::Replay(a) = &cli.command {
        return commands::replay(&a.manifest, input, output);
    }
    let settings = Settings::load(cli.config.as_deref(), name)?;
    let workers = settings.pick(cli.workers, "workers", 1usize)?;
    if workers == 0 {
        return Err(usage("--workers must be >= 1"));
    }
    if let Some(c) = &cli.config {
        // The config is an input; replays read it again.
        settings.record("config-file", &c.display().to_string());
    }
    let started = unix_now();
    let mut ctx = Ctx {
        settings,
        workers,
        input,
        output,
        record: RunRecord::default(),
    };
    if let Some(c) = &cli.config {
        ctx.record.inputs.push(c.clone());
    }
    commands::execute(cli.command, &mut ctx)?;
    ctx.output.flush().map_err(anyhow::Error::from)?;
    let record = ctx.record;
    if let (Some(first), false) = (record.outputs.first(), record.skip_manifest) {
        let manifest = RunManifest {
            tool: "bridgepath".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: name.into(),
            argv,
            cwd: std::env::current_dir().map_err(anyhow::Error::from)?,
            config: ctx.settings.snapshot(),
            seed: record.seed,
            inputs: record.inputs.clone(),
            outputs: record.outputs.clone(),
            stdin: record.stdin.clone(),
            started_unix: started,
            finished_unix: unix_now(),
        };
        manifest.write(&manifest_path(first))?;
    }
    Ok(())
}
