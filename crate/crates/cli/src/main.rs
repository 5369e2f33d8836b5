//! `mimic`: operator commands for the style-embedded TTS workflow.

mod commands;
mod config;
mod runlog;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::CliConfig;

const NORM_MODES: [&str; 4] = ["none", "mfcc", "prosody", "both"];
const VOCODERS: [&str; 2] = ["dsp", "neural"];
const KINDS: [&str; 2] = ["tts", "external"];

#[derive(Debug, Parser)]
#[command(name = "mimic", version, about = "Style-embedded TTS: training, synthesis and listening tests")]
struct Cli {
    /// TOML settings file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Which feature streams are z-scored per corpus.
    #[arg(long, global = true, value_parser = NORM_MODES)]
    norm: Option<String>,
    #[arg(long, global = true, value_parser = VOCODERS)]
    vocoder: Option<String>,
    /// Main output file or directory of the command.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Where to write the run log; defaults to next to the output.
    #[arg(long, global = true, value_name = "PATH")]
    run_log: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a labelled synthetic corpus (WAVs plus manifest).
    GenSynthetic(GenSynthetic),
    /// Extract MFCC, prosody and word-vector features for a manifest.
    ExtractFeatures(ExtractFeatures),
    /// Train the style classifier on one or more feature files.
    TrainClassifier(TrainClassifier),
    /// Re-estimate batch-norm statistics on target-domain features.
    AdaptBn(AdaptBn),
    /// Write one style embedding per utterance of a manifest.
    LabelCorpus(LabelCorpus),
    /// Train prosody and acoustic models into a model bundle.
    TrainTts(TrainTts),
    /// Train every model on a generated synthetic corpus.
    TrainSynthetic(TrainSynthetic),
    /// Synthesize text under a style to a WAV file.
    Synthesize(Synthesize),
    /// Answer a spoken query in the style extracted from it.
    Respond(Respond),
    /// Synthesize listening-test stimuli into a pool directory.
    BuildAbx(BuildAbx),
    /// Per-style F0 mean and spread.
    F0Stats(F0Stats),
    /// Run the HTTP service; `--out` is the answer-log directory.
    Serve(Serve),
}

#[derive(Debug, Args)]
struct GenSynthetic {
    /// Utterances per style; defaults to the config value.
    #[arg(long)]
    per_class: Option<usize>,
    /// Comma-separated subset of styles.
    #[arg(long, value_delimiter = ',')]
    styles: Vec<String>,
}

#[derive(Debug, Args)]
struct ExtractFeatures {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "tts", value_parser = KINDS)]
    kind: String,
}

#[derive(Debug, Args)]
struct TrainClassifier {
    /// Feature files; each corpus gets its own normalization statistics.
    #[arg(long, required = true, num_args = 1..)]
    features: Vec<PathBuf>,
}

#[derive(Debug, Args)]
struct AdaptBn {
    /// Classifier checkpoint.
    #[arg(long)]
    model: PathBuf,
    /// Target-domain feature file.
    #[arg(long)]
    features: PathBuf,
    /// Normalization statistics for the target; fitted on it when absent.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LabelCorpus {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "tts", value_parser = KINDS)]
    kind: String,
    /// Normalization statistics; fitted on the manifest's audio when absent.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainTts {
    #[arg(long)]
    manifest: PathBuf,
    /// Embedding file from `label-corpus`.
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long, default_value = "tts", value_parser = KINDS)]
    kind: String,
    /// Classifier to bundle for query extraction.
    #[arg(long)]
    classifier: Option<PathBuf>,
    /// Normalization statistics applied to queries.
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Also train the style-free comparator models.
    #[arg(long)]
    baseline: bool,
}

#[derive(Debug, Args)]
struct TrainSynthetic {
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    baseline: bool,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["style", "mix", "embedding", "baseline"]))]
struct Synthesize {
    /// Model bundle directory.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    text: String,
    /// Style name, e.g. `happy`.
    #[arg(long)]
    style: Option<String>,
    /// Weighted mixture, e.g. `happy:3,neutral:1`.
    #[arg(long)]
    mix: Option<String>,
    /// Six comma-separated probabilities in style order.
    #[arg(long)]
    embedding: Option<String>,
    /// Use the style-free comparator models.
    #[arg(long)]
    baseline: bool,
    #[arg(long)]
    speaker: Option<String>,
}

#[derive(Debug, Args)]
struct Respond {
    #[arg(long)]
    model: PathBuf,
    /// Query WAV.
    #[arg(long)]
    query: PathBuf,
    #[arg(long)]
    query_text: String,
    /// Response text.
    #[arg(long)]
    text: String,
    #[arg(long)]
    speaker: Option<String>,
}

#[derive(Debug, Args)]
struct BuildAbx {
    #[arg(long)]
    model: PathBuf,
    /// Samples synthesized per style.
    #[arg(long, default_value_t = 2)]
    per_style: usize,
    #[arg(long, value_delimiter = ',')]
    styles: Vec<String>,
    /// Baseline-vs-styled preference items; needs a bundle with a baseline.
    #[arg(long, default_value_t = 0)]
    preference: usize,
    /// Manifest of spoken queries for query-match items.
    #[arg(long)]
    queries: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["manifest", "pool"]))]
struct F0Stats {
    /// Labelled manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Stimulus pool; groups the ABX audio by style.
    #[arg(long)]
    pool: Option<PathBuf>,
    #[arg(long, default_value = "tts", value_parser = KINDS)]
    kind: String,
}

#[derive(Debug, Args)]
struct Serve {
    #[arg(long)]
    host: Option<String>,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    model_dir: Option<PathBuf>,
    #[arg(long)]
    pool_dir: Option<PathBuf>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenSynthetic(_) => "gen-synthetic",
            Command::ExtractFeatures(_) => "extract-features",
            Command::TrainClassifier(_) => "train-classifier",
            Command::AdaptBn(_) => "adapt-bn",
            Command::LabelCorpus(_) => "label-corpus",
            Command::TrainTts(_) => "train-tts",
            Command::TrainSynthetic(_) => "train-synthetic",
            Command::Synthesize(_) => "synthesize",
            Command::Respond(_) => "respond",
            Command::BuildAbx(_) => "build-abx",
            Command::F0Stats(_) => "f0-stats",
            Command::Serve(_) => "serve",
        }
    }

    /// Default output and whether it is a directory.
    fn default_out(&self) -> (&'static str, bool) {
        match self {
            Command::GenSynthetic(_) => ("synthetic", true),
            Command::ExtractFeatures(_) => ("features.json", false),
            Command::TrainClassifier(_) => ("classifier", true),
            Command::AdaptBn(_) => ("classifier-adapted.ckpt", false),
            Command::LabelCorpus(_) => ("embeddings.jsonl", false),
            Command::TrainTts(_) | Command::TrainSynthetic(_) => ("model", true),
            Command::Synthesize(_) => ("out.wav", false),
            Command::Respond(_) => ("response.wav", false),
            Command::BuildAbx(_) => ("pool", true),
            Command::F0Stats(_) => ("f0_stats.csv", false),
            Command::Serve(_) => ("data", true),
        }
    }
}

fn resolve_config(cli: &Cli) -> anyhow::Result<CliConfig> {
    let mut cfg = match &cli.config {
        Some(p) => CliConfig::from_file(p)?,
        None => CliConfig::default(),
    };
    if let Some(n) = &cli.norm {
        cfg.norm = n.parse()?;
    }
    if let Some(v) = &cli.vocoder {
        cfg.vocoder = Some(v.parse()?);
    }
    let seed = cli.seed.unwrap_or(cfg.seed);
    Ok(cfg.seeded(seed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .with_writer(std::io::stderr)
        .init();

    let name = cli.command.name();
    let (default_out, out_is_dir) = cli.command.default_out();
    let cfg = match resolve_config(&cli) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let out = match (&cli.out, &cli.command) {
        (Some(o), _) => o.clone(),
        (None, Command::Serve(_)) => match commands::service_config(&cfg) {
            Ok(sc) => sc.data_dir,
            Err(e) => return fail(&e),
        },
        (None, _) => default_out.into(),
    };
    let log_path = cli.run_log.clone().unwrap_or_else(|| runlog::default_path(&out, out_is_dir));
    let mut log = runlog::RunLog::start(name, &cfg);
    tracing::info!(command = name, seed = cfg.seed, out = %out.display(), "start");

    let result = commands::run(&cli.command, &cfg, &out);
    let code = match &result {
        Ok(report) => {
            log.finish_ok(report);
            ExitCode::SUCCESS
        }
        Err(e) => {
            log.finish_err(e);
            ExitCode::FAILURE
        }
    };
    if let Err(e) = log.write(&log_path) {
        tracing::warn!(error = %e, "could not write the run log");
    }
    match result {
        Ok(_) => {
            tracing::info!(command = name, run_log = %log_path.display(), "done");
            code
        }
        Err(e) => fail(&e),
    }
}

fn fail(e: &anyhow::Error) -> ExitCode {
    eprintln!("error: {}", runlog::one_line(e));
    ExitCode::FAILURE
}
