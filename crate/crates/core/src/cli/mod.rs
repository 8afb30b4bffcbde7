//! Command-line front end: `synth`, `prepare`, `train` and `eval`.

mod config;
mod pipeline;
mod run;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::dataset::{apply_standardizer, decode_dataset, encode_dataset, import_text, StandardizerParams, FEMB_MAGIC};
use crate::error::{Error, Result};
use crate::models::load_checkpoint;
use crate::synthgen::{generate, SynthConfig};
use crate::train::{LabeledData, TrainConfig};

pub use config::{DataSource, ExperimentConfig, ModelConfig, RepeatSeeds, SplitConfig};
pub use pipeline::{
    prepare, read_json, write_json, LabelBinarizer, PreparedData, SplitFile, Splits, DATASET_FILE, SPLITS_FILE,
    STANDARDIZER_FILE, VOCAB_FILE,
};
pub use run::{
    mean_std, repeat_dir, run_experiment, run_once, EvalReport, RepeatSummary, RunReport, SummaryRow, TopKReport,
    CHECKPOINT_FILE, CONFIG_FILE, EPOCH_LOG_FILE, REPORT_JSON, REPORT_TEXT, ROUND_LOG_FILE, SUMMARY_JSON,
    SUMMARY_TEXT,
};

#[derive(Debug, Parser)]
#[command(name = "fedcode", version, about = "Federated multi-label classification over text embeddings")]
pub struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file (synth) or directory (prepare, train, eval).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON config file (synth config for `synth`, experiment for `train`).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Only print errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic embedding dataset.
    Synth(SynthArgs),
    /// Filter rare labels, split, and fit the standardizer and vocabulary.
    Prepare(PrepareArgs),
    /// Run a centralized or federated experiment.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n_samples: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub n_labels: Option<usize>,
    #[arg(long)]
    pub freq_exponent: Option<f64>,
    #[arg(long)]
    pub mean_cardinality: Option<f64>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Dataset file (binary, or tab-separated text).
    #[arg(long)]
    pub input: PathBuf,
    /// Train/val/test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.70, 0.15, 0.15])]
    pub ratios: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    pub min_count: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Number of independent splits (seeds seed, seed+1, ...).
    #[arg(long)]
    pub repeats: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub standardizer: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Add a block for the K most frequent training labels; repeatable.
    #[arg(long)]
    pub topk: Vec<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

/// Prints progress unless quiet; warnings always go to stderr.
pub struct Console {
    quiet: bool,
}

impl Console {
    pub fn new(quiet: bool) -> Self {
        Console { quiet }
    }

    pub fn say(&self, msg: &str) {
        if !self.quiet {
            println!("{}", msg.trim_end());
        }
    }

    pub fn warn(&self, msg: &str) {
        eprintln!("warning: {msg}");
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let console = Console::new(cli.quiet);
    match &cli.command {
        Command::Synth(a) => cmd_synth(cli, a, &console),
        Command::Prepare(a) => cmd_prepare(cli, a, &console),
        Command::Train(a) => cmd_train(cli, a, &console),
        Command::Eval(a) => cmd_eval(cli, a, &console),
    }
}

fn require_out(cli: &Cli) -> Result<&Path> {
    cli.out.as_deref().ok_or_else(run::no_output_dir)
}

fn quantile(sorted: &[usize], q: f64) -> usize {
    sorted[((sorted.len() - 1) as f64 * q).round() as usize]
}

pub fn cmd_synth(cli: &Cli, a: &SynthArgs, console: &Console) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => read_json::<SynthConfig>(p)?,
        None => {
            let (Some(n), Some(d), Some(l)) = (a.n_samples, a.dim, a.n_labels) else {
                return Err(Error::Config("need --config or all of --n-samples, --dim, --n-labels".into()));
            };
            SynthConfig::new(n, d, l)
        }
    };
    cfg.n_samples = a.n_samples.unwrap_or(cfg.n_samples);
    cfg.dim = a.dim.unwrap_or(cfg.dim);
    cfg.n_labels = a.n_labels.unwrap_or(cfg.n_labels);
    cfg.freq_exponent = a.freq_exponent.unwrap_or(cfg.freq_exponent);
    cfg.mean_cardinality = a.mean_cardinality.unwrap_or(cfg.mean_cardinality);
    cfg.noise_sigma = a.noise_sigma.unwrap_or(cfg.noise_sigma);
    cfg.seed = cli.seed.unwrap_or(cfg.seed);
    cfg.validate()?;
    let out = require_out(cli)?;

    let ds = generate(&cfg)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(out, encode_dataset(&ds)?)?;

    let mut support = ds.label_support();
    support.sort_unstable();
    console.say(&format!(
        "wrote {}: n={} d={} labels={} support min/q25/median/q75/max = {}/{}/{}/{}/{}",
        out.display(),
        ds.len(),
        ds.dim(),
        ds.n_labels(),
        quantile(&support, 0.0),
        quantile(&support, 0.25),
        quantile(&support, 0.5),
        quantile(&support, 0.75),
        quantile(&support, 1.0),
    ));
    Ok(())
}

/// Reads a dataset file, accepting both the binary and the text format.
pub fn read_any_dataset(path: &Path) -> Result<crate::dataset::EmbeddingDataset> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(FEMB_MAGIC) {
        return decode_dataset(&bytes);
    }
    let text = String::from_utf8(bytes).map_err(|e| Error::format(e.utf8_error().valid_up_to(), "neither a binary dataset nor UTF-8 text"))?;
    import_text(&text)
}

pub fn cmd_prepare(cli: &Cli, a: &PrepareArgs, console: &Console) -> Result<()> {
    let ratios: [f64; 3] = a
        .ratios
        .as_slice()
        .try_into()
        .map_err(|_| Error::Config("--ratios takes three values".into()))?;
    let split = SplitConfig {
        ratios,
        min_count: a.min_count,
    };
    if ratios.iter().any(|r| r.is_nan() || *r <= 0.0) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios {ratios:?} must be positive and sum to 1")));
    }
    let out = require_out(cli)?;
    let raw = read_any_dataset(&a.input)?;
    let prepared = prepare(&raw, split.ratios, split.min_count, cli.seed.unwrap_or(0))?;
    prepared.save(out)?;
    let idx = &prepared.split.indices;
    console.say(&format!(
        "kept {} of {} samples, {} labels with support >= {}; train={} val={} test={}",
        prepared.dataset.len(),
        raw.len(),
        prepared.binarizer.codes.len(),
        split.min_count,
        idx.train.len(),
        idx.val.len(),
        idx.test.len()
    ));
    Ok(())
}

pub fn cmd_train(cli: &Cli, a: &TrainArgs, console: &Console) -> Result<()> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("train needs --config".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(k) = a.repeats {
        cfg.n_repeats = k;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = Some(out.clone());
    }
    let cfg = cfg.resolve()?;
    let out = cfg.output_dir.clone().ok_or_else(run::no_output_dir)?;
    run_experiment(&cfg, &out, console)?;
    Ok(())
}

pub fn cmd_eval(cli: &Cli, a: &EvalArgs, console: &Console) -> Result<()> {
    let model = load_checkpoint(&fs::read(&a.checkpoint)?)?;
    let ds = read_any_dataset(&a.dataset)?;
    let standardizer: StandardizerParams = read_json(&a.standardizer)?;
    let binarizer: LabelBinarizer = read_json(&a.vocab)?;
    let vocab = binarizer.vocab()?;
    let spec = model.spec();
    if spec.input_dim != ds.dim() || standardizer.mean.len() != ds.dim() {
        return Err(Error::Dimension {
            op: "checkpoint/standardizer vs dataset dim",
            left: (spec.input_dim, standardizer.mean.len()),
            right: (ds.dim(), ds.dim()),
        });
    }
    if spec.output_dim != vocab.len() {
        return Err(Error::Dimension {
            op: "checkpoint outputs vs vocabulary",
            left: (spec.output_dim, 1),
            right: (vocab.len(), 1),
        });
    }
    let (ds, unknown) = ds.remap_labels(&vocab);
    if unknown > 0 {
        console.warn(&format!("{unknown} label occurrences are not in the vocabulary"));
    }
    let data = LabeledData::new(apply_standardizer(ds.x(), &standardizer)?, ds.label_matrix())?;
    let cfg = TrainConfig {
        threshold: a.threshold,
        ..Default::default()
    };
    cfg.validate()?;
    let report = EvalReport::build(&model, &data, &binarizer.train_support, &a.topk, &cfg)?;
    console.say(&report.render());
    if let Some(out) = &cli.out {
        fs::create_dir_all(out)?;
        write_json(&out.join(REPORT_JSON), &report)?;
        fs::write(out.join(REPORT_TEXT), report.render())?;
    }
    Ok(())
}
