//! The `scvi-hmm` command line.
//!
//! ```text
//! scvi-hmm prepare --corpus corpus.txt --out-dir data/ [--seed 0] [--min-count 1] [--max-vocab N]
//! scvi-hmm synth   --K 3 --W 20 --T 100000 --out-dir data/ [--concentration 1] [--seed 0]
//! scvi-hmm train   --stream data/stream.bin --out-dir run/ [--config run.json] [--algo scvi|svi] ...
//! scvi-hmm eval    --checkpoint run/checkpoint.json --stream data/stream.bin [--holdout-frac 0.05]
//! scvi-hmm plot    --out compare.svg scvi.csv svi.csv
//! ```
//!
//! `train` reads an optional flat JSON config (schema in
//! `docs/run-config.schema.json`); any flag given on the command line
//! overrides the file, and the file overrides the built-in defaults.
//!
//! Exit codes: 0 success, 1 usage, 2 missing input, 3 corrupt or mismatched
//! artifact, 4 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Algorithm, Checkpoint};
use crate::data;
use crate::error::{Error, Result};
use crate::eval::predictive_log_likelihood;
use crate::model::ModelConfig;
use crate::report::{self, MetricsTrace};
use crate::svi::{SviTrainer, DEFAULT_BUFFER};
use crate::trainer::{run_until, GuardPolicy, ScviTrainer, StochasticTrainer, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_MISSING: i32 = 2;
pub const EXIT_CORRUPT: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

pub const STREAM_FILE: &str = "stream.bin";
pub const VOCAB_FILE: &str = "vocab.tsv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const RUN_CONFIG_FILE: &str = "run_config.json";
pub const EVAL_FILE: &str = "eval.json";

#[derive(Debug, Parser)]
#[command(name = "scvi-hmm", version, about = "Stochastic collapsed variational inference for HMMs")]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Build a vocabulary and a token stream cache from a text corpus.
    Prepare(PrepareArgs),
    /// Sample a synthetic stream from a random HMM.
    Synth(SynthArgs),
    /// Train SCVI or the SVI baseline on a stream cache.
    Train(TrainArgs),
    /// Held-out log likelihood of a checkpoint.
    Eval(EvalArgs),
    /// Draw metrics CSV files as one SVG chart.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
struct PrepareArgs {
    /// One sentence per line, whitespace separated tokens.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Seed for the sentence shuffle.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    min_count: usize,
    /// Vocabulary size cap, reserved symbols included.
    #[arg(long)]
    max_vocab: Option<usize>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long = "K")]
    k: usize,
    #[arg(long = "W")]
    w: usize,
    #[arg(long = "T")]
    t: usize,
    /// Symmetric Dirichlet concentration of the generating rows.
    #[arg(long, default_value_t = 1.0)]
    concentration: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlgoArg {
    Scvi,
    Svi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GuardArg {
    Uniform,
    Stationary,
    Stored,
}

impl From<GuardArg> for GuardPolicy {
    fn from(g: GuardArg) -> Self {
        match g {
            GuardArg::Uniform => GuardPolicy::Uniform,
            GuardArg::Stationary => GuardPolicy::Stationary,
            GuardArg::Stored => GuardPolicy::Stored,
        }
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    stream: Option<PathBuf>,
    /// Vocabulary file; sets W. Defaults to vocab.tsv next to the stream.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Continue from a checkpoint. Model and training settings come from it.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long, value_enum)]
    algo: Option<AlgoArg>,
    #[arg(long = "K", alias = "num-states")]
    k: Option<usize>,
    /// Vocabulary size when no vocabulary file is available.
    #[arg(long = "W", alias = "vocab-size")]
    w: Option<usize>,
    #[arg(long = "L", alias = "subchain-len")]
    l: Option<usize>,
    #[arg(long = "M", alias = "minibatch-size")]
    m: Option<usize>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    guard_policy: Option<GuardArg>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    init_scale: Option<f64>,
    /// Row-normalize inner transition weights (`false` for the unnormalized form).
    #[arg(long, value_name = "BOOL")]
    normalize_inner_rows: Option<bool>,
    /// SVI observation buffer on each side of a subchain.
    #[arg(long)]
    buffer: Option<usize>,
    #[arg(long)]
    eval_every: Option<u64>,
    #[arg(long)]
    holdout_frac: Option<f64>,
    /// Worker threads for minibatch inference; 1 is bit-deterministic.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    stream: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    holdout_frac: f64,
    /// Where eval.json goes; defaults to the checkpoint's directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlotArgs {
    #[arg(long)]
    out: PathBuf,
    /// Metrics CSV files; each file stem becomes a legend label.
    #[arg(required = true)]
    csv: Vec<PathBuf>,
}

/// The `train` configuration file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub algo: Option<String>,
    pub num_states: Option<usize>,
    pub vocab_size: Option<usize>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub normalize_inner_rows: Option<bool>,
    pub subchain_len: Option<usize>,
    pub minibatch_size: Option<usize>,
    pub kappa: Option<f64>,
    pub iterations: Option<u64>,
    pub seed: Option<u64>,
    pub guard_policy: Option<GuardPolicy>,
    pub init_scale: Option<f64>,
    pub eval_every: Option<u64>,
    pub buffer: Option<usize>,
    pub holdout_frac: Option<f64>,
    pub threads: Option<usize>,
    pub stream: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

/// A fully resolved training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub buffer: usize,
    pub holdout_frac: f64,
    pub threads: usize,
    pub stream: PathBuf,
    pub vocab: Option<PathBuf>,
    pub out_dir: PathBuf,
}

pub const DEFAULT_NUM_STATES: usize = 12;
pub const DEFAULT_PRIOR: f64 = 0.1;
pub const DEFAULT_HOLDOUT: f64 = 0.05;

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { source, .. } if source.kind() == ErrorKind::NotFound => EXIT_MISSING,
        Error::Io { .. } => EXIT_USAGE,
        Error::Corrupt { .. } | Error::Parse { .. } | Error::Dimension(_) | Error::Vocabulary { .. } => EXIT_CORRUPT,
        e if e.is_numerical() => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();

    let result = match cli.command {
        Command::Prepare(a) => cmd_prepare(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Plot(a) => cmd_plot(&a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn cmd_prepare(a: &PrepareArgs) -> Result<()> {
    let sentences = data::read_corpus(&a.corpus)?;
    let vocab = data::build_vocab(&sentences, a.min_count, a.max_vocab)?;
    let stream = data::prepare_stream(&sentences, &vocab, a.seed)?;
    create_dir(&a.out_dir)?;
    data::write_stream_cache(&stream.tokens, &a.out_dir.join(STREAM_FILE))?;
    data::write_vocab(&vocab, &a.out_dir.join(VOCAB_FILE))?;
    println!("sentences {}", sentences.len());
    println!("vocab {}", vocab.len());
    println!("stream length {}", stream.len());
    Ok(())
}

#[derive(Serialize)]
struct TruthFile {
    init: Vec<f64>,
    theta: Vec<Vec<f64>>,
    phi: Vec<Vec<f64>>,
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let (truth, stream) = data::generate_synthetic(a.k, a.w, a.t, a.concentration, a.seed)?;
    create_dir(&a.out_dir)?;
    data::write_stream_cache(&stream.tokens, &a.out_dir.join(STREAM_FILE))?;
    data::write_vocab(&stream.vocab, &a.out_dir.join(VOCAB_FILE))?;
    let rows = |m: &ndarray::Array2<f64>| m.rows().into_iter().map(|r| r.to_vec()).collect();
    let file = TruthFile {
        init: truth.init.to_vec(),
        theta: rows(&truth.theta),
        phi: rows(&truth.phi),
    };
    let json = serde_json::to_vec_pretty(&file).expect("truth serializes");
    report::write_atomic(&a.out_dir.join("truth.json"), &json)?;
    println!("stream length {}", stream.len());
    Ok(())
}

fn read_config_file(path: &Path) -> Result<RunConfigFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        reason: e.to_string(),
    })
}

fn parse_algorithm(s: &str) -> Result<Algorithm> {
    match s {
        "scvi" => Ok(Algorithm::Scvi),
        "svi" => Ok(Algorithm::Svi),
        other => Err(Error::InvalidConfig(format!("unknown algorithm `{other}` (expected scvi or svi)"))),
    }
}

/// Vocabulary size from an explicit vocab file, an explicit size, a
/// vocab.tsv next to the stream, or the largest token, in that order.
fn resolve_vocab_size(vocab: Option<&Path>, size: Option<usize>, stream: &Path, tokens: &[u32]) -> Result<usize> {
    if let Some(path) = vocab {
        return Ok(data::read_vocab(path)?.len());
    }
    if let Some(w) = size {
        return Ok(w);
    }
    let sibling = stream.with_file_name(VOCAB_FILE);
    if sibling.is_file() {
        return Ok(data::read_vocab(&sibling)?.len());
    }
    Ok(tokens.iter().max().map_or(2, |&m| (m as usize + 1).max(2)))
}

fn resolve_run(a: &TrainArgs, tokens_for: impl FnOnce(&Path) -> Result<Vec<u32>>) -> Result<(RunConfig, Vec<u32>)> {
    let file = match &a.config {
        Some(p) => read_config_file(p)?,
        None => RunConfigFile::default(),
    };
    let stream = a
        .stream
        .clone()
        .or(file.stream.clone())
        .ok_or_else(|| Error::InvalidConfig("no stream given (--stream or \"stream\" in the config)".into()))?;
    let out_dir = a
        .out_dir
        .clone()
        .or(file.out_dir.clone())
        .ok_or_else(|| Error::InvalidConfig("no output directory given (--out-dir or \"out_dir\")".into()))?;
    let vocab = a.vocab.clone().or(file.vocab.clone());
    let tokens = tokens_for(&stream)?;
    let w = resolve_vocab_size(vocab.as_deref(), a.w.or(file.vocab_size), &stream, &tokens)?;

    let algorithm = match (a.algo, &file.algo) {
        (Some(AlgoArg::Scvi), _) => Algorithm::Scvi,
        (Some(AlgoArg::Svi), _) => Algorithm::Svi,
        (None, Some(s)) => parse_algorithm(s)?,
        (None, None) => Algorithm::Scvi,
    };
    let model = ModelConfig::new(
        a.k.or(file.num_states).unwrap_or(DEFAULT_NUM_STATES),
        w,
        a.alpha.or(file.alpha).unwrap_or(DEFAULT_PRIOR),
        a.beta.or(file.beta).unwrap_or(DEFAULT_PRIOR),
    )?
    .with_normalized_inner_rows(a.normalize_inner_rows.or(file.normalize_inner_rows).unwrap_or(true));
    let d = TrainConfig::default();
    let train = TrainConfig {
        subchain_len: a.l.or(file.subchain_len).unwrap_or(d.subchain_len),
        minibatch_size: a.m.or(file.minibatch_size).unwrap_or(d.minibatch_size),
        kappa: a.kappa.or(file.kappa).unwrap_or(d.kappa),
        iterations: a.iterations.or(file.iterations).unwrap_or(d.iterations),
        seed: a.seed.or(file.seed).unwrap_or(d.seed),
        guard_policy: a.guard_policy.map(GuardPolicy::from).or(file.guard_policy).unwrap_or(d.guard_policy),
        init_scale: a.init_scale.or(file.init_scale).unwrap_or(d.init_scale),
        eval_every: a.eval_every.or(file.eval_every).unwrap_or(d.eval_every),
    };
    train.validate()?;
    let run = RunConfig {
        algorithm,
        model,
        train,
        buffer: a.buffer.or(file.buffer).unwrap_or(DEFAULT_BUFFER),
        holdout_frac: a.holdout_frac.or(file.holdout_frac).unwrap_or(DEFAULT_HOLDOUT),
        threads: a.threads.or(file.threads).unwrap_or(1).max(1),
        stream,
        vocab,
        out_dir,
    };
    Ok((run, tokens))
}

/// Applies the settings a resumed run may change on top of a checkpoint.
fn resumed_run(a: &TrainArgs, ckpt: &Checkpoint, base: RunConfig) -> RunConfig {
    let mut train = ckpt.train.clone();
    if let Some(n) = a.iterations {
        train.iterations = n;
    }
    if let Some(e) = a.eval_every {
        train.eval_every = e;
    }
    RunConfig {
        algorithm: ckpt.algorithm,
        model: ckpt.model,
        train,
        buffer: ckpt.svi_buffer.unwrap_or(base.buffer),
        ..base
    }
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let (mut run, tokens) = resolve_run(a, data::read_stream_cache)?;
    let resume = match &a.resume {
        Some(p) => {
            let ckpt = Checkpoint::load(p)?;
            run = resumed_run(a, &ckpt, run);
            Some(ckpt)
        }
        None => None,
    };
    let (train_tokens, test_tokens) = data::split_tokens(&tokens, run.holdout_frac)?;
    if let Some(&bad) = tokens.iter().find(|&&x| x as usize >= run.model.vocab_size) {
        return Err(Error::Vocabulary {
            token: bad as usize,
            vocab_size: run.model.vocab_size,
        });
    }
    create_dir(&run.out_dir)?;
    let config_json = serde_json::to_vec_pretty(&run).expect("run config serializes");
    report::write_atomic(&run.out_dir.join(RUN_CONFIG_FILE), &config_json)?;

    let metrics_path = run.out_dir.join(METRICS_FILE);
    let mut trace = match &resume {
        Some(ckpt) if metrics_path.is_file() => {
            let mut t = report::read_metrics(&metrics_path)?;
            t.truncate_after(ckpt.iteration);
            t
        }
        _ => MetricsTrace::new(),
    };

    let mut trainer: Box<dyn StochasticTrainer + '_> = match (run.algorithm, &resume) {
        (Algorithm::Scvi, None) => Box::new(ScviTrainer::new(train_tokens, run.model, run.train.clone())?.with_threads(run.threads)?),
        (Algorithm::Scvi, Some(c)) => {
            let mut t = ScviTrainer::from_checkpoint(train_tokens, c)?.with_threads(run.threads)?;
            t.set_iterations(run.train.iterations);
            Box::new(t)
        }
        (Algorithm::Svi, None) => Box::new(
            SviTrainer::new(train_tokens, run.model, run.train.clone(), run.buffer)?.with_threads(run.threads)?,
        ),
        (Algorithm::Svi, Some(c)) => {
            let mut t = SviTrainer::from_checkpoint(train_tokens, c)?.with_threads(run.threads)?;
            t.set_iterations(run.train.iterations);
            Box::new(t)
        }
    };

    let ckpt_path = run.out_dir.join(CHECKPOINT_FILE);
    let result = run_until(
        trainer.as_mut(),
        run.train.iterations,
        run.train.eval_every,
        test_tokens,
        &mut trace,
        &mut |row| {
            log::info!(
                "iteration {} rho {:.4} heldout {:.6} nats/token ({:.1}s)",
                row.iteration,
                row.rho,
                row.heldout_ll_per_token,
                row.wall_seconds
            );
        },
    );
    // keep whatever progress was made, even on failure
    trainer.checkpoint().save(&ckpt_path)?;
    report::emit_metrics(&trace, &metrics_path)?;
    result?;

    println!("algorithm {}", run.algorithm);
    println!("iterations {}", trainer.iteration());
    if let Some(row) = trace.last() {
        println!("heldout_ll_per_token {}", row.heldout_ll_per_token);
    }
    println!("checkpoint {}", ckpt_path.display());
    Ok(())
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct EvalSummary {
    pub checkpoint: PathBuf,
    pub algorithm: Algorithm,
    pub iteration: u64,
    pub test_tokens: usize,
    pub heldout_ll_per_token: f64,
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let tokens = data::read_stream_cache(&a.stream)?;
    let (_, test) = data::split_tokens(&tokens, a.holdout_frac)?;
    let ll = predictive_log_likelihood(&ckpt.point_params()?, test)?;
    let summary = EvalSummary {
        checkpoint: a.checkpoint.clone(),
        algorithm: ckpt.algorithm,
        iteration: ckpt.iteration,
        test_tokens: test.len(),
        heldout_ll_per_token: ll,
    };
    let out_dir = match &a.out_dir {
        Some(d) => d.clone(),
        None => a.checkpoint.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf),
    };
    create_dir(&out_dir)?;
    let json = serde_json::to_vec_pretty(&summary).expect("summary serializes");
    report::write_atomic(&out_dir.join(EVAL_FILE), &json)?;
    println!("heldout_ll_per_token {ll}");
    Ok(())
}

fn cmd_plot(a: &PlotArgs) -> Result<()> {
    let traces = a
        .csv
        .iter()
        .map(|p| {
            let name = p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
            Ok((name, report::read_metrics(p)?))
        })
        .collect::<Result<Vec<_>>>()?;
    report::emit_plot(&traces, &a.out)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let missing = Error::io("x", std::io::Error::new(ErrorKind::NotFound, "gone"));
        assert_eq!(exit_code(&missing), EXIT_MISSING);
        assert_eq!(exit_code(&Error::corrupt("x", "bad")), EXIT_CORRUPT);
        assert_eq!(exit_code(&Error::InvalidConfig("k".into())), EXIT_USAGE);
        let nf = Error::NonFinite {
            what: "x",
            iteration: 1,
            subchain: None,
        };
        assert_eq!(exit_code(&nf), EXIT_NUMERICAL);
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["scvi-hmm"]), EXIT_USAGE);
        assert_eq!(run(["scvi-hmm", "plot", "--out", "x.svg"]), EXIT_USAGE);
        assert_eq!(run(["scvi-hmm", "train", "--kappa", "abc"]), EXIT_USAGE);
        assert_eq!(run(["scvi-hmm", "--help"]), EXIT_OK);
    }

    #[test]
    fn config_file_rejects_unknown_keys() {
        let err = serde_json::from_str::<RunConfigFile>(r#"{"kapa": 0.5}"#);
        assert!(err.is_err());
        let ok: RunConfigFile = serde_json::from_str(r#"{"kappa": 0.9, "guard_policy": "uniform"}"#).unwrap();
        assert_eq!(ok.guard_policy, Some(GuardPolicy::Uniform));
    }
}
