//! Command-line front end. The `groupenc` binary only forwards its
//! arguments to [`run`].
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage, format or file error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::benchmark::{run_benchmark, BenchmarkPlan, Dataset, DatasetSource, SYNTHETIC};
use crate::data::{
    load_matrix, preprocess, save_matrix, MatrixFormat, PreprocessConfig, SyntheticConfig,
};
use crate::error::{Error, Result};
use crate::group_loss::GroupStrategy;
use crate::models::{load_model, save_model, ModelConfig, ModelKind, DEFAULT_KL_WEIGHT};
use crate::nn::AdamConfig;
use crate::rng::SeededRng;
use crate::rnx::evaluate;
use crate::trainer::{resume, train, TrainConfig};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "GROUPENC_THREADS";

#[derive(Parser, Debug)]
#[command(name = "groupenc", version, about = "Group-loss encoder, VAE baseline and R_NX evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Normalise, log-transform, scale and PCA-reduce a matrix.
    Preprocess(PreprocessArgs),
    /// Train a model and write its checkpoint and loss log.
    Train(TrainArgs),
    /// Embed data with a trained model (posterior means).
    Embed(EmbedArgs),
    /// Score an embedding: R_NX curve and local/global AUCs.
    Eval(EvalArgs),
    /// Train and score every run of a benchmark plan.
    Benchmark(BenchmarkArgs),
}

#[derive(Args, Debug)]
struct PreprocessArgs {
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Principal components to keep; 0 disables PCA.
    #[arg(long, default_value_t = 50)]
    pca: usize,
    /// Where to write the PCA model (default: <output>.pca).
    #[arg(long)]
    pca_model: Option<PathBuf>,
    /// Upper clip after standardisation.
    #[arg(long, default_value_t = 10.0)]
    clip: f64,
    /// Input is already normalised: skip row normalisation and log1p.
    #[arg(long)]
    skip_norm_log: bool,
    #[arg(long)]
    no_normalize: bool,
    #[arg(long)]
    no_log1p: bool,
    #[arg(long)]
    no_scale: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    data: PathBuf,
    #[arg(long, value_parser = ["vae", "groupenc"], default_value = "groupenc")]
    model: String,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Group size (groupenc only; default 4).
    #[arg(long)]
    gamma: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_KL_WEIGHT)]
    kl_weight: f64,
    #[arg(long, value_parser = ["headed", "disjoint"], default_value = "headed")]
    strategy: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    #[arg(long, default_value_t = 512)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    /// Checkpoint to write.
    #[arg(short, long)]
    output: PathBuf,
    /// Loss log (default: <output>.log.csv).
    #[arg(long)]
    log: Option<PathBuf>,
    /// Continue from this checkpoint instead of starting fresh.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Checkpoint every this many epochs (0: only at the end).
    #[arg(long, default_value_t = 0)]
    log_every: usize,
}

#[derive(Args, Debug)]
struct EmbedArgs {
    checkpoint: PathBuf,
    data: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    hd: PathBuf,
    ld: PathBuf,
    /// Evaluate on a seeded random subset of this many rows.
    #[arg(long)]
    subsample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix: writes <prefix>_curve.csv and <prefix>_scores.txt.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    /// Plan file; without one the built-in synthetic plan is used.
    plan: Option<PathBuf>,
    /// Include the built-in synthetic dataset.
    #[arg(long)]
    synthetic: bool,
    /// Runs to execute at once.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Override the plan's output directory.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
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
    let result = match cli.command {
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::Train(a) => cmd_train(a),
        Command::Embed(a) => cmd_embed(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Benchmark(a) => cmd_benchmark(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Thread cap from the environment, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
}

fn load(path: &Path) -> Result<crate::tensor::DenseMatrix> {
    load_matrix(path, MatrixFormat::from_path(path))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_preprocess(a: PreprocessArgs) -> Result<()> {
    let m = load(&a.input)?;
    let config = PreprocessConfig {
        row_normalize: !a.no_normalize,
        log1p: !a.no_log1p,
        standardize: !a.no_scale,
        scale_clip: a.clip,
        pca_components: (a.pca > 0).then_some(a.pca),
        skip_row_normalize_and_log: a.skip_norm_log,
    };
    let (out, pca) = preprocess(&m, &config)?;
    save_matrix(&a.output, &out, MatrixFormat::from_path(&a.output))?;
    if let Some(model) = pca {
        let path = a.pca_model.unwrap_or_else(|| with_suffix(&a.output, ".pca"));
        model.save(&path)?;
    }
    println!("{} rows × {} columns -> {}", out.rows(), out.cols(), a.output.display());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let kind: ModelKind = a.model.parse()?;
    if kind == ModelKind::Vae && a.gamma.is_some() {
        return Err(Error::config("--gamma only applies to --model groupenc"));
    }
    let data = load(&a.data)?;
    let train_config = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        adam: AdamConfig {
            learning_rate: a.lr,
            ..AdamConfig::default()
        },
        seed: a.seed,
        log_every: a.log_every,
        checkpoint_path: Some(a.output.clone()),
    };
    let (model, log) = match &a.resume {
        Some(path) => resume(load_model(path)?, &train_config, &data)?,
        None => {
            let mut config = match kind {
                ModelKind::GroupEnc => ModelConfig::groupenc(data.cols(), a.dim, a.gamma.unwrap_or(4)),
                ModelKind::Vae => ModelConfig::vae(data.cols(), a.dim),
            };
            config.kl_weight = a.kl_weight;
            config.group_strategy = a.strategy.parse::<GroupStrategy>()?;
            train(&config, &train_config, &data)?
        }
    };
    save_model(&a.output, &model)?;
    log.write(&a.log.unwrap_or_else(|| with_suffix(&a.output, ".log.csv")))?;
    match log.records.last() {
        Some(r) => println!(
            "{} epochs={} total={:.6} primary={:.6} kl={:.6} seconds={:.2}",
            model.config.kind,
            model.epochs_trained,
            r.loss.total,
            r.loss.primary,
            r.loss.kl,
            log.total_seconds()
        ),
        None => println!("{} epochs={} (already complete)", model.config.kind, model.epochs_trained),
    }
    Ok(())
}

fn cmd_embed(a: EmbedArgs) -> Result<()> {
    let model = load_model(&a.checkpoint)?;
    let data = load(&a.data)?;
    if data.cols() != model.config.input_dim {
        return Err(Error::format(format!(
            "{} has {} columns, the model expects {}",
            a.data.display(),
            data.cols(),
            model.config.input_dim
        )));
    }
    let z = model.embed(&data)?;
    save_matrix(&a.output, &z, MatrixFormat::from_path(&a.output))?;
    println!("{} rows × {} columns -> {}", z.rows(), z.cols(), a.output.display());
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let hd = load(&a.hd)?;
    let ld = load(&a.ld)?;
    let result = evaluate(&hd, &ld, a.subsample, &mut SeededRng::new(a.seed, "eval"))?;
    result.write_curve(&with_suffix(&a.output, "_curve.csv"))?;
    result.write_scores(&with_suffix(&a.output, "_scores.txt"))?;
    print!("{}", result.scores_text());
    Ok(())
}

fn cmd_benchmark(a: BenchmarkArgs) -> Result<()> {
    let mut plan = match &a.plan {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let base = path.parent().unwrap_or(Path::new("."));
            BenchmarkPlan::parse(&text, base)?
        }
        None if a.synthetic => BenchmarkPlan::default(),
        None => return Err(Error::config("benchmark needs a plan file or --synthetic")),
    };
    if a.synthetic && !plan.datasets.iter().any(|d| d.name == SYNTHETIC) {
        plan.datasets.push(Dataset {
            name: SYNTHETIC.into(),
            source: DatasetSource::Synthetic(SyntheticConfig::default()),
        });
    }
    if let Some(out) = a.output {
        plan.output = out;
    }
    let jobs = match thread_cap() {
        Some(cap) => a.jobs.min(cap),
        None => a.jobs,
    };
    let report = run_benchmark(&plan, jobs)?;
    let names: Vec<String> = plan.datasets.iter().map(|d| d.name.clone()).collect();
    println!("global SP\n{}", report.summary_csv(true, &names));
    println!("local SP\n{}", report.summary_csv(false, &names));
    let failed = report.records.iter().filter(|r| !r.ok()).count();
    if failed > 0 {
        println!("{failed} of {} runs failed; see records.csv", report.records.len());
    }
    println!("results in {}", plan.output.display());
    Ok(())
}
