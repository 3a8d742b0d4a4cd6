//! Benchmark harness: trains every (dataset, dim, model, γ, seed)
//! combination of a plan, scores each embedding, and writes per-run
//! artifacts plus mean±sd summary tables (rows dim × model, one column per
//! dataset).
//!
//! Plan files are flat `key = value` text; lists are comma-separated and
//! `#` starts a comment:
//!
//! ```text
//! datasets = synthetic, data/pbmc.gmtx
//! dims = 2, 5, 10
//! models = vae, groupenc
//! gammas = 4, 5, 6
//! seeds = 0, 1, 2, 3, 4
//! epochs = 500
//! output = bench_out
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::data::{gaussian_mixture, load_matrix, save_matrix, MatrixFormat, SyntheticConfig};
use crate::error::{Error, Result};
use crate::group_loss::GroupStrategy;
use crate::models::{ModelConfig, ModelKind, DEFAULT_KL_WEIGHT};
use crate::nn::AdamConfig;
use crate::rng::SeededRng;
use crate::rnx::evaluate;
use crate::tensor::DenseMatrix;
use crate::trainer::{train, TrainConfig};

/// Dataset name that selects the built-in Gaussian mixture.
pub const SYNTHETIC: &str = "synthetic";

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSource {
    Synthetic(SyntheticConfig),
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub source: DatasetSource,
}

impl Dataset {
    pub fn load(&self) -> Result<DenseMatrix> {
        match &self.source {
            DatasetSource::Synthetic(c) => Ok(gaussian_mixture(c)?.matrix),
            DatasetSource::File(p) => load_matrix(p, MatrixFormat::from_path(p)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkPlan {
    pub datasets: Vec<Dataset>,
    pub dims: Vec<usize>,
    pub models: Vec<ModelKind>,
    pub gammas: Vec<usize>,
    pub seeds: Vec<u64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub kl_weight: f64,
    pub strategy: GroupStrategy,
    /// Evaluate on a seeded row subset of this size instead of all rows.
    pub subsample: Option<usize>,
    pub output: PathBuf,
    /// Keep the embedding of every run as a text file.
    pub save_embeddings: bool,
}

impl Default for BenchmarkPlan {
    fn default() -> Self {
        Self {
            datasets: vec![Dataset {
                name: SYNTHETIC.into(),
                source: DatasetSource::Synthetic(SyntheticConfig::default()),
            }],
            dims: vec![2, 5, 10],
            models: vec![ModelKind::Vae, ModelKind::GroupEnc],
            gammas: vec![4, 5, 6],
            seeds: vec![0, 1, 2, 3, 4],
            epochs: 500,
            batch_size: 512,
            learning_rate: AdamConfig::default().learning_rate,
            kl_weight: DEFAULT_KL_WEIGHT,
            strategy: GroupStrategy::Headed,
            subsample: None,
            output: PathBuf::from("benchmark_out"),
            save_embeddings: true,
        }
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::format(format!("plan key {key}: cannot parse {s:?}")))
        })
        .collect()
}

fn parse_one<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::format(format!("plan key {key}: cannot parse {value:?}")))
}

impl BenchmarkPlan {
    /// Parses a plan. Relative dataset and output paths are resolved
    /// against `base_dir`. Keys left out keep their defaults.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut plan = Self::default();
        let mut synthetic = SyntheticConfig::default();
        let mut dataset_names: Option<Vec<String>> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::format(format!("plan line {}: expected key = value", idx + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "datasets" => dataset_names = Some(parse_list(key, value)?),
                "dims" => plan.dims = parse_list(key, value)?,
                "models" => plan.models = parse_list(key, value)?,
                "gammas" => plan.gammas = parse_list(key, value)?,
                "seeds" => plan.seeds = parse_list(key, value)?,
                "epochs" => plan.epochs = parse_one(key, value)?,
                "batch_size" => plan.batch_size = parse_one(key, value)?,
                "learning_rate" => plan.learning_rate = parse_one(key, value)?,
                "kl_weight" => plan.kl_weight = parse_one(key, value)?,
                "strategy" => plan.strategy = parse_one(key, value)?,
                "subsample" => {
                    plan.subsample = match value {
                        "" | "none" => None,
                        v => Some(parse_one(key, v)?),
                    }
                }
                "output" => plan.output = base_dir.join(value),
                "save_embeddings" => plan.save_embeddings = parse_one(key, value)?,
                "synthetic_points" => synthetic.points = parse_one(key, value)?,
                "synthetic_dims" => synthetic.dims = parse_one(key, value)?,
                "synthetic_clusters" => synthetic.clusters = parse_one(key, value)?,
                "synthetic_spread" => synthetic.center_spread = parse_one(key, value)?,
                "synthetic_seed" => synthetic.seed = parse_one(key, value)?,
                other => {
                    return Err(Error::format(format!(
                        "plan line {}: unknown key {other:?}",
                        idx + 1
                    )))
                }
            }
        }
        let names = dataset_names.unwrap_or_else(|| vec![SYNTHETIC.to_string()]);
        plan.datasets = names
            .into_iter()
            .map(|n| {
                if n == SYNTHETIC {
                    Dataset {
                        name: n,
                        source: DatasetSource::Synthetic(synthetic.clone()),
                    }
                } else {
                    let path = base_dir.join(&n);
                    let name = path
                        .file_stem()
                        .map_or_else(|| n.clone(), |s| s.to_string_lossy().into_owned());
                    Dataset {
                        name,
                        source: DatasetSource::File(path),
                    }
                }
            })
            .collect();
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() || self.dims.is_empty() || self.seeds.is_empty() || self.models.is_empty() {
            return Err(Error::config("plan needs at least one dataset, dim, seed and model"));
        }
        if self.models.contains(&ModelKind::GroupEnc) && self.gammas.is_empty() {
            return Err(Error::config("groupenc runs need at least one gamma"));
        }
        let mut names: Vec<&str> = self.datasets.iter().map(|d| d.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("dataset names must be distinct"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs and batch size must be positive"));
        }
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
        .validate()
    }

    /// Every run of the plan in a fixed order: dataset, dim, model, γ, seed.
    pub fn runs(&self) -> Vec<RunSpec> {
        let mut out = Vec::new();
        for (d, _) in self.datasets.iter().enumerate() {
            for &dim in &self.dims {
                for &model in &self.models {
                    let gammas: Vec<Option<usize>> = match model {
                        ModelKind::Vae => vec![None],
                        ModelKind::GroupEnc => self.gammas.iter().map(|&g| Some(g)).collect(),
                    };
                    for gamma in gammas {
                        for &seed in &self.seeds {
                            out.push(RunSpec {
                                dataset: d,
                                model,
                                dim,
                                gamma,
                                seed,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunSpec {
    /// Index into the plan's datasets.
    pub dataset: usize,
    pub model: ModelKind,
    pub dim: usize,
    pub gamma: Option<usize>,
    pub seed: u64,
}

impl RunSpec {
    /// Summary row label, e.g. `vae` or `groupenc_g4`.
    pub fn label(&self) -> String {
        match self.gamma {
            Some(g) => format!("{}_g{g}", self.model),
            None => self.model.to_string(),
        }
    }

    fn dir_name(&self, dataset: &str) -> String {
        format!("{dataset}_{}_d{}_s{}", self.label(), self.dim, self.seed)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub dataset: String,
    pub spec: RunSpec,
    /// `None` on success, the error text otherwise.
    pub failure: Option<String>,
    pub local_sp: f64,
    pub global_sp: f64,
    pub train_seconds: f64,
}

impl RunRecord {
    pub fn ok(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkReport {
    pub records: Vec<RunRecord>,
}

/// Cell text for a summary table.
fn mean_sd(values: &[f64]) -> String {
    if values.is_empty() {
        return "NA".into();
    }
    let (mean, sd) = mean_and_sd(values);
    format!("{mean:.4}±{sd:.4}")
}

/// Sample mean and standard deviation (0 for a single value).
pub fn mean_and_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

impl BenchmarkReport {
    /// One row per run, without timings, so that repeated runs of a plan
    /// produce identical bytes.
    pub fn records_csv(&self) -> String {
        let mut out = String::from("dataset,model,dim,gamma,seed,status,local_sp,global_sp\n");
        for r in &self.records {
            let gamma = r.spec.gamma.map_or(String::new(), |g| g.to_string());
            let (status, l, g) = match &r.failure {
                None => ("ok".to_string(), r.local_sp.to_string(), r.global_sp.to_string()),
                Some(msg) => (format!("failed: {}", msg.replace([',', '\n'], ";")), String::new(), String::new()),
            };
            let _ = writeln!(
                out,
                "{},{},{},{gamma},{},{status},{l},{g}",
                r.dataset, r.spec.model, r.spec.dim, r.spec.seed
            );
        }
        out
    }

    pub fn timings_csv(&self) -> String {
        let mut out = String::from("dataset,model,dim,gamma,seed,train_seconds\n");
        for r in &self.records {
            let gamma = r.spec.gamma.map_or(String::new(), |g| g.to_string());
            let _ = writeln!(
                out,
                "{},{},{},{gamma},{},{:.3}",
                r.dataset, r.spec.model, r.spec.dim, r.spec.seed, r.train_seconds
            );
        }
        out
    }

    /// Successful-run scores grouped by (dim, label, dataset).
    pub fn grouped(&self, global: bool) -> BTreeMap<(usize, String, String), Vec<f64>> {
        let mut groups: BTreeMap<(usize, String, String), Vec<f64>> = BTreeMap::new();
        for r in self.records.iter().filter(|r| r.ok()) {
            groups
                .entry((r.spec.dim, r.spec.label(), r.dataset.clone()))
                .or_default()
                .push(if global { r.global_sp } else { r.local_sp });
        }
        groups
    }

    /// Mean±sd table: rows `dim,model`, one column per dataset.
    pub fn summary_csv(&self, global: bool, datasets: &[String]) -> String {
        let groups = self.grouped(global);
        let mut rows: Vec<(usize, String)> = groups.keys().map(|(d, l, _)| (*d, l.clone())).collect();
        rows.dedup();
        let mut out = format!("dim,model,{}\n", datasets.join(","));
        for (dim, label) in rows {
            let cells: Vec<String> = datasets
                .iter()
                .map(|ds| mean_sd(groups.get(&(dim, label.clone(), ds.clone())).map_or(&[][..], |v| v)))
                .collect();
            let _ = writeln!(out, "{dim},{label},{}", cells.join(","));
        }
        out
    }

    /// Mean score of one (dataset, dim, label) cell, if any run succeeded.
    pub fn mean(&self, dataset: &str, dim: usize, label: &str, global: bool) -> Option<f64> {
        self.grouped(global)
            .get(&(dim, label.to_string(), dataset.to_string()))
            .map(|v| mean_and_sd(v).0)
    }
}

fn run_one(plan: &BenchmarkPlan, spec: &RunSpec, name: &str, data: &DenseMatrix) -> Result<(f64, f64, f64)> {
    let mut config = match spec.model {
        ModelKind::GroupEnc => ModelConfig::groupenc(data.cols(), spec.dim, spec.gamma.unwrap_or(4)),
        ModelKind::Vae => ModelConfig::vae(data.cols(), spec.dim),
    };
    config.kl_weight = plan.kl_weight;
    config.group_strategy = plan.strategy;
    let train_config = TrainConfig {
        epochs: plan.epochs,
        batch_size: plan.batch_size,
        adam: AdamConfig {
            learning_rate: plan.learning_rate,
            ..AdamConfig::default()
        },
        seed: spec.seed,
        log_every: 0,
        checkpoint_path: None,
    };
    let (model, log) = train(&config, &train_config, data)?;
    let embedding = model.embed(data)?;
    let result = evaluate(data, &embedding, plan.subsample, &mut SeededRng::new(spec.seed, "eval"))?;

    let dir = plan.output.join("runs").join(spec.dir_name(name));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    log.write(&dir.join("train_log.csv"))?;
    result.write_curve(&dir.join("curve.csv"))?;
    result.write_scores(&dir.join("scores.txt"))?;
    if plan.save_embeddings {
        save_matrix(&dir.join("embedding.csv"), &embedding, MatrixFormat::DelimitedText)?;
    }
    Ok((result.local_sp, result.global_sp, log.total_seconds()))
}

/// Runs the whole plan with up to `jobs` runs at a time and writes
/// `records.csv`, `timings.csv`, `summary_local.csv` and
/// `summary_global.csv` into the plan's output directory. A failed run is
/// recorded and the others continue; dataset load failures mark all runs on
/// that dataset as failed.
pub fn run_benchmark(plan: &BenchmarkPlan, jobs: usize) -> Result<BenchmarkReport> {
    plan.validate()?;
    std::fs::create_dir_all(&plan.output).map_err(|e| Error::io(&plan.output, e))?;
    let data: Vec<std::result::Result<DenseMatrix, String>> = plan
        .datasets
        .iter()
        .map(|d| d.load().map_err(|e| e.to_string()))
        .collect();
    let runs = plan.runs();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    let records: Vec<RunRecord> = pool.install(|| {
        runs.par_iter()
            .map(|spec| {
                let name = &plan.datasets[spec.dataset].name;
                let outcome = match &data[spec.dataset] {
                    Ok(m) => run_one(plan, spec, name, m).map_err(|e| e.to_string()),
                    Err(e) => Err(e.clone()),
                };
                match outcome {
                    Ok((local_sp, global_sp, train_seconds)) => {
                        log::info!(
                            "{name} {} dim {} seed {}: local {local_sp:.4} global {global_sp:.4}",
                            spec.label(),
                            spec.dim,
                            spec.seed
                        );
                        RunRecord {
                            dataset: name.clone(),
                            spec: *spec,
                            failure: None,
                            local_sp,
                            global_sp,
                            train_seconds,
                        }
                    }
                    Err(msg) => {
                        log::error!("{name} {} dim {} seed {} failed: {msg}", spec.label(), spec.dim, spec.seed);
                        RunRecord {
                            dataset: name.clone(),
                            spec: *spec,
                            failure: Some(msg),
                            local_sp: f64::NAN,
                            global_sp: f64::NAN,
                            train_seconds: 0.0,
                        }
                    }
                }
            })
            .collect()
    });
    let report = BenchmarkReport { records };
    let names: Vec<String> = plan.datasets.iter().map(|d| d.name.clone()).collect();
    let write = |file: &str, text: String| {
        let p = plan.output.join(file);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("records.csv", report.records_csv())?;
    write("timings.csv", report.timings_csv())?;
    write("summary_local.csv", report.summary_csv(false, &names))?;
    write("summary_global.csv", report.summary_csv(true, &names))?;
    Ok(report)
}
