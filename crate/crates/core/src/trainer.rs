//! Epoch and batch loop: shuffling, Adam updates, loss logging, checkpoints.
//!
//! Every random draw comes from a stream derived from the model seed and the
//! (epoch, batch) position, so a run split at any epoch boundary and resumed
//! from its checkpoint replays exactly the same schedule.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::models::{save_model, LossBreakdown, Model, ModelConfig, StepStreams};
use crate::nn::AdamConfig;
use crate::rng::SeededRng;
use crate::tensor::DenseMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Target epoch count. Resuming trains until the model has this many.
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Log (and checkpoint, when a path is set) every this many epochs; 0
    /// means only at the end.
    pub log_every: usize,
    pub checkpoint_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 512,
            adam: AdamConfig::default(),
            seed: 0,
            log_every: 0,
            checkpoint_path: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, model: &ModelConfig) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.batch_size < model.min_batch() {
            return Err(Error::config(format!(
                "batch size {} is below the minimum of {} for {}",
                self.batch_size,
                model.min_batch(),
                model.kind
            )));
        }
        self.adam.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Batch-averaged loss terms.
    pub loss: LossBreakdown,
    /// Wall-clock seconds since the start of this run, at the end of the epoch.
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn total_seconds(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.seconds)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,total,primary,kl,seconds\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6}",
                r.epoch, r.loss.total, r.loss.primary, r.loss.kl, r.seconds
            );
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Row ranges of one epoch's batches over shuffled rows. A trailing batch
/// shorter than `batch_size` is kept only when it has at least `min_batch`
/// rows.
pub fn batch_ranges(rows: usize, batch_size: usize, min_batch: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<_> = (0..rows / batch_size)
        .map(|b| (b * batch_size, (b + 1) * batch_size))
        .collect();
    let rem = rows % batch_size;
    if rem > 0 && rem >= min_batch {
        out.push((rows - rem, rows));
    }
    out
}

/// Trains a fresh model seeded with `train_config.seed`.
pub fn train(
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    data: &DenseMatrix,
) -> Result<(Model, TrainLog)> {
    let mut model = Model::new(model_config.clone(), train_config.seed)?;
    let log = run_epochs(&mut model, train_config, data)?;
    Ok((model, log))
}

/// Continues training a checkpointed model until it has
/// `train_config.epochs` epochs. The model's own seed drives the schedule,
/// so the result matches an uninterrupted run.
pub fn resume(
    mut model: Model,
    train_config: &TrainConfig,
    data: &DenseMatrix,
) -> Result<(Model, TrainLog)> {
    if data.cols() != model.config.input_dim {
        return Err(Error::format(format!(
            "checkpoint expects {} input columns, data has {}",
            model.config.input_dim,
            data.cols()
        )));
    }
    if train_config.seed != model.seed {
        log::warn!(
            "resuming with the checkpoint seed {} instead of {}",
            model.seed,
            train_config.seed
        );
    }
    let log = run_epochs(&mut model, train_config, data)?;
    Ok((model, log))
}

fn run_epochs(model: &mut Model, config: &TrainConfig, data: &DenseMatrix) -> Result<TrainLog> {
    config.validate(&model.config)?;
    if data.cols() != model.config.input_dim {
        return Err(Error::shape(format!(
            "model expects {} input columns, data has {}",
            model.config.input_dim,
            data.cols()
        )));
    }
    let ranges = batch_ranges(data.rows(), config.batch_size, model.config.min_batch());
    if ranges.is_empty() {
        return Err(Error::config(format!(
            "{} rows cannot form a batch of at least {}",
            data.rows(),
            model.config.min_batch()
        )));
    }

    let shuffle = SeededRng::new(model.seed, "shuffle");
    let start = Instant::now();
    let mut log = TrainLog::default();
    for epoch in model.epochs_trained..config.epochs {
        let order = shuffle.derive(epoch as u64).shuffle(data.rows());
        let mut sum = LossBreakdown::default();
        for (b, &(lo, hi)) in ranges.iter().enumerate() {
            let batch = data.select_rows(&order[lo..hi]);
            let mut streams = StepStreams::for_batch(model.seed, epoch, b);
            let out = model
                .training_step(&batch, &mut streams)
                .map_err(|e| with_position(e, epoch, b))?;
            let l = out.loss;
            if !(l.total.is_finite() && l.primary.is_finite() && l.kl.is_finite()) {
                return Err(Error::Numeric {
                    epoch,
                    batch: b,
                    detail: format!("loss is not finite ({l:?})"),
                });
            }
            model
                .apply_gradients(&out.grads, &config.adam)
                .map_err(|e| with_position(e, epoch, b))?;
            sum.total += l.total;
            sum.primary += l.primary;
            sum.kl += l.kl;
        }
        let n = ranges.len() as f64;
        let record = EpochRecord {
            epoch,
            loss: LossBreakdown {
                total: sum.total / n,
                primary: sum.primary / n,
                kl: sum.kl / n,
            },
            seconds: start.elapsed().as_secs_f64(),
        };
        log.records.push(record);
        model.epochs_trained = epoch + 1;

        let done = epoch + 1 == config.epochs;
        if done || (config.log_every > 0 && (epoch + 1) % config.log_every == 0) {
            log::info!(
                "{} epoch {}/{}: total {:.6} primary {:.6} kl {:.6}",
                model.config.kind,
                epoch + 1,
                config.epochs,
                record.loss.total,
                record.loss.primary,
                record.loss.kl
            );
            if let Some(path) = &config.checkpoint_path {
                save_model(path, model)?;
            }
        }
    }
    Ok(log)
}

fn with_position(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::Numeric { detail, .. } => Error::Numeric {
            epoch,
            batch,
            detail,
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{load_model, ModelKind};

    fn data(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        DenseMatrix::new(rows, cols, SeededRng::new(seed, "data").standard_normal(rows * cols)).unwrap()
    }

    fn small(kind: ModelKind) -> ModelConfig {
        let mut c = match kind {
            ModelKind::GroupEnc => ModelConfig::groupenc(6, 2, 4),
            ModelKind::Vae => ModelConfig::vae(6, 2),
        };
        c.encoder_hidden = vec![8];
        c.decoder_hidden = vec![8];
        c
    }

    fn cfg(epochs: usize, batch_size: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn batch_ranges_keep_long_enough_remainders() {
        assert_eq!(batch_ranges(10, 4, 4), vec![(0, 4), (4, 8)]);
        assert_eq!(batch_ranges(11, 4, 3), vec![(0, 4), (4, 8), (8, 11)]);
        assert_eq!(batch_ranges(3, 4, 1), vec![(0, 3)]);
        assert_eq!(batch_ranges(3, 4, 4), vec![]);
        assert_eq!(batch_ranges(8, 8, 4), vec![(0, 8)]);
    }

    #[test]
    fn one_epoch_of_one_batch_is_one_step() {
        let (model, log) = train(&small(ModelKind::GroupEnc), &cfg(1, 16), &data(16, 6, 0)).unwrap();
        assert_eq!(model.encoder.params.step, 1);
        assert_eq!(log.records.len(), 1);
        assert_eq!(model.epochs_trained, 1);
    }

    #[test]
    fn step_count_is_epochs_times_batches() {
        let (model, log) = train(&small(ModelKind::Vae), &cfg(3, 8), &data(21, 6, 1)).unwrap();
        assert_eq!(model.encoder.params.step, 9);
        assert_eq!(model.decoder.as_ref().unwrap().params.step, 9);
        assert_eq!(log.records.len(), 3);
        let secs: Vec<f64> = log.records.iter().map(|r| r.seconds).collect();
        assert!(secs.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let d = data(16, 6, 0);
        assert!(matches!(train(&small(ModelKind::GroupEnc), &cfg(0, 8), &d), Err(Error::Config(_))));
        assert!(matches!(train(&small(ModelKind::GroupEnc), &cfg(1, 3), &d), Err(Error::Config(_))));
        assert!(matches!(
            train(&small(ModelKind::GroupEnc), &cfg(1, 8), &data(3, 6, 0)),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            train(&small(ModelKind::GroupEnc), &cfg(1, 8), &data(16, 5, 0)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let d = data(40, 6, 2);
        for kind in [ModelKind::GroupEnc, ModelKind::Vae] {
            let (a, la) = train(&small(kind), &cfg(4, 16), &d).unwrap();
            let (b, lb) = train(&small(kind), &cfg(4, 16), &d).unwrap();
            assert_eq!(a, b);
            let losses = |l: &TrainLog| l.records.iter().map(|r| r.loss).collect::<Vec<_>>();
            assert_eq!(losses(&la), losses(&lb));
            let (c, _) = train(&small(kind), &TrainConfig { seed: 6, ..cfg(4, 16) }, &d).unwrap();
            assert_ne!(a.encoder.params, c.encoder.params);
        }
    }

    #[test]
    fn split_run_matches_one_run() {
        let d = data(50, 6, 3);
        for kind in [ModelKind::GroupEnc, ModelKind::Vae] {
            let (full, _) = train(&small(kind), &cfg(6, 16), &d).unwrap();
            let (half, _) = train(&small(kind), &cfg(3, 16), &d).unwrap();
            let mut buf = Vec::new();
            crate::models::write_model(&mut buf, &half).unwrap();
            let restored = crate::models::read_model(&mut buf.as_slice()).unwrap();
            let (resumed, log) = resume(restored, &cfg(6, 16), &d).unwrap();
            assert_eq!(resumed, full);
            assert_eq!(log.records.first().unwrap().epoch, 3);
        }
    }

    #[test]
    fn resume_guards() {
        let d = data(20, 6, 4);
        let (model, _) = train(&small(ModelKind::GroupEnc), &cfg(2, 8), &d).unwrap();
        let (same, log) = resume(model.clone(), &cfg(2, 8), &d).unwrap();
        assert_eq!(same, model);
        assert!(log.records.is_empty());
        assert!(matches!(
            resume(model, &cfg(4, 8), &data(20, 7, 4)),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn checkpoint_is_written_and_loadable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let config = TrainConfig {
            checkpoint_path: Some(path.clone()),
            log_every: 1,
            ..cfg(2, 8)
        };
        let (model, _) = train(&small(ModelKind::Vae), &config, &data(20, 6, 5)).unwrap();
        assert_eq!(load_model(&path).unwrap(), model);
    }

    #[test]
    fn log_csv_layout() {
        let (_, log) = train(&small(ModelKind::GroupEnc), &cfg(2, 8), &data(16, 6, 6)).unwrap();
        let csv = log.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "epoch,total,primary,kl,seconds");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("0,"));
        assert_eq!(lines[2].split(',').count(), 5);
    }

    #[test]
    fn exploding_steps_report_their_position() {
        let mut c = small(ModelKind::GroupEnc);
        c.kl_weight = 1e308;
        let mut d = data(16, 6, 7);
        d.as_mut_slice().iter_mut().for_each(|v| *v *= 1e3);
        match train(&c, &cfg(2, 8), &d) {
            Err(Error::Numeric { epoch, .. }) => assert_eq!(epoch, 0),
            other => panic!("expected a numeric error, got {other:?}"),
        }
    }
}
