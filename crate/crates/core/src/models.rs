//! The two trainable systems.
//!
//! * GroupEnc: variational encoder and sampler, loss = group loss + β·KL.
//! * VAE: encoder, sampler and decoder, loss = MSE + β·KL.
//!
//! The encoder emits `2w` columns: the first `w` are the posterior mean, the
//! last `w` the log-variance. Inference returns the mean only.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::group_loss::{assign_groups, batch_group_loss, GroupAssignment, GroupStrategy};
use crate::nn::{
    clamp_logvar, kl_to_standard_normal, mse_loss, read_network, write_network, AdamConfig,
    LatentSample, Network, NetworkSpec, ParamGrads, Tape, DECODER_HIDDEN, ENCODER_HIDDEN,
    LOGVAR_CLAMP,
};
use crate::rng::SeededRng;
use crate::tensor::DenseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Vae,
    GroupEnc,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Vae => "vae",
            ModelKind::GroupEnc => "groupenc",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vae" => Ok(ModelKind::Vae),
            "groupenc" => Ok(ModelKind::GroupEnc),
            other => Err(Error::config(format!(
                "unknown model {other:?} (expected vae or groupenc)"
            ))),
        }
    }
}

/// Default weight of the KL term. The group loss of a batch is bounded by 2
/// and is typically of order 1e-2, so at weight 1 the KL term dominates
/// and both models fall back to the prior (chance-level embeddings).
pub const DEFAULT_KL_WEIGHT: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub latent_dim: usize,
    /// Group size; only read by GroupEnc.
    pub gamma: usize,
    pub kl_weight: f64,
    pub group_strategy: GroupStrategy,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
}

impl ModelConfig {
    pub fn groupenc(input_dim: usize, latent_dim: usize, gamma: usize) -> Self {
        Self {
            kind: ModelKind::GroupEnc,
            input_dim,
            latent_dim,
            gamma,
            kl_weight: DEFAULT_KL_WEIGHT,
            group_strategy: GroupStrategy::Headed,
            encoder_hidden: ENCODER_HIDDEN.to_vec(),
            decoder_hidden: DECODER_HIDDEN.to_vec(),
        }
    }

    pub fn vae(input_dim: usize, latent_dim: usize) -> Self {
        Self {
            kind: ModelKind::Vae,
            gamma: 4,
            ..Self::groupenc(input_dim, latent_dim, 4)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.latent_dim >= self.input_dim {
            return Err(Error::config(format!(
                "latent dimension {} must be in 1..{}",
                self.latent_dim, self.input_dim
            )));
        }
        if self.kind == ModelKind::GroupEnc && self.gamma < 2 {
            return Err(Error::config(format!("group size {} is below 2", self.gamma)));
        }
        if !(self.kl_weight >= 0.0 && self.kl_weight.is_finite()) {
            return Err(Error::config(format!("KL weight {} must be >= 0", self.kl_weight)));
        }
        Ok(())
    }

    /// Smallest batch a training step accepts.
    pub fn min_batch(&self) -> usize {
        match self.kind {
            ModelKind::GroupEnc => self.gamma,
            ModelKind::Vae => 1,
        }
    }

    fn encoder_spec(&self) -> Result<NetworkSpec> {
        NetworkSpec::new(self.input_dim, &self.encoder_hidden, 2 * self.latent_dim)
    }

    fn decoder_spec(&self) -> Result<NetworkSpec> {
        NetworkSpec::new(self.latent_dim, &self.decoder_hidden, self.input_dim)
    }
}

/// Loss terms of one step or an epoch average.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    /// Group loss for GroupEnc, MSE for the VAE.
    pub primary: f64,
    pub kl: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepGrads {
    pub encoder: ParamGrads,
    pub decoder: Option<ParamGrads>,
}

impl StepGrads {
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.encoder.flatten();
        if let Some(d) = &self.decoder {
            v.extend(d.flatten());
        }
        v
    }
}

#[derive(Clone, Debug)]
pub struct StepOutput {
    pub loss: LossBreakdown,
    pub grads: StepGrads,
    pub degenerate_groups: usize,
}

/// Random streams consumed by one training step.
#[derive(Clone, Debug)]
pub struct StepStreams {
    pub groups: SeededRng,
    pub noise: SeededRng,
}

impl StepStreams {
    /// Streams for batch `batch` of epoch `epoch` under `seed`.
    pub fn for_batch(seed: u64, epoch: usize, batch: usize) -> Self {
        Self {
            groups: SeededRng::new(seed, "groups").derive(epoch as u64).derive(batch as u64),
            noise: SeededRng::new(seed, "noise").derive(epoch as u64).derive(batch as u64),
        }
    }
}

/// A model with its parameters and training progress.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub encoder: Network,
    pub decoder: Option<Network>,
    /// Seed the model was initialised and trained with.
    pub seed: u64,
    pub epochs_trained: usize,
}

impl Model {
    /// Fresh parameters from the seed's "init" stream.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let init = SeededRng::new(seed, "init");
        let encoder = Network::init(config.encoder_spec()?, &mut init.derive(0))?;
        let decoder = match config.kind {
            ModelKind::Vae => Some(Network::init(config.decoder_spec()?, &mut init.derive(1))?),
            ModelKind::GroupEnc => None,
        };
        Ok(Self {
            config,
            encoder,
            decoder,
            seed,
            epochs_trained: 0,
        })
    }

    fn check_input(&self, data: &DenseMatrix) -> Result<()> {
        if data.cols() != self.config.input_dim {
            return Err(Error::shape(format!(
                "model expects {} input columns, data has {}",
                self.config.input_dim,
                data.cols()
            )));
        }
        Ok(())
    }

    /// Encoder pass: `(mu, raw logvar, tape)`.
    fn encode(&self, batch: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix, Tape)> {
        self.check_input(batch)?;
        let (out, tape) = self.encoder.forward(batch)?;
        let w = self.config.latent_dim;
        Ok((out.column_slice(0, w), out.column_slice(w, 2 * w), tape))
    }

    /// Deterministic embedding: the posterior mean for every row.
    pub fn embed(&self, data: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_input(data)?;
        let out = self.encoder.predict(data)?;
        Ok(out.column_slice(0, self.config.latent_dim))
    }

    /// GroupEnc loss and exact gradients with the noise and groups fixed.
    pub fn groupenc_step_with(
        &self,
        batch: &DenseMatrix,
        epsilon: &DenseMatrix,
        assignment: &GroupAssignment,
    ) -> Result<StepOutput> {
        let (mu, logvar_raw, tape) = self.encode(batch)?;
        let sample = LatentSample::with_noise(&mu, &logvar_raw, epsilon.clone())?;
        let group = batch_group_loss(batch, &sample.z, assignment)?;
        let (loss, grad_out) = self.combine_with_kl(&sample, &logvar_raw, group.loss, &group.grad)?;
        let (encoder, _) = self.encoder.backward(&tape, &grad_out)?;
        Ok(StepOutput {
            loss,
            grads: StepGrads {
                encoder,
                decoder: None,
            },
            degenerate_groups: group.degenerate_groups,
        })
    }

    /// VAE loss and exact gradients with the noise fixed.
    pub fn vae_step_with(&self, batch: &DenseMatrix, epsilon: &DenseMatrix) -> Result<StepOutput> {
        let decoder = self
            .decoder
            .as_ref()
            .ok_or_else(|| Error::State("VAE step on a model without a decoder".into()))?;
        let (mu, logvar_raw, tape) = self.encode(batch)?;
        let sample = LatentSample::with_noise(&mu, &logvar_raw, epsilon.clone())?;
        let (recon, dec_tape) = decoder.forward(&sample.z)?;
        let (mse, grad_recon) = mse_loss(&recon, batch)?;
        let (dec_grads, grad_z) = decoder.backward(&dec_tape, &grad_recon)?;
        let (loss, grad_out) = self.combine_with_kl(&sample, &logvar_raw, mse, &grad_z)?;
        let (encoder, _) = self.encoder.backward(&tape, &grad_out)?;
        Ok(StepOutput {
            loss,
            grads: StepGrads {
                encoder,
                decoder: Some(dec_grads),
            },
            degenerate_groups: 0,
        })
    }

    /// Adds the weighted KL term and routes d(total)/dz through the sampler
    /// to the encoder outputs.
    fn combine_with_kl(
        &self,
        sample: &LatentSample,
        logvar_raw: &DenseMatrix,
        primary: f64,
        grad_z: &DenseMatrix,
    ) -> Result<(LossBreakdown, DenseMatrix)> {
        let beta = self.config.kl_weight;
        let kl = kl_to_standard_normal(&sample.mu, &sample.logvar)?;
        let (mut grad_mu, mut grad_lv) = sample.backward(grad_z);
        for (g, k) in grad_mu.as_mut_slice().iter_mut().zip(kl.grad_mu.as_slice()) {
            *g += beta * k;
        }
        for ((g, k), raw) in grad_lv
            .as_mut_slice()
            .iter_mut()
            .zip(kl.grad_logvar.as_slice())
            .zip(logvar_raw.as_slice())
        {
            *g += beta * k;
            // the clamp passes no gradient outside its range
            if raw.abs() > LOGVAR_CLAMP {
                *g = 0.0;
            }
        }
        debug_assert!(logvar_raw
            .as_slice()
            .iter()
            .zip(sample.logvar.as_slice())
            .all(|(r, c)| clamp_logvar(*r) == *c));
        let loss = LossBreakdown {
            total: primary + beta * kl.loss,
            primary,
            kl: kl.loss,
        };
        Ok((loss, DenseMatrix::hstack(&grad_mu, &grad_lv)?))
    }

    /// One GroupEnc step drawing groups and noise from `streams`.
    pub fn groupenc_training_step(
        &self,
        batch: &DenseMatrix,
        streams: &mut StepStreams,
    ) -> Result<StepOutput> {
        let assignment = assign_groups(
            batch.rows(),
            self.config.gamma,
            self.config.group_strategy,
            &mut streams.groups,
        )?;
        let eps = self.draw_noise(batch.rows(), &mut streams.noise)?;
        self.groupenc_step_with(batch, &eps, &assignment)
    }

    /// One VAE step drawing noise from `streams`.
    pub fn vae_training_step(
        &self,
        batch: &DenseMatrix,
        streams: &mut StepStreams,
    ) -> Result<StepOutput> {
        let eps = self.draw_noise(batch.rows(), &mut streams.noise)?;
        self.vae_step_with(batch, &eps)
    }

    pub fn training_step(&self, batch: &DenseMatrix, streams: &mut StepStreams) -> Result<StepOutput> {
        match self.config.kind {
            ModelKind::GroupEnc => self.groupenc_training_step(batch, streams),
            ModelKind::Vae => self.vae_training_step(batch, streams),
        }
    }

    fn draw_noise(&self, rows: usize, rng: &mut SeededRng) -> Result<DenseMatrix> {
        let w = self.config.latent_dim;
        DenseMatrix::new(rows, w, rng.standard_normal(rows * w))
    }

    /// Adam update of every network from one step's gradients.
    pub fn apply_gradients(&mut self, grads: &StepGrads, adam: &AdamConfig) -> Result<()> {
        self.encoder.adam_step(&grads.encoder, adam)?;
        match (&mut self.decoder, &grads.decoder) {
            (Some(net), Some(g)) => net.adam_step(g, adam),
            (None, None) => Ok(()),
            _ => Err(Error::shape("decoder gradients do not match the model")),
        }
    }

    /// Every trainable parameter, encoder first.
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut v = self.encoder.params.flatten();
        if let Some(d) = &self.decoder {
            v.extend(d.params.flatten());
        }
        v
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        let n_enc = self.encoder.spec.parameter_count();
        if values.len() < n_enc {
            return Err(Error::shape("too few parameters"));
        }
        self.encoder.params.set_flat(&values[..n_enc])?;
        match &mut self.decoder {
            Some(d) => d.params.set_flat(&values[n_enc..]),
            None if values.len() == n_enc => Ok(()),
            None => Err(Error::shape("too many parameters")),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.encoder.spec.parameter_count()
            + self.decoder.as_ref().map_or(0, |d| d.spec.parameter_count())
    }
}

const MODEL_MAGIC_LINE: &str = "GROUPENC-MODEL 1";

fn join(sizes: &[usize]) -> String {
    sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
}

/// Writes the key-value header block followed by one network container per
/// network (encoder, then decoder for the VAE).
pub fn write_model<W: Write>(w: &mut W, model: &Model) -> Result<()> {
    let c = &model.config;
    let header = format!(
        "{MODEL_MAGIC_LINE}\nkind={}\ninput_dim={}\nlatent_dim={}\ngamma={}\nkl_weight={}\n\
         strategy={}\nencoder_hidden={}\ndecoder_hidden={}\nseed={}\nepochs_trained={}\n\n",
        c.kind,
        c.input_dim,
        c.latent_dim,
        c.gamma,
        c.kl_weight,
        c.group_strategy,
        join(&c.encoder_hidden),
        join(&c.decoder_hidden),
        model.seed,
        model.epochs_trained,
    );
    w.write_all(header.as_bytes())
        .map_err(|e| Error::format(format!("writing model header: {e}")))?;
    write_network(w, &model.encoder)?;
    if let Some(d) = &model.decoder {
        write_network(w, d)?;
    }
    Ok(())
}

pub fn read_model<R: BufRead>(r: &mut R) -> Result<Model> {
    let mut line = String::new();
    let mut fields = std::collections::BTreeMap::new();
    let mut first = true;
    loop {
        line.clear();
        let n = r
            .read_line(&mut line)
            .map_err(|e| Error::format(format!("reading model header: {e}")))?;
        if n == 0 {
            return Err(Error::format("model header is not terminated"));
        }
        let text = line.trim_end_matches('\n');
        if first {
            if text != MODEL_MAGIC_LINE {
                return Err(Error::format(format!("not a model checkpoint (first line {text:?})")));
            }
            first = false;
            continue;
        }
        if text.is_empty() {
            break;
        }
        let (k, v) = text
            .split_once('=')
            .ok_or_else(|| Error::format(format!("malformed header line {text:?}")))?;
        fields.insert(k.to_string(), v.to_string());
    }
    let get = |k: &str| {
        fields
            .get(k)
            .map(String::as_str)
            .ok_or_else(|| Error::format(format!("model header lacks {k}")))
    };
    let num = |k: &str| -> Result<usize> {
        get(k)?
            .parse()
            .map_err(|_| Error::format(format!("model header {k} is not a count")))
    };
    let sizes = |k: &str| -> Result<Vec<usize>> {
        let v = get(k)?;
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|s| s.parse().map_err(|_| Error::format(format!("bad layer size in {k}"))))
            .collect()
    };
    let config = ModelConfig {
        kind: get("kind")?.parse().map_err(|e: Error| Error::format(e.to_string()))?,
        input_dim: num("input_dim")?,
        latent_dim: num("latent_dim")?,
        gamma: num("gamma")?,
        kl_weight: get("kl_weight")?
            .parse()
            .map_err(|_| Error::format("model header kl_weight is not a number"))?,
        group_strategy: get("strategy")?.parse().map_err(|e: Error| Error::format(e.to_string()))?,
        encoder_hidden: sizes("encoder_hidden")?,
        decoder_hidden: sizes("decoder_hidden")?,
    };
    config.validate().map_err(|e| Error::format(e.to_string()))?;
    let seed = get("seed")?
        .parse()
        .map_err(|_| Error::format("model header seed is not an integer"))?;
    let epochs_trained = num("epochs_trained")?;

    let encoder = read_network(r)?;
    if encoder.spec != config.encoder_spec()? {
        return Err(Error::format("encoder container does not match the header"));
    }
    let decoder = match config.kind {
        ModelKind::Vae => {
            let d = read_network(r)?;
            if d.spec != config.decoder_spec()? {
                return Err(Error::format("decoder container does not match the header"));
            }
            Some(d)
        }
        ModelKind::GroupEnc => None,
    };
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| Error::format(e.to_string()))? != 0 {
        return Err(Error::format("trailing bytes after model checkpoint"));
    }
    Ok(Model {
        config,
        encoder,
        decoder,
        seed,
        epochs_trained,
    })
}

pub fn save_model(path: &Path, model: &Model) -> Result<()> {
    let mut buf = Vec::new();
    write_model(&mut buf, model)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Model> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(&mut std::io::BufReader::new(file))
}
