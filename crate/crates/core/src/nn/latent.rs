//! Variational head: reparameterised sampling, KL to the unit Gaussian
//! prior, and the MSE reconstruction term.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::DenseMatrix;

/// Log-variances are clamped to this range before exponentiation.
pub const LOGVAR_CLAMP: f64 = 15.0;

#[inline]
pub fn clamp_logvar(v: f64) -> f64 {
    v.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP)
}

/// One reparameterised draw `z = mu + exp(logvar / 2) ⊙ epsilon`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentSample {
    pub mu: DenseMatrix,
    /// Already clamped.
    pub logvar: DenseMatrix,
    pub epsilon: DenseMatrix,
    pub z: DenseMatrix,
}

impl LatentSample {
    /// Builds the sample from explicit noise.
    pub fn with_noise(mu: &DenseMatrix, logvar: &DenseMatrix, epsilon: DenseMatrix) -> Result<Self> {
        if mu.shape() != logvar.shape() || mu.shape() != epsilon.shape() {
            return Err(Error::shape(format!(
                "mu {:?}, logvar {:?} and epsilon {:?} must match",
                mu.shape(),
                logvar.shape(),
                epsilon.shape()
            )));
        }
        let logvar = logvar.map(clamp_logvar);
        let z_data = mu
            .as_slice()
            .iter()
            .zip(logvar.as_slice())
            .zip(epsilon.as_slice())
            .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
            .collect();
        let z = DenseMatrix::new(mu.rows(), mu.cols(), z_data)?;
        Ok(Self {
            mu: mu.clone(),
            logvar,
            epsilon,
            z,
        })
    }

    /// Pulls d(loss)/dz back to d(loss)/dmu and d(loss)/dlogvar through the
    /// sampler. The logvar gradient is taken w.r.t. the clamped value.
    pub fn backward(&self, grad_z: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
        let grad_logvar = grad_z
            .as_slice()
            .iter()
            .zip(self.logvar.as_slice())
            .zip(self.epsilon.as_slice())
            .map(|((g, lv), e)| g * 0.5 * (0.5 * lv).exp() * e)
            .collect();
        (
            grad_z.clone(),
            DenseMatrix::new(grad_z.rows(), grad_z.cols(), grad_logvar)
                .expect("shape matches the sample"),
        )
    }
}

/// Draws epsilon from `rng` (the caller's "noise" stream) and samples.
pub fn sample_latent(mu: &DenseMatrix, logvar: &DenseMatrix, rng: &mut SeededRng) -> Result<LatentSample> {
    let eps = rng.standard_normal(mu.rows() * mu.cols());
    LatentSample::with_noise(mu, logvar, DenseMatrix::new(mu.rows(), mu.cols(), eps)?)
}

/// KL divergence to N(0, I) and its gradients.
#[derive(Clone, Debug)]
pub struct KlTerm {
    pub loss: f64,
    pub grad_mu: DenseMatrix,
    pub grad_logvar: DenseMatrix,
}

/// `mean_rows( -1/2 Σ_dims (1 + logvar - mu² - exp(logvar)) )`.
pub fn kl_to_standard_normal(mu: &DenseMatrix, logvar: &DenseMatrix) -> Result<KlTerm> {
    if mu.shape() != logvar.shape() {
        return Err(Error::shape(format!(
            "mu {:?} and logvar {:?} differ",
            mu.shape(),
            logvar.shape()
        )));
    }
    let inv_batch = 1.0 / mu.rows().max(1) as f64;
    let mut loss = 0.0;
    let mut grad_mu = Vec::with_capacity(mu.as_slice().len());
    let mut grad_logvar = Vec::with_capacity(mu.as_slice().len());
    for (&m, &lv) in mu.as_slice().iter().zip(logvar.as_slice()) {
        let em1 = lv.exp_m1();
        // exp(lv) - 1 - lv >= 0; exp_m1 keeps the sign right near lv = 0
        loss += 0.5 * (m * m + (em1 - lv).max(0.0));
        grad_mu.push(m * inv_batch);
        grad_logvar.push(0.5 * em1 * inv_batch);
    }
    Ok(KlTerm {
        loss: loss * inv_batch,
        grad_mu: DenseMatrix::new(mu.rows(), mu.cols(), grad_mu)?,
        grad_logvar: DenseMatrix::new(mu.rows(), mu.cols(), grad_logvar)?,
    })
}

/// Mean squared error over all entries and its gradient w.r.t. the
/// reconstruction.
pub fn mse_loss(reconstruction: &DenseMatrix, target: &DenseMatrix) -> Result<(f64, DenseMatrix)> {
    if reconstruction.shape() != target.shape() {
        return Err(Error::shape(format!(
            "reconstruction {:?} vs target {:?}",
            reconstruction.shape(),
            target.shape()
        )));
    }
    let count = reconstruction.as_slice().len().max(1) as f64;
    let mut loss = 0.0;
    let grad: Vec<f64> = reconstruction
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(r, t)| {
            let d = r - t;
            loss += d * d;
            2.0 * d / count
        })
        .collect();
    Ok((
        loss / count,
        DenseMatrix::new(reconstruction.rows(), reconstruction.cols(), grad)?,
    ))
}
