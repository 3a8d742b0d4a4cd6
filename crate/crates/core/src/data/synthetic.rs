//! Seeded Gaussian-mixture benchmark data with both cluster (local) and
//! between-centre (global) structure.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::DenseMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub points: usize,
    pub dims: usize,
    pub clusters: usize,
    /// Standard deviation of the centre coordinates.
    pub center_spread: f64,
    /// Per-cluster variance is drawn uniformly from this range.
    pub variance_range: (f64, f64),
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            points: 5000,
            dims: 50,
            clusters: 10,
            center_spread: 1.0,
            variance_range: (0.1, 1.0),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub matrix: DenseMatrix,
    /// Cluster index of every row.
    pub labels: Vec<usize>,
    pub centers: DenseMatrix,
}

/// Cluster sizes differ by at most one; rows come out in shuffled order.
/// Centres are i.i.d. Gaussian, so in general position (the vertices of a
/// random simplex when `clusters <= dims + 1`).
pub fn gaussian_mixture(config: &SyntheticConfig) -> Result<SyntheticData> {
    let (lo, hi) = config.variance_range;
    if config.points == 0 || config.dims == 0 || config.clusters == 0 {
        return Err(Error::config("points, dims and clusters must be positive"));
    }
    if !(lo > 0.0 && lo <= hi && hi.is_finite() && config.center_spread >= 0.0) {
        return Err(Error::config(format!(
            "variance range ({lo}, {hi}) and spread {} are invalid",
            config.center_spread
        )));
    }
    let root = SeededRng::new(config.seed, "synthetic");
    let mut centre_rng = root.derive(0);
    let centers = DenseMatrix::new(
        config.clusters,
        config.dims,
        centre_rng
            .standard_normal(config.clusters * config.dims)
            .into_iter()
            .map(|v| v * config.center_spread)
            .collect(),
    )?;
    let mut var_rng = root.derive(1);
    let sd: Vec<f64> = (0..config.clusters)
        .map(|_| var_rng.uniform_range(lo, hi).sqrt())
        .collect();
    let labels: Vec<usize> = root
        .derive(2)
        .shuffle(config.points)
        .into_iter()
        .map(|i| i % config.clusters)
        .collect();
    let noise = root.derive(3).standard_normal(config.points * config.dims);
    let matrix = DenseMatrix::from_fn(config.points, config.dims, |i, j| {
        let c = labels[i];
        centers.get(c, j) + sd[c] * noise[i * config.dims + j]
    });
    Ok(SyntheticData {
        matrix,
        labels,
        centers,
    })
}
