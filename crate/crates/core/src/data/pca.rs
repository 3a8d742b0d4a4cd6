//! Principal component analysis of column-centred data.
//!
//! Two solvers: a dense SVD (nalgebra) for desk-scale inputs and a block
//! subspace iteration that only multiplies by the data, for wide inputs.
//! Both return components with the same sign convention: the entry of
//! largest magnitude in each component is positive.
//!
//! `GPCA` container: magic, version `u32 = 1`, cols `u64`, k `u64`, then the
//! `cols × k` component matrix row-major, the `cols` means and the `k`
//! explained variances, all `f64` little-endian.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::data::io::Cursor;
use crate::error::{Error, Result};
use crate::tensor::DenseMatrix;

pub const PCA_MAGIC: &[u8; 4] = b"GPCA";
const PCA_VERSION: u32 = 1;

/// Inputs with more entries than this use the iterative solver under
/// [`PcaSolver::Auto`].
pub const DENSE_SOLVER_LIMIT: usize = 20_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PcaSolver {
    #[default]
    Auto,
    Dense,
    Iterative,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    /// `cols × k`, orthonormal columns.
    pub components: DenseMatrix,
    pub column_means: Vec<f64>,
    /// Variance of the scores along each component (denominator rows − 1),
    /// non-increasing.
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.cols()
    }

    pub fn transform(&self, m: &DenseMatrix) -> Result<DenseMatrix> {
        if m.cols() != self.column_means.len() {
            return Err(Error::shape(format!(
                "PCA model expects {} columns, data has {}",
                self.column_means.len(),
                m.cols()
            )));
        }
        center(m, &self.column_means).matmul(&self.components)
    }

    /// Maps scores back to the input space.
    pub fn inverse_transform(&self, scores: &DenseMatrix) -> Result<DenseMatrix> {
        let mut x = scores.matmul_nt(&self.components)?;
        x.add_row_vector(&self.column_means);
        Ok(x)
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(PCA_MAGIC);
        buf.extend_from_slice(&PCA_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.components.rows() as u64).to_le_bytes());
        buf.extend_from_slice(&(self.components.cols() as u64).to_le_bytes());
        for v in self
            .components
            .as_slice()
            .iter()
            .chain(&self.column_means)
            .chain(&self.explained_variance)
        {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)
            .map_err(|e| Error::format(format!("writing PCA model: {e}")))
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| Error::format(format!("unreadable PCA model: {e}")))?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.take(4)? != PCA_MAGIC {
            return Err(Error::format("offset 0: bad magic, expected GPCA"));
        }
        let version = cur.u32()?;
        if version != PCA_VERSION {
            return Err(Error::format(format!("offset 4: unsupported version {version}")));
        }
        let cols = cur.u64()? as usize;
        let k = cur.u64()? as usize;
        let comps = cur.f64s(cols.checked_mul(k).ok_or_else(|| Error::format("size overflows"))?)?;
        let column_means = cur.f64s(cols)?;
        let explained_variance = cur.f64s(k)?;
        if cur.pos != bytes.len() {
            return Err(Error::format(format!("offset {}: trailing bytes", cur.pos)));
        }
        Ok(Self {
            components: DenseMatrix::new(cols, k, comps).map_err(|e| Error::format(e.to_string()))?,
            column_means,
            explained_variance,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::read(bytes.as_slice())
    }
}

fn center(m: &DenseMatrix, means: &[f64]) -> DenseMatrix {
    let mut c = m.clone();
    let neg: Vec<f64> = means.iter().map(|v| -v).collect();
    c.add_row_vector(&neg);
    c
}

fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn from_na(m: &DMatrix<f64>) -> DenseMatrix {
    DenseMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Flips each column so its largest-magnitude entry (first on ties) is
/// positive.
fn fix_signs(components: &mut DenseMatrix) {
    for j in 0..components.cols() {
        let mut best = 0;
        for i in 1..components.rows() {
            if components.get(i, j).abs() > components.get(best, j).abs() {
                best = i;
            }
        }
        if components.get(best, j) < 0.0 {
            for i in 0..components.rows() {
                components.set(i, j, -components.get(i, j));
            }
        }
    }
}

pub fn pca_fit(m: &DenseMatrix, k: usize, solver: PcaSolver) -> Result<PcaModel> {
    let max = m.rows().saturating_sub(1).min(m.cols());
    if k == 0 || k > max {
        return Err(Error::config(format!(
            "{k} components requested; must be within 1..={max} for a {}×{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    let means = m.column_means();
    let centred = center(m, &means);
    let use_dense = match solver {
        PcaSolver::Dense => true,
        PcaSolver::Iterative => false,
        PcaSolver::Auto => m.as_slice().len() <= DENSE_SOLVER_LIMIT,
    };
    let (mut components, sq_singular) = if use_dense {
        dense_top_k(&centred, k)
    } else {
        iterative_top_k(&centred, k)?
    };
    fix_signs(&mut components);
    let denom = (m.rows() - 1) as f64;
    Ok(PcaModel {
        components,
        column_means: means,
        explained_variance: sq_singular.iter().map(|s| s / denom).collect(),
    })
}

/// Fits `k` components and returns the training scores.
pub fn pca_fit_transform(m: &DenseMatrix, k: usize) -> Result<(PcaModel, DenseMatrix)> {
    let model = pca_fit(m, k, PcaSolver::Auto)?;
    let scores = model.transform(m)?;
    Ok((model, scores))
}

/// Top-k right singular vectors and squared singular values.
fn dense_top_k(centred: &DenseMatrix, k: usize) -> (DenseMatrix, Vec<f64>) {
    let svd = to_na(centred).svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    let components = DenseMatrix::from_fn(centred.cols(), k, |i, j| v_t[(order[j], i)]);
    let sq = order[..k]
        .iter()
        .map(|&o| svd.singular_values[o].powi(2))
        .collect();
    (components, sq)
}

/// Block subspace iteration on XᵀX with Rayleigh-Ritz extraction. Uses a
/// fixed, data-independent start block, so the result is deterministic.
fn iterative_top_k(centred: &DenseMatrix, k: usize) -> Result<(DenseMatrix, Vec<f64>)> {
    let cols = centred.cols();
    let p = (k + 10).min(cols);
    let mut q = orthonormalize(&DenseMatrix::from_fn(cols, p, |i, j| {
        ((i + 1) as f64 * (j as f64 + 0.5) * 0.618_033_988_749_895).sin() + if i == j { 1.0 } else { 0.0 }
    }));
    let mut prev: Vec<f64> = vec![f64::INFINITY; k];
    for _ in 0..5000 {
        // Y = XᵀX Q
        let y = centred.matmul_tn(&centred.matmul(&q)?)?;
        let (ritz_vectors, values) = rayleigh_ritz(&q, &y)?;
        let converged = values[..k]
            .iter()
            .zip(&prev)
            .all(|(a, b)| (a - b).abs() <= 1e-14 * values[0].max(f64::MIN_POSITIVE));
        prev = values[..k].to_vec();
        q = orthonormalize(&y);
        if converged {
            let comps = DenseMatrix::from_fn(cols, k, |i, j| ritz_vectors.get(i, j));
            return Ok((comps, prev));
        }
    }
    Err(Error::Numeric {
        epoch: 0,
        batch: 0,
        detail: "PCA subspace iteration did not converge".into(),
    })
}

/// Ritz vectors of the current block, ordered by decreasing Ritz value.
fn rayleigh_ritz(q: &DenseMatrix, y: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>)> {
    let small = q.matmul_tn(y)?;
    let sym = to_na(&small);
    let sym = (&sym + sym.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let basis = DenseMatrix::from_fn(small.rows(), small.cols(), |i, j| eig.eigenvectors[(i, order[j])]);
    let values = order.iter().map(|&o| eig.eigenvalues[o].max(0.0)).collect();
    Ok((q.matmul(&basis)?, values))
}

fn orthonormalize(m: &DenseMatrix) -> DenseMatrix {
    from_na(&to_na(m).qr().q())
}
