//! Dense row-major matrices and the handful of kernels the rest of the
//! crate is built on.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Below this many multiply-adds a product runs on the calling thread.
const PAR_THRESHOLD: usize = 1 << 16;

/// Row-major matrix of `f64`. Rows are samples, columns are features.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Wraps a flat row-major buffer. Rejects a length mismatch and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "buffer of length {} cannot hold {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite entry at row {}, column {}",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::shape(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on zero, and a 0-column matrix still has rows
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// New matrix made of the listed rows, in the listed order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Columns `start..end` as a new matrix.
    pub fn column_slice(&self, start: usize, end: usize) -> Self {
        assert!(start <= end && end <= self.cols);
        let mut data = Vec::with_capacity(self.rows * (end - start));
        for r in self.row_iter() {
            data.extend_from_slice(&r[start..end]);
        }
        Self {
            rows: self.rows,
            cols: end - start,
            data,
        }
    }

    /// Places `left` and `right` side by side.
    pub fn hstack(left: &Self, right: &Self) -> Result<Self> {
        if left.rows != right.rows {
            return Err(Error::shape(format!(
                "hstack of {} and {} rows",
                left.rows, right.rows
            )));
        }
        let mut data = Vec::with_capacity(left.data.len() + right.data.len());
        for i in 0..left.rows {
            data.extend_from_slice(left.row(i));
            data.extend_from_slice(right.row(i));
        }
        Ok(Self {
            rows: left.rows,
            cols: left.cols + right.cols,
            data,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| v * c)
    }

    /// Adds `v` to every row in place.
    pub fn add_row_vector(&mut self, v: &[f64]) {
        assert_eq!(v.len(), self.cols);
        let cols = self.cols;
        if cols == 0 {
            return;
        }
        for r in self.data.chunks_exact_mut(cols) {
            for (x, b) in r.iter_mut().zip(v) {
                *x += b;
            }
        }
    }

    /// Sum over rows, one entry per column.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in self.row_iter() {
            for (o, x) in out.iter_mut().zip(r) {
                *o += x;
            }
        }
        out
    }

    pub fn column_means(&self) -> Vec<f64> {
        let n = self.rows.max(1) as f64;
        self.column_sums().into_iter().map(|s| s / n).collect()
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::shape(format!(
                "matmul of {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let (n, inner, m) = (self.rows, self.cols, other.cols);
        let mut out = Self::zeros(n, m);
        if m == 0 {
            return Ok(out);
        }
        let kernel = |(i, orow): (usize, &mut [f64])| {
            let arow = self.row(i);
            for (k, &a) in arow.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in orow.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        };
        if n * inner * m >= PAR_THRESHOLD {
            out.data.par_chunks_mut(m).enumerate().for_each(kernel);
        } else {
            out.data.chunks_mut(m).enumerate().for_each(kernel);
        }
        Ok(out)
    }

    /// `selfᵀ · other` without materialising the transpose.
    pub fn matmul_tn(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::shape(format!(
                "matmul_tn of {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let (n, m) = (self.cols, other.cols);
        let mut out = Self::zeros(n, m);
        if m == 0 {
            return Ok(out);
        }
        // Row k of the result accumulates over samples in a fixed order.
        let kernel = |(k, orow): (usize, &mut [f64])| {
            for s in 0..self.rows {
                let a = self.data[s * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in orow.iter_mut().zip(other.row(s)) {
                    *o += a * b;
                }
            }
        };
        if self.rows * n * m >= PAR_THRESHOLD {
            out.data.par_chunks_mut(m).enumerate().for_each(kernel);
        } else {
            out.data.chunks_mut(m).enumerate().for_each(kernel);
        }
        Ok(out)
    }

    /// `self · otherᵀ` without materialising the transpose.
    pub fn matmul_nt(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::shape(format!(
                "matmul_nt of {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let (n, m) = (self.rows, other.rows);
        let mut out = Self::zeros(n, m);
        if m == 0 {
            return Ok(out);
        }
        let kernel = |(i, orow): (usize, &mut [f64])| {
            let a = self.row(i);
            for (o, j) in orow.iter_mut().zip(0..m) {
                *o = dot(a, other.row(j));
            }
        };
        if n * self.cols * m >= PAR_THRESHOLD {
            out.data.par_chunks_mut(m).enumerate().for_each(kernel);
        } else {
            out.data.chunks_mut(m).enumerate().for_each(kernel);
        }
        Ok(out)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

#[inline]
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_euclidean(a, b).sqrt()
}

/// Number of unordered pairs among `n` items.
#[inline]
pub fn condensed_len(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Position of pair `(i, j)`, `i < j`, in the condensed upper-triangular
/// ordering `(0,1), (0,2), …, (0,n-1), (1,2), …`.
#[inline]
pub fn condensed_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

/// Recovers the item count `n` from a condensed length, if it is triangular.
pub fn items_for_condensed_len(len: usize) -> Option<usize> {
    let n = ((1.0 + (1.0 + 8.0 * len as f64).sqrt()) / 2.0).round() as usize;
    (condensed_len(n) == len).then_some(n)
}

/// Euclidean distances between all row pairs in condensed order.
pub fn pairwise_euclidean(points: &DenseMatrix) -> Result<Vec<f64>> {
    let n = points.rows();
    if n < 2 {
        return Err(Error::shape(format!(
            "pairwise distances need at least 2 rows, got {n}"
        )));
    }
    let mut out = Vec::with_capacity(condensed_len(n));
    for i in 0..n {
        let a = points.row(i);
        for j in i + 1..n {
            out.push(euclidean(a, points.row(j)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_times_matrix_is_matrix() {
        let m = DenseMatrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64 - 5.5);
        assert_eq!(DenseMatrix::identity(3).matmul(&m).unwrap(), m);
    }

    #[test]
    fn small_products() {
        let a = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.as_slice(), &[2.0, 4.0]);

        let s = DenseMatrix::from_rows(&[[2.0]])
            .unwrap()
            .matmul(&DenseMatrix::from_rows(&[[3.0]]).unwrap())
            .unwrap();
        assert_eq!(s.as_slice(), &[6.0]);
    }

    #[test]
    fn matmul_rejects_mismatch() {
        let a = DenseMatrix::zeros(2, 3);
        assert!(matches!(a.matmul(&a), Err(Error::Shape(_))));
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let a = DenseMatrix::from_fn(7, 5, |i, j| ((i * 31 + j * 17) % 11) as f64 - 5.0);
        let b = DenseMatrix::from_fn(7, 3, |i, j| ((i * 13 + j * 7) % 5) as f64 * 0.5);
        let c = DenseMatrix::from_fn(4, 5, |i, j| (i as f64) - (j as f64) * 0.25);
        assert_eq!(a.matmul_tn(&b).unwrap(), a.transpose().matmul(&b).unwrap());
        assert_eq!(a.matmul_nt(&c).unwrap(), a.matmul(&c.transpose()).unwrap());
    }

    #[test]
    fn new_rejects_non_finite_and_bad_length() {
        assert!(DenseMatrix::new(1, 2, vec![1.0]).is_err());
        assert!(DenseMatrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn pairwise_hand_examples() {
        let same = DenseMatrix::from_rows(&[[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]).unwrap();
        assert!(pairwise_euclidean(&same).unwrap().iter().all(|&d| d == 0.0));

        let line = DenseMatrix::from_rows(&[[0.0], [3.0], [4.0]]).unwrap();
        assert_eq!(pairwise_euclidean(&line).unwrap(), vec![3.0, 4.0, 1.0]);

        let tri = DenseMatrix::from_rows(&[[0.0, 0.0], [3.0, 4.0]]).unwrap();
        assert_eq!(pairwise_euclidean(&tri).unwrap(), vec![5.0]);

        assert!(pairwise_euclidean(&DenseMatrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn condensed_indexing_matches_enumeration_order() {
        let n = 7;
        let mut pos = 0;
        for i in 0..n {
            for j in i + 1..n {
                assert_eq!(condensed_index(n, i, j), pos);
                pos += 1;
            }
        }
        assert_eq!(pos, condensed_len(n));
        assert_eq!(items_for_condensed_len(21), Some(7));
        assert_eq!(items_for_condensed_len(20), None);
    }

    fn points_strategy() -> impl Strategy<Value = DenseMatrix> {
        (2usize..9, 1usize..5).prop_flat_map(|(n, d)| {
            prop::collection::vec(-10.0f64..10.0, n * d)
                .prop_map(move |v| DenseMatrix::new(n, d, v).unwrap())
        })
    }

    /// Random orthogonal matrix by Gram-Schmidt on a seeded Gaussian draw.
    fn orthogonal(d: usize, seed: u64) -> DenseMatrix {
        let mut rng = crate::rng::SeededRng::new(seed, "test-rotation");
        let g = rng.standard_normal(d * d);
        let mut q: Vec<Vec<f64>> = Vec::new();
        for k in 0..d {
            let mut v = g[k * d..(k + 1) * d].to_vec();
            for u in &q {
                let p = dot(&v, u);
                for (x, y) in v.iter_mut().zip(u) {
                    *x -= p * y;
                }
            }
            let norm = dot(&v, &v).sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            q.push(v);
        }
        DenseMatrix::from_rows(&q).unwrap()
    }

    proptest! {
        #[test]
        fn pairwise_is_a_metric(points in points_strategy()) {
            let n = points.rows();
            let d = pairwise_euclidean(&points).unwrap();
            let at = |i: usize, j: usize| {
                if i == j { 0.0 } else { d[condensed_index(n, i.min(j), i.max(j))] }
            };
            for i in 0..n {
                for j in 0..n {
                    prop_assert!(at(i, j) >= 0.0);
                    prop_assert_eq!(at(i, j), at(j, i));
                    for k in 0..n {
                        prop_assert!(at(i, k) <= at(i, j) + at(j, k) + 1e-12);
                    }
                }
            }
        }

        #[test]
        fn pairwise_invariant_under_rigid_motion(points in points_strategy(), seed in 0u64..1000) {
            let q = orthogonal(points.cols(), seed);
            let mut moved = points.matmul(&q).unwrap();
            let shift: Vec<f64> = (0..points.cols()).map(|j| 3.0 - j as f64).collect();
            moved.add_row_vector(&shift);
            let a = pairwise_euclidean(&points).unwrap();
            let b = pairwise_euclidean(&moved).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1e-9));
            }
        }
    }
}
