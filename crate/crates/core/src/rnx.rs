//! Neighbourhood-rank quality of an embedding: Q_NX(K), R_NX(K) and their
//! areas under the curve.
//!
//! For every reference point the neighbours are ranked by distance in both
//! spaces (ties go to the lower index). Neighbour `j` belongs to both
//! K-neighbourhoods exactly when `K >= max(hd_rank, ld_rank)`, so one
//! histogram of those join points per reference, summed over references and
//! cumulated, gives every Q_NX(K) at once. Each worker holds O(N) scratch;
//! no N×N matrix is ever built.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{euclidean, DenseMatrix};

/// Ranks 1..N−1 of every other point by distance to `reference`, listed in
/// ascending point index with the reference skipped.
pub fn neighbor_ranks(points: &DenseMatrix, reference: usize) -> Result<Vec<usize>> {
    let n = points.rows();
    if n < 2 || reference >= n {
        return Err(Error::shape(format!(
            "reference {reference} needs at least 2 points, have {n}"
        )));
    }
    let mut keys = Vec::new();
    let mut rank = vec![0u32; n];
    sorted_neighbors(points, reference, &mut keys);
    for (pos, &(_, j)) in keys.iter().enumerate() {
        rank[j as usize] = pos as u32 + 1;
    }
    Ok((0..n)
        .filter(|&j| j != reference)
        .map(|j| rank[j] as usize)
        .collect())
}

/// Neighbours of `reference` in rank order. Keys are the raw bits of the
/// non-negative distance, which order the same way as the float.
fn sorted_neighbors(points: &DenseMatrix, reference: usize, keys: &mut Vec<(u64, u32)>) {
    let r = points.row(reference);
    keys.clear();
    keys.extend(
        (0..points.rows())
            .filter(|&j| j != reference)
            .map(|j| (euclidean(r, points.row(j)).to_bits(), j as u32)),
    );
    keys.sort_unstable();
}

/// Size of the shared K-neighbourhood for one reference point.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankProfile {
    pub reference_index: usize,
    /// `counts[K - 1] = |ν_K ∩ n_K|` for K = 1..N−1.
    pub counts: Vec<usize>,
}

/// Shared-neighbourhood sizes from two rank lists over the same neighbours.
pub fn intersection_profile(hd_ranks: &[usize], ld_ranks: &[usize]) -> Result<Vec<usize>> {
    let m = hd_ranks.len();
    if ld_ranks.len() != m {
        return Err(Error::Contract(format!(
            "rank lists differ in length ({m} vs {})",
            ld_ranks.len()
        )));
    }
    let mut seen_hd = vec![false; m + 1];
    let mut seen_ld = vec![false; m + 1];
    let mut joins = vec![0usize; m + 1];
    for (&a, &b) in hd_ranks.iter().zip(ld_ranks) {
        if a == 0 || a > m || b == 0 || b > m || seen_hd[a] || seen_ld[b] {
            return Err(Error::Contract(format!(
                "ranks must be permutations of 1..{m}"
            )));
        }
        seen_hd[a] = true;
        seen_ld[b] = true;
        joins[a.max(b)] += 1;
    }
    let mut acc = 0;
    Ok(joins[1..]
        .iter()
        .map(|&j| {
            acc += j;
            acc
        })
        .collect())
}

/// Profile for one reference point of an (hd, ld) pair.
pub fn rank_profile(hd: &DenseMatrix, ld: &DenseMatrix, reference: usize) -> Result<RankProfile> {
    check_pair(hd, ld, 2)?;
    let counts = intersection_profile(&neighbor_ranks(hd, reference)?, &neighbor_ranks(ld, reference)?)?;
    Ok(RankProfile {
        reference_index: reference,
        counts,
    })
}

fn check_pair(hd: &DenseMatrix, ld: &DenseMatrix, min_rows: usize) -> Result<()> {
    if hd.rows() != ld.rows() {
        return Err(Error::shape(format!(
            "high-dimensional data has {} rows, embedding has {}",
            hd.rows(),
            ld.rows()
        )));
    }
    if hd.rows() < min_rows {
        return Err(Error::shape(format!(
            "need at least {min_rows} points, have {}",
            hd.rows()
        )));
    }
    Ok(())
}

/// Reusable buffers of one worker: about 28 bytes per point.
struct Worker {
    keys: Vec<(u64, u32)>,
    hd_rank: Vec<u32>,
    joins: Vec<u64>,
}

impl Worker {
    fn new(n: usize) -> Self {
        Self {
            keys: Vec::with_capacity(n),
            hd_rank: vec![0; n],
            joins: vec![0; n],
        }
    }

    fn add_reference(&mut self, hd: &DenseMatrix, ld: &DenseMatrix, i: usize) {
        sorted_neighbors(hd, i, &mut self.keys);
        for (pos, &(_, j)) in self.keys.iter().enumerate() {
            self.hd_rank[j as usize] = pos as u32 + 1;
        }
        sorted_neighbors(ld, i, &mut self.keys);
        for (pos, &(_, j)) in self.keys.iter().enumerate() {
            let k = self.hd_rank[j as usize].max(pos as u32 + 1);
            self.joins[k as usize] += 1;
        }
    }
}

/// Q_NX(K) for K = 1..N−1 (index K−1), parallel over reference points.
pub fn qnx_curve(hd: &DenseMatrix, ld: &DenseMatrix) -> Result<Vec<f64>> {
    qnx_curve_with_workers(hd, ld, rayon::current_num_threads())
}

/// As [`qnx_curve`] with the reference points split into `workers`
/// contiguous chunks. Counts are integers, so the result does not depend on
/// the split.
pub fn qnx_curve_with_workers(hd: &DenseMatrix, ld: &DenseMatrix, workers: usize) -> Result<Vec<f64>> {
    check_pair(hd, ld, 3)?;
    let n = hd.rows();
    let workers = workers.clamp(1, n);
    let chunk = n.div_ceil(workers);
    let partial: Vec<Vec<u64>> = (0..workers)
        .into_par_iter()
        .map(|w| {
            let mut worker = Worker::new(n);
            for i in (w * chunk)..((w + 1) * chunk).min(n) {
                worker.add_reference(hd, ld, i);
            }
            worker.joins
        })
        .collect();
    let mut joins = vec![0u64; n];
    for p in &partial {
        for (a, b) in joins.iter_mut().zip(p) {
            *a += b;
        }
    }
    let mut acc = 0u64;
    Ok((1..n)
        .map(|k| {
            acc += joins[k];
            acc as f64 / (k as f64 * n as f64)
        })
        .collect())
}

/// R_NX(K) for K = 1..N−2 (index K−1). K = N−1 is left out: its
/// denominator is zero.
pub fn rnx_curve(qnx: &[f64], n: usize) -> Result<Vec<f64>> {
    if n < 3 || qnx.len() != n - 1 {
        return Err(Error::shape(format!(
            "Q_NX has {} entries, expected N−1 = {}",
            qnx.len(),
            n.saturating_sub(1)
        )));
    }
    let m = (n - 1) as f64;
    Ok(qnx[..n - 2]
        .iter()
        .enumerate()
        .map(|(idx, &q)| {
            let k = (idx + 1) as f64;
            (m * q - k) / (m - k)
        })
        .collect())
}

/// `(local, global)`: the R_NX mean weighted by 1/K, and the plain mean.
pub fn auc_scores(rnx: &[f64]) -> (f64, f64) {
    let mut weighted = 0.0;
    let mut weights = 0.0;
    for (idx, &r) in rnx.iter().enumerate() {
        let w = 1.0 / (idx + 1) as f64;
        weighted += w * r;
        weights += w;
    }
    let global = rnx.iter().sum::<f64>() / rnx.len() as f64;
    (weighted / weights, global)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RnxResult {
    /// Points actually evaluated.
    pub n: usize,
    pub qnx: Vec<f64>,
    pub rnx: Vec<f64>,
    pub local_sp: f64,
    pub global_sp: f64,
    /// Subset size when the rows were subsampled.
    pub subsample: Option<usize>,
}

impl RnxResult {
    /// `K,qnx,rnx` rows for K = 1..N−1; rnx is empty on the last row.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("K,qnx,rnx\n");
        for (idx, q) in self.qnx.iter().enumerate() {
            match self.rnx.get(idx) {
                Some(r) => writeln!(out, "{},{q},{r}", idx + 1),
                None => writeln!(out, "{},{q},", idx + 1),
            }
            .expect("writing to a String");
        }
        out
    }

    pub fn scores_text(&self) -> String {
        let sub = self.subsample.map_or_else(|| "none".to_string(), |s| s.to_string());
        format!(
            "local_sp={}\nglobal_sp={}\nn={}\nsubsample={sub}\n",
            self.local_sp, self.global_sp, self.n
        )
    }

    pub fn write_curve(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.curve_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn write_scores(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.scores_text()).map_err(|e| Error::io(path, e))
    }
}

/// Full evaluation. With `subsample`, a uniform row subset of that size is
/// drawn from `rng` and both matrices are restricted to it first.
pub fn evaluate(
    hd: &DenseMatrix,
    ld: &DenseMatrix,
    subsample: Option<usize>,
    rng: &mut SeededRng,
) -> Result<RnxResult> {
    check_pair(hd, ld, 3)?;
    let (qnx, n) = match subsample {
        Some(s) if s > hd.rows() || s < 3 => {
            return Err(Error::config(format!(
                "subsample {s} must be within 3..={}",
                hd.rows()
            )))
        }
        Some(s) => {
            let mut rows = rng.shuffle(hd.rows());
            rows.truncate(s);
            rows.sort_unstable();
            (qnx_curve(&hd.select_rows(&rows), &ld.select_rows(&rows))?, s)
        }
        None => (qnx_curve(hd, ld)?, hd.rows()),
    };
    let rnx = rnx_curve(&qnx, n)?;
    let (local_sp, global_sp) = auc_scores(&rnx);
    Ok(RnxResult {
        n,
        qnx,
        rnx,
        local_sp,
        global_sp,
        subsample,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random(n: usize, d: usize, seed: u64) -> DenseMatrix {
        DenseMatrix::new(n, d, SeededRng::new(seed, "points").standard_normal(n * d)).unwrap()
    }

    /// Brute force: rank by counting closer points, then intersect explicit
    /// K-neighbourhood sets for every (i, K).
    fn naive_qnx(hd: &DenseMatrix, ld: &DenseMatrix) -> Vec<f64> {
        let n = hd.rows();
        let ranks = |p: &DenseMatrix, i: usize| -> Vec<usize> {
            (0..n)
                .map(|j| {
                    if j == i {
                        return 0;
                    }
                    let dij = euclidean(p.row(i), p.row(j));
                    1 + (0..n)
                        .filter(|&k| k != i && k != j)
                        .filter(|&k| {
                            let dik = euclidean(p.row(i), p.row(k));
                            dik < dij || (dik == dij && k < j)
                        })
                        .count()
                })
                .collect()
        };
        let mut total = vec![0usize; n - 1];
        for i in 0..n {
            let (rh, rl) = (ranks(hd, i), ranks(ld, i));
            for k in 1..n {
                let nu: Vec<usize> = (0..n).filter(|&j| j != i && rh[j] <= k).collect();
                total[k - 1] += nu.iter().filter(|&&j| rl[j] <= k).count();
            }
        }
        total
            .iter()
            .enumerate()
            .map(|(idx, &c)| c as f64 / ((idx + 1) as f64 * n as f64))
            .collect()
    }

    #[test]
    fn ranks_on_a_line() {
        let p = DenseMatrix::from_rows(&[[0.0], [1.0], [3.0]]).unwrap();
        assert_eq!(neighbor_ranks(&p, 0).unwrap(), vec![1, 2]);
        assert_eq!(neighbor_ranks(&p, 2).unwrap(), vec![2, 1]);
    }

    #[test]
    fn ties_go_to_the_lower_index() {
        let p = DenseMatrix::from_rows(&[[0.0], [-1.0], [1.0], [1.0]]).unwrap();
        assert_eq!(neighbor_ranks(&p, 0).unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn ranks_are_a_permutation() {
        let p = random(30, 3, 1);
        let mut r = neighbor_ranks(&p, 7).unwrap();
        r.sort_unstable();
        assert_eq!(r, (1..30).collect::<Vec<_>>());
        assert!(neighbor_ranks(&random(1, 2, 0), 0).is_err());
    }

    #[test]
    fn profile_hand_examples() {
        assert_eq!(intersection_profile(&[1, 2, 3], &[3, 2, 1]).unwrap(), vec![0, 1, 3]);
        assert_eq!(intersection_profile(&[2, 1, 3], &[2, 1, 3]).unwrap(), vec![1, 2, 3]);
        assert!(matches!(intersection_profile(&[1, 1, 3], &[1, 2, 3]), Err(Error::Contract(_))));
        assert!(matches!(intersection_profile(&[1, 2], &[1, 2, 3]), Err(Error::Contract(_))));
        assert!(matches!(intersection_profile(&[1, 2, 4], &[1, 2, 3]), Err(Error::Contract(_))));
    }

    #[test]
    fn rank_profile_ends_full() {
        let p = rank_profile(&random(25, 4, 2), &random(25, 2, 3), 4).unwrap();
        assert_eq!(*p.counts.last().unwrap(), 24);
        assert!(p.counts.windows(2).all(|w| w[0] <= w[1]));
        assert!(p.counts.iter().enumerate().all(|(k, &c)| c <= k + 1));
    }

    #[test]
    fn rnx_and_auc_hand_examples() {
        let r = rnx_curve(&[0.0, 0.75, 0.9, 1.0], 5).unwrap();
        assert_eq!(r[1], 0.5);
        assert_eq!(r.len(), 3);
        let (local, global) = auc_scores(&[1.0, 0.0, 0.0]);
        assert!((global - 1.0 / 3.0).abs() < 1e-15);
        assert!((local - 6.0 / 11.0).abs() < 1e-15);
        let (l, g) = auc_scores(&[0.4; 17]);
        assert!((l - 0.4).abs() < 1e-15 && (g - 0.4).abs() < 1e-15);
        let chance: Vec<f64> = (1..=9).map(|k| k as f64 / 9.0).collect();
        assert!(rnx_curve(&chance, 10).unwrap().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn identity_embedding_is_perfect() {
        let x = random(60, 5, 4);
        let r = evaluate(&x, &x, None, &mut SeededRng::new(0, "eval")).unwrap();
        assert!(r.qnx.iter().all(|&q| q == 1.0));
        assert!(r.rnx.iter().all(|&q| q == 1.0));
        assert_eq!((r.local_sp, r.global_sp), (1.0, 1.0));
    }

    #[test]
    fn streaming_matches_the_naive_oracle() {
        for seed in 0..6 {
            let n = 10 + 13 * seed as usize;
            let hd = random(n, 4, seed);
            let mut ld = random(n, 2, seed + 100);
            // force some exact ties
            let dup = ld.row(0).to_vec();
            ld.row_mut(n - 1).copy_from_slice(&dup);
            assert_eq!(qnx_curve(&hd, &ld).unwrap(), naive_qnx(&hd, &ld));
        }
    }

    #[test]
    fn worker_count_does_not_change_the_result() {
        let hd = random(101, 6, 8);
        let ld = random(101, 2, 9);
        let one = qnx_curve_with_workers(&hd, &ld, 1).unwrap();
        for w in [2, 3, 7, 101, 500] {
            assert_eq!(qnx_curve_with_workers(&hd, &ld, w).unwrap(), one);
        }
    }

    #[test]
    fn random_embedding_sits_at_chance() {
        let n = 2000;
        let q = qnx_curve(&random(n, 10, 10), &random(n, 2, 11)).unwrap();
        for k in [1usize, 10, 100, 500, 1000, 1500, 1999] {
            let chance = k as f64 / (n - 1) as f64;
            assert!((q[k - 1] - chance).abs() < 0.03, "K={k}: {} vs {chance}", q[k - 1]);
        }
    }

    #[test]
    fn full_subsample_equals_no_subsample() {
        let hd = random(40, 3, 12);
        let ld = random(40, 2, 13);
        let mut rng = SeededRng::new(1, "eval");
        let a = evaluate(&hd, &ld, None, &mut rng).unwrap();
        let b = evaluate(&hd, &ld, Some(40), &mut rng).unwrap();
        assert_eq!(a.qnx, b.qnx);
        assert_eq!(b.subsample, Some(40));
        let c = evaluate(&hd, &ld, Some(20), &mut SeededRng::new(1, "eval")).unwrap();
        let d = evaluate(&hd, &ld, Some(20), &mut SeededRng::new(1, "eval")).unwrap();
        assert_eq!(c, d);
        assert_eq!(c.n, 20);
        assert!(evaluate(&hd, &ld, Some(41), &mut rng).is_err());
        assert!(evaluate(&hd, &random(39, 2, 0), None, &mut rng).is_err());
    }

    #[test]
    fn output_formats() {
        let x = random(5, 2, 14);
        let r = evaluate(&x, &random(5, 1, 15), None, &mut SeededRng::new(0, "e")).unwrap();
        let csv = r.curve_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "K,qnx,rnx");
        assert_eq!(lines.len(), 5);
        assert!(lines[4].starts_with("4,1,") && lines[4].ends_with(','));
        let s = r.scores_text();
        assert!(s.contains("n=5\n") && s.contains("subsample=none\n"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn exact_similarities_leave_curves_unchanged(
            seed in 0u64..1000,
            scale in prop::sample::select(vec![0.25f64, 0.5, 2.0, 4.0]),
            flip in prop::bool::ANY,
        ) {
            // power-of-two scaling, reflection and swapping axes leave every
            // distance comparison bit-exact
            let hd = random(30, 3, seed);
            let ld = random(30, 2, seed + 1);
            let sign = if flip { -1.0 } else { 1.0 };
            let moved = DenseMatrix::from_fn(30, 2, |i, j| sign * scale * ld.get(i, 1 - j));
            let base = qnx_curve(&hd, &ld).unwrap();
            prop_assert_eq!(&qnx_curve(&hd, &moved).unwrap(), &base);
            prop_assert_eq!(&qnx_curve(&hd.scale(scale), &ld).unwrap(), &base);
        }
    }
}
