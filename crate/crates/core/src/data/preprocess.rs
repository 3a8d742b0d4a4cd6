//! Expression-matrix preprocessing: per-row count normalisation, log1p,
//! per-column standardisation with an upper clip, then PCA.

use crate::data::pca::{pca_fit_transform, PcaModel};
use crate::error::{Error, Result};
use crate::tensor::DenseMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessConfig {
    pub row_normalize: bool,
    pub log1p: bool,
    pub standardize: bool,
    pub scale_clip: f64,
    /// `None` skips PCA.
    pub pca_components: Option<usize>,
    /// For data that arrives already normalised: bypasses the row
    /// normalisation and log1p stages regardless of their flags.
    pub skip_row_normalize_and_log: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            row_normalize: true,
            log1p: true,
            standardize: true,
            scale_clip: 10.0,
            pca_components: Some(50),
            skip_row_normalize_and_log: false,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        if !(self.scale_clip > 0.0) {
            return Err(Error::config(format!("clip {} must be positive", self.scale_clip)));
        }
        if let Some(k) = self.pca_components {
            let max = rows.saturating_sub(1).min(cols);
            if k == 0 || k > max {
                return Err(Error::config(format!(
                    "{k} principal components requested; must be within 1..={max} for a {rows}×{cols} matrix"
                )));
            }
        }
        Ok(())
    }
}

/// Row-normalised counts plus the indices of all-zero rows, which are left
/// as zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedRows {
    pub matrix: DenseMatrix,
    pub zero_rows: Vec<usize>,
}

/// Scales every row to the median total of the non-zero rows.
pub fn normalize_rows(counts: &DenseMatrix) -> Result<NormalizedRows> {
    if let Some(v) = counts.as_slice().iter().find(|v| **v < 0.0) {
        return Err(Error::Domain(format!("negative count {v}")));
    }
    let totals: Vec<f64> = counts.row_iter().map(|r| r.iter().sum()).collect();
    let zero_rows: Vec<usize> = (0..counts.rows()).filter(|&i| totals[i] == 0.0).collect();
    if !zero_rows.is_empty() {
        log::warn!("{} all-zero rows left unnormalised", zero_rows.len());
    }
    let mut positive: Vec<f64> = totals.iter().copied().filter(|t| *t > 0.0).collect();
    let target = median(&mut positive);
    let mut matrix = counts.clone();
    for (i, total) in totals.iter().enumerate() {
        if *total > 0.0 {
            let f = target / total;
            matrix.row_mut(i).iter_mut().for_each(|v| *v *= f);
        }
    }
    Ok(NormalizedRows { matrix, zero_rows })
}

/// Middle value, or the mean of the two middle values; 0 for no values.
fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

pub fn log1p_transform(m: &DenseMatrix) -> Result<DenseMatrix> {
    if let Some(v) = m.as_slice().iter().find(|v| **v < 0.0) {
        return Err(Error::Domain(format!("log1p of negative value {v}")));
    }
    Ok(m.map(f64::ln_1p))
}

/// Column z-scores with population variance, then values above `clip` set
/// to `clip`. Constant columns become zeros. Negative values are not clipped.
pub fn standardize_clip(m: &DenseMatrix, clip: f64) -> Result<DenseMatrix> {
    if !(clip > 0.0) {
        return Err(Error::config(format!("clip {clip} must be positive")));
    }
    let rows = m.rows() as f64;
    let means = m.column_means();
    let mut var = vec![0.0; m.cols()];
    for row in m.row_iter() {
        for ((s, v), mu) in var.iter_mut().zip(row).zip(&means) {
            *s += (v - mu) * (v - mu);
        }
    }
    let sd: Vec<f64> = var.iter().map(|s| (s / rows).sqrt()).collect();
    Ok(DenseMatrix::from_fn(m.rows(), m.cols(), |i, j| {
        if sd[j] == 0.0 {
            0.0
        } else {
            ((m.get(i, j) - means[j]) / sd[j]).min(clip)
        }
    }))
}

/// Runs the enabled stages in order: normalise, log1p, standardise, PCA.
pub fn preprocess(m: &DenseMatrix, config: &PreprocessConfig) -> Result<(DenseMatrix, Option<PcaModel>)> {
    config.validate(m.rows(), m.cols())?;
    let mut x = m.clone();
    if !config.skip_row_normalize_and_log {
        if config.row_normalize {
            x = normalize_rows(&x)?.matrix;
        }
        if config.log1p {
            x = log1p_transform(&x)?;
        }
    }
    if config.standardize {
        x = standardize_clip(&x, config.scale_clip)?;
    }
    match config.pca_components {
        Some(k) => {
            let (model, scores) = pca_fit_transform(&x, k)?;
            Ok((scores, Some(model)))
        }
        None => Ok((x, None)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    fn counts(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = SeededRng::new(seed, "counts");
        DenseMatrix::from_fn(rows, cols, |_, _| (rng.uniform() * 20.0).floor())
    }

    #[test]
    fn normalize_hand_examples() {
        let m = DenseMatrix::from_rows(&[[1.0, 1.0], [2.0, 2.0]]).unwrap();
        let n = normalize_rows(&m).unwrap();
        assert_eq!(n.matrix.as_slice(), &[1.5; 4]);
        let one = DenseMatrix::from_rows(&[[3.0, 0.0, 5.0]]).unwrap();
        assert_eq!(normalize_rows(&one).unwrap().matrix, one);
        let equal = DenseMatrix::from_rows(&[[1.0, 3.0], [2.0, 2.0]]).unwrap();
        assert_eq!(normalize_rows(&equal).unwrap().matrix, equal);
        // totals 2, 4, 12: median 4
        let m = DenseMatrix::from_rows(&[[2.0], [4.0], [12.0]]).unwrap();
        assert_eq!(normalize_rows(&m).unwrap().matrix.as_slice(), &[4.0; 3]);
    }

    #[test]
    fn zero_rows_are_flagged() {
        let m = DenseMatrix::from_rows(&[[0.0, 0.0], [1.0, 3.0], [2.0, 0.0]]).unwrap();
        let n = normalize_rows(&m).unwrap();
        assert_eq!(n.zero_rows, vec![0]);
        assert_eq!(n.matrix.row(0), &[0.0, 0.0]);
        assert_eq!(n.matrix.row(1), &[0.75, 2.25]);
        assert!(matches!(
            normalize_rows(&DenseMatrix::from_rows(&[[-1.0]]).unwrap()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn log1p_cases() {
        let m = DenseMatrix::from_rows(&[[0.0, std::f64::consts::E - 1.0]]).unwrap();
        let l = log1p_transform(&m).unwrap();
        assert_eq!(l.get(0, 0), 0.0);
        assert!((l.get(0, 1) - 1.0).abs() < 1e-15);
        assert!(matches!(
            log1p_transform(&DenseMatrix::from_rows(&[[-0.5]]).unwrap()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn standardize_hand_examples() {
        let m = DenseMatrix::from_rows(&[[0.0, 5.0], [2.0, 5.0]]).unwrap();
        let s = standardize_clip(&m, 10.0).unwrap();
        assert_eq!(s.as_slice(), &[-1.0, 0.0, 1.0, 0.0]);
        assert!(standardize_clip(&m, 0.0).is_err());
    }

    #[test]
    fn outliers_clip_upward_only() {
        // one value far above 199 zeros: z = sqrt(199) ≈ 14.1
        let mut col = vec![0.0; 200];
        col[0] = 1.0;
        let m = DenseMatrix::new(200, 1, col.clone()).unwrap();
        let s = standardize_clip(&m, 10.0).unwrap();
        assert_eq!(s.get(0, 0), 10.0);
        col[0] = -1.0;
        let s = standardize_clip(&DenseMatrix::new(200, 1, col).unwrap(), 10.0).unwrap();
        assert!(s.get(0, 0) < -14.0);
    }

    #[test]
    fn chain_matches_manual_composition() {
        let m = counts(40, 12, 1);
        let config = PreprocessConfig {
            pca_components: Some(5),
            ..PreprocessConfig::default()
        };
        let (out, model) = preprocess(&m, &config).unwrap();
        let manual = standardize_clip(&log1p_transform(&normalize_rows(&m).unwrap().matrix).unwrap(), 10.0).unwrap();
        let (_, scores) = pca_fit_transform(&manual, 5).unwrap();
        assert_eq!(out, scores);
        assert_eq!(model.unwrap().components.cols(), 5);
    }

    #[test]
    fn skip_flag_bypasses_normalisation_and_log() {
        let mut rng = SeededRng::new(2, "scaled");
        let m = DenseMatrix::new(30, 6, rng.standard_normal(180)).unwrap();
        let config = PreprocessConfig {
            skip_row_normalize_and_log: true,
            pca_components: None,
            ..PreprocessConfig::default()
        };
        // negative inputs would fail log1p if it ran
        let (out, model) = preprocess(&m, &config).unwrap();
        assert!(model.is_none());
        assert_eq!(out, standardize_clip(&m, 10.0).unwrap());
    }

    #[test]
    fn pca_only_chain_rotates_centred_data() {
        let m = counts(20, 4, 3);
        let config = PreprocessConfig {
            row_normalize: false,
            log1p: false,
            standardize: false,
            pca_components: Some(4),
            ..PreprocessConfig::default()
        };
        let (out, _) = preprocess(&m, &config).unwrap();
        let means = m.column_means();
        let centred = DenseMatrix::from_fn(20, 4, |i, j| m.get(i, j) - means[j]);
        let a = crate::tensor::pairwise_euclidean(&out).unwrap();
        let b = crate::tensor::pairwise_euclidean(&centred).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn config_limits() {
        let c = PreprocessConfig::default();
        assert!(c.validate(51, 50).is_ok());
        assert!(c.validate(50, 50).is_err());
        assert!(c.validate(100, 40).is_err());
        assert!(PreprocessConfig { scale_clip: -1.0, ..c }.validate(100, 60).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn normalised_rows_share_one_total(seed in 0u64..10_000) {
            let m = counts(15, 7, seed);
            let n = normalize_rows(&m).unwrap();
            let totals: Vec<f64> = (0..15)
                .filter(|i| !n.zero_rows.contains(i))
                .map(|i| n.matrix.row(i).iter().sum())
                .collect();
            for t in &totals {
                prop_assert!((t - totals[0]).abs() <= 1e-9 * totals[0]);
            }
        }

        #[test]
        fn standardised_columns_are_centred_and_unit(seed in 0u64..10_000) {
            let mut rng = SeededRng::new(seed, "z");
            let m = DenseMatrix::new(50, 4, rng.standard_normal(200)).unwrap();
            let s = standardize_clip(&m, 1e6).unwrap();
            for (j, mean) in s.column_means().iter().enumerate() {
                prop_assert!(mean.abs() < 1e-9);
                let var = (0..50).map(|i| s.get(i, j).powi(2)).sum::<f64>() / 50.0;
                prop_assert!((var - 1.0).abs() < 1e-9);
            }
            // a second pass over unclipped output changes nothing beyond rounding
            let again = standardize_clip(&s, 1e6).unwrap();
            for (a, b) in again.as_slice().iter().zip(s.as_slice()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn log1p_is_monotone(a in 0.0f64..1e6, b in 0.0f64..1e6) {
            prop_assume!(a < b);
            let m = DenseMatrix::from_rows(&[[a, b]]).unwrap();
            let l = log1p_transform(&m).unwrap();
            prop_assert!(l.get(0, 0) < l.get(0, 1));
        }
    }
}
