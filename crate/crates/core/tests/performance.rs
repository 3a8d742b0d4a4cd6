use std::time::Instant;

use groupenc::data::{gaussian_mixture, SyntheticConfig};
use groupenc::{train, ModelConfig, TrainConfig};

/// Least-squares slope of log(seconds) against log(rows).
fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

#[test]
fn groupenc_epoch_time_is_linear_in_rows() {
    let data = gaussian_mixture(&SyntheticConfig {
        points: 8000,
        ..SyntheticConfig::default()
    })
    .unwrap()
    .matrix;
    let model = ModelConfig::groupenc(50, 2, 4);
    let mut points = Vec::new();
    for rows in [1000, 2000, 4000, 8000] {
        let subset = data.select_rows(&(0..rows).collect::<Vec<_>>());
        let mut best = f64::INFINITY;
        for seed in 0..3 {
            let tc = TrainConfig {
                epochs: 2,
                seed,
                ..TrainConfig::default()
            };
            let t = Instant::now();
            train(&model, &tc, &subset).unwrap();
            best = best.min(t.elapsed().as_secs_f64() / 2.0);
        }
        points.push((rows as f64, best));
    }
    let slope = loglog_slope(&points);
    assert!(slope < 1.2, "exponent {slope:.3} from {points:?}");
}
