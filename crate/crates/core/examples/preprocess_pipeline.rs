//! Count matrix to principal components: row normalisation, log1p, scaling
//! with clipping and PCA, then projecting new rows with the fitted model.

use groupenc::data::{preprocess, PreprocessConfig};
use groupenc::{DenseMatrix, SeededRng};

fn main() -> groupenc::Result<()> {
    let mut rng = SeededRng::new(3, "counts");
    let counts = DenseMatrix::from_fn(500, 200, |i, j| {
        let rate = 1.0 + ((i % 5) * (j % 7)) as f64 / 4.0;
        (rng.uniform_range(0.0, rate)).floor()
    });

    let config = PreprocessConfig {
        pca_components: Some(20),
        ..PreprocessConfig::default()
    };
    let (pcs, pca) = preprocess(&counts, &config)?;
    let pca = pca.expect("PCA requested");
    println!("{:?} -> {:?}", counts.shape(), pcs.shape());
    let total: f64 = pca.explained_variance.iter().sum();
    for (k, v) in pca.explained_variance.iter().take(5).enumerate() {
        println!("PC{} variance {:.3} ({:.1}% of kept)", k + 1, v, 100.0 * v / total);
    }

    let again = pca.transform(&pcs_input(&counts, &config)?)?;
    println!("re-projection matches: {}", again == pcs);
    Ok(())
}

/// Everything up to, but excluding, PCA.
fn pcs_input(counts: &DenseMatrix, config: &PreprocessConfig) -> groupenc::Result<DenseMatrix> {
    let no_pca = PreprocessConfig {
        pca_components: None,
        ..config.clone()
    };
    Ok(preprocess(counts, &no_pca)?.0)
}
