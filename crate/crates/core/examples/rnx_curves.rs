//! R_NX curves and the local/global AUC scores for a perfect, a partial and a
//! random embedding.

use groupenc::data::{gaussian_mixture, SyntheticConfig};
use groupenc::{evaluate, DenseMatrix, SeededRng};

fn main() -> groupenc::Result<()> {
    let hd = gaussian_mixture(&SyntheticConfig {
        points: 1000,
        ..SyntheticConfig::default()
    })?
    .matrix;
    let first_two = hd.column_slice(0, 2);
    let random = DenseMatrix::new(1000, 2, SeededRng::new(1, "random").standard_normal(2000))?;

    let mut rng = SeededRng::new(0, "eval");
    for (name, ld) in [("identity", &hd), ("first two columns", &first_two), ("random", &random)] {
        let r = evaluate(&hd, ld, None, &mut rng)?;
        let at = |k: usize| r.rnx[k - 1];
        println!(
            "{name:>18}: local {:.4}  global {:.4}  R_NX(10) {:.3}  R_NX(100) {:.3}",
            r.local_sp,
            r.global_sp,
            at(10),
            at(100)
        );
    }
    Ok(())
}
