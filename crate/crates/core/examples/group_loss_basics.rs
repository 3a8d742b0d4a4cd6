//! Group costs and the batch group loss on a toy batch, and their
//! indifference to the scale and orientation of the embedding.

use groupenc::{assign_groups, batch_group_loss, group_cost, DenseMatrix, GroupStrategy, SeededRng};

fn main() -> groupenc::Result<()> {
    let mut rng = SeededRng::new(0, "example");
    let hd = DenseMatrix::new(16, 10, rng.standard_normal(160))?;
    let ld = DenseMatrix::new(16, 2, rng.standard_normal(32))?;

    let group = [0, 1, 2, 3];
    let g = group_cost(&hd.select_rows(&group), &ld.select_rows(&group))?;
    println!("cost of one quartet: {:.6}", g.cost);

    for strategy in [GroupStrategy::Headed, GroupStrategy::Disjoint] {
        let groups = assign_groups(16, 4, strategy, &mut rng)?;
        let loss = batch_group_loss(&hd, &ld, &groups)?;
        let scaled = batch_group_loss(&hd, &ld.scale(17.3), &groups)?;
        println!(
            "{strategy:?}: loss {:.6}, after scaling by 17.3 {:.6}, gradient norm {:.4}",
            loss.loss,
            scaled.loss,
            loss.grad.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt()
        );
    }
    Ok(())
}
