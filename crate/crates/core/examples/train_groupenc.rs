//! Train GroupEnc on the synthetic benchmark and score its embedding.

use groupenc::data::{gaussian_mixture, SyntheticConfig};
use groupenc::{evaluate, train, ModelConfig, SeededRng, TrainConfig};

fn main() -> groupenc::Result<()> {
    let data = gaussian_mixture(&SyntheticConfig::default())?.matrix;
    let config = ModelConfig::groupenc(data.cols(), 2, 4);
    let tc = TrainConfig {
        epochs: 50,
        seed: 0,
        ..TrainConfig::default()
    };
    let (model, log) = train(&config, &tc, &data)?;
    for r in log.records.iter().step_by(10) {
        println!("epoch {:>3}  loss {:.5}  kl {:.3}", r.epoch, r.loss.total, r.loss.kl);
    }
    let z = model.embed(&data)?;
    let r = evaluate(&data, &z, Some(2000), &mut SeededRng::new(0, "eval"))?;
    println!(
        "{:.1}s, local SP {:.4}, global SP {:.4}",
        log.total_seconds(),
        r.local_sp,
        r.global_sp
    );
    Ok(())
}
