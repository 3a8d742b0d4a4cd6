//! VAE and GroupEnc side by side at a few latent dimensions.

use groupenc::data::{gaussian_mixture, SyntheticConfig};
use groupenc::{evaluate, train, ModelConfig, SeededRng, TrainConfig};

fn main() -> groupenc::Result<()> {
    let data = gaussian_mixture(&SyntheticConfig {
        points: 2000,
        ..SyntheticConfig::default()
    })?
    .matrix;
    let tc = TrainConfig {
        epochs: 60,
        seed: 1,
        ..TrainConfig::default()
    };
    println!("dim  model      local   global");
    for dim in [2, 5] {
        for config in [ModelConfig::vae(50, dim), ModelConfig::groupenc(50, dim, 4)] {
            let (model, _) = train(&config, &tc, &data)?;
            let r = evaluate(&data, &model.embed(&data)?, None, &mut SeededRng::new(0, "eval"))?;
            println!("{dim:>3}  {:<9} {:.4}  {:.4}", config.kind.to_string(), r.local_sp, r.global_sp);
        }
    }
    Ok(())
}
