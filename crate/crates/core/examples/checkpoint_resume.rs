//! Interrupt training, save a checkpoint, and resume to the same result as an
//! uninterrupted run.

use groupenc::data::{gaussian_mixture, SyntheticConfig};
use groupenc::models::{load_model, save_model};
use groupenc::{resume, train, ModelConfig, TrainConfig};

fn main() -> groupenc::Result<()> {
    let data = gaussian_mixture(&SyntheticConfig {
        points: 1000,
        ..SyntheticConfig::default()
    })?
    .matrix;
    let config = ModelConfig::groupenc(50, 2, 4);
    let tc = |epochs| TrainConfig {
        epochs,
        seed: 7,
        ..TrainConfig::default()
    };

    let (straight, _) = train(&config, &tc(20), &data)?;
    let (half, _) = train(&config, &tc(10), &data)?;
    let path = std::env::temp_dir().join("groupenc_example.ckpt");
    save_model(&path, &half)?;
    let (resumed, log) = resume(load_model(&path)?, &tc(20), &data)?;
    std::fs::remove_file(&path).ok();

    println!("resumed epochs {:?}", log.records.iter().map(|r| r.epoch).collect::<Vec<_>>());
    println!("identical to the straight run: {}", resumed.flatten_params() == straight.flatten_params());
    Ok(())
}
