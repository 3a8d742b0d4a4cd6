//! Dimensionality reduction with a variational encoder trained under the
//! scale-agnostic group loss, a VAE baseline, and neighbourhood-rank
//! (R_NX) quality scores.
//!
//! ```no_run
//! use groupenc::{data, evaluate, train, ModelConfig, SeededRng, TrainConfig};
//!
//! let x = data::gaussian_mixture(&data::SyntheticConfig::default())?.matrix;
//! let config = ModelConfig::groupenc(x.cols(), 2, 4);
//! let (model, _log) = train(&config, &TrainConfig { epochs: 50, ..Default::default() }, &x)?;
//! let z = model.embed(&x)?;
//! let scores = evaluate(&x, &z, Some(1000), &mut SeededRng::new(0, "eval"))?;
//! println!("local {:.3} global {:.3}", scores.local_sp, scores.global_sp);
//! # Ok::<(), groupenc::Error>(())
//! ```

pub mod benchmark;
pub mod cli;
pub mod data;
pub mod error;
pub mod group_loss;
pub mod models;
pub mod nn;
pub mod rng;
pub mod rnx;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use group_loss::{assign_groups, batch_group_loss, group_cost, GroupStrategy};
pub use models::{Model, ModelConfig, ModelKind};
pub use rnx::{evaluate, RnxResult};
pub use trainer::{resume, train, TrainConfig, TrainLog};
pub use rng::SeededRng;
pub use tensor::DenseMatrix;
