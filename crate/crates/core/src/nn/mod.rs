//! Feed-forward networks with an explicit reverse pass, the variational
//! head, and the Adam optimiser.

mod adam;
mod checkpoint;
mod latent;
mod network;

pub use adam::AdamConfig;
pub use checkpoint::{read_network, write_network, NETWORK_MAGIC};
pub use latent::{
    clamp_logvar, kl_to_standard_normal, mse_loss, sample_latent, KlTerm, LatentSample, LOGVAR_CLAMP,
};
pub use network::{
    Activation, LayerParams, Network, NetworkParams, NetworkSpec, ParamGrads, Tape, DECODER_HIDDEN,
    ENCODER_HIDDEN,
};
