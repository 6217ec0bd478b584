//! Disentanglement laboratory: categorical (Gumbel-Softmax) and Gaussian
//! variational autoencoders with ordered discrete latents, total-correlation
//! and semi-supervised regularizers, the straight-through gap, procedural
//! ground-truth datasets and the standard disentanglement metric suite.
//!
//! Everything runs on a small reverse-mode autodiff engine over dense `f64`
//! tensors ([`tensor`]).

pub mod datasets;
pub mod error;
pub mod experiments;
pub mod latent;
pub mod metrics;
pub mod models;
pub mod tensor;

pub use error::{Error, Result};

/// Seedable, platform-stable generator used for every random draw.
pub type DlabRng = rand_chacha::ChaCha8Rng;

/// Builds the crate-wide generator from a seed.
pub fn rng_from_seed(seed: u64) -> DlabRng {
    use rand::SeedableRng;
    DlabRng::seed_from_u64(seed)
}
