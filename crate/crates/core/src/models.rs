//! The three trainable parameter blocks and their identity tags.

use alloc::vec::Vec;

use crate::contrastive::make_projector;
use crate::dataset::WindowSpec;
use crate::error::Result;
use crate::guide::ReturnPredictor;
use crate::mlp::{Activation, MlpParams};
use crate::rng::SeededRng;

/// Block ids keep the three networks' gradients separable on a shared tape
/// and name their checkpoint sections.
pub const BLOCK_DENOISER: u16 = 0;
pub const BLOCK_PREDICTOR: u16 = 1;
pub const BLOCK_PROJECTOR: u16 = 2;

/// Network widths and the step-embedding size.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub denoiser_hidden: Vec<usize>,
    pub predictor_hidden: Vec<usize>,
    pub latent_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 8,
            denoiser_hidden: alloc::vec![128, 128],
            predictor_hidden: alloc::vec![64, 64],
            latent_dim: 16,
        }
    }
}

/// Independently addressable parameter sets for the trajectory denoiser,
/// the return predictor, and the contrastive projector.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub denoiser: MlpParams,
    pub predictor: ReturnPredictor,
    pub projector: MlpParams,
}

impl ModelBundle {
    /// Fresh networks for the given window geometry. Draw order is fixed:
    /// denoiser, predictor, projector.
    pub fn init(spec: &WindowSpec, cfg: &ModelConfig, rng: &mut SeededRng) -> Result<Self> {
        let flat = spec.flat_len();
        let mut denoiser_sizes = alloc::vec![flat + cfg.embed_dim];
        denoiser_sizes.extend_from_slice(&cfg.denoiser_hidden);
        denoiser_sizes.push(flat);
        let denoiser = MlpParams::init(BLOCK_DENOISER, &denoiser_sizes, Activation::Linear, rng)?;
        let predictor = ReturnPredictor::init(spec, cfg.embed_dim, &cfg.predictor_hidden, rng)?;
        let projector = make_projector(spec.state_dim, cfg.latent_dim, rng)?;
        Ok(ModelBundle {
            denoiser,
            predictor,
            projector,
        })
    }
}
