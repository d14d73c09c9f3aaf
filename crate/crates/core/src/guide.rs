//! The return predictor: estimates the start-state return of a noisy
//! trajectory window at any diffusion step and exposes its input gradient,
//! which steers the backward process.

use alloc::format;
use alloc::vec::Vec;

use crate::dataset::WindowSpec;
use crate::diffusion::NoisyTrajectory;
use crate::error::{CoreError, Result};
use crate::graph::{Graph, NodeId};
use crate::mlp::{time_embed, Activation, MlpParams};
use crate::models::BLOCK_PREDICTOR;
use crate::rng::SeededRng;

/// MLP from (flattened window ⊕ step embedding) to a scalar return estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPredictor {
    params: MlpParams,
    window_len: usize,
    embed_dim: usize,
}

impl ReturnPredictor {
    pub fn init(
        spec: &WindowSpec,
        embed_dim: usize,
        hidden: &[usize],
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let window_len = spec.flat_len();
        let mut sizes = alloc::vec![window_len + embed_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Ok(ReturnPredictor {
            params: MlpParams::init(BLOCK_PREDICTOR, &sizes, Activation::Linear, rng)?,
            window_len,
            embed_dim,
        })
    }

    /// Single linear layer with an explicit weight vector over the window
    /// entries; embedding weights are zero. Used to build guides whose input
    /// gradient is a known constant.
    pub fn linear(
        spec: &WindowSpec,
        embed_dim: usize,
        window_weights: &[f64],
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let window_len = spec.flat_len();
        if window_weights.len() != window_len {
            return Err(CoreError::Shape(format!(
                "need {} window weights, got {}",
                window_len,
                window_weights.len()
            )));
        }
        let mut p = Self::init(spec, embed_dim, &[], rng)?;
        let w = p.params.weight_mut(0).data_mut();
        w.fill(0.0);
        w[..window_len].copy_from_slice(window_weights);
        p.params.bias_mut(0).data_mut().fill(0.0);
        Ok(p)
    }

    pub fn from_params(params: MlpParams, window_len: usize) -> Result<Self> {
        let embed_dim = params.input_dim().checked_sub(window_len).ok_or_else(|| {
            CoreError::Shape("predictor input smaller than window".into())
        })?;
        if params.output_dim() != 1 {
            return Err(CoreError::Shape("predictor must output a scalar".into()));
        }
        Ok(ReturnPredictor {
            params,
            window_len,
            embed_dim,
        })
    }

    pub fn params(&self) -> &MlpParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut MlpParams {
        &mut self.params
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    fn check_window(&self, x: &NoisyTrajectory) -> Result<()> {
        if x.len() != self.window_len {
            return Err(CoreError::Shape(format!(
                "window has {} values, predictor expects {}",
                x.len(),
                self.window_len
            )));
        }
        Ok(())
    }

    /// Record the prediction on a tape; `x_node` holds the flattened window.
    pub fn predict_on(&self, g: &mut Graph, x_node: NodeId, i: usize) -> Result<NodeId> {
        let emb = g.constant(time_embed(i, self.embed_dim)?.into_data());
        let input = g.concat(&[x_node, emb]);
        self.params.forward_on(g, input)
    }

    /// Scalar return estimate for a noisy window at step `i`.
    pub fn predict(&self, x: &NoisyTrajectory, i: usize) -> Result<f64> {
        self.check_window(x)?;
        let mut input = x.values.clone();
        input.extend_from_slice(&time_embed(i, self.embed_dim)?.into_data());
        Ok(self.params.eval(&input)?[0])
    }

    /// Gradient of the prediction with respect to the window entries.
    pub fn input_gradient(&self, x: &NoisyTrajectory, i: usize) -> Result<Vec<f64>> {
        self.check_window(x)?;
        let mut g = Graph::new();
        let x_node = g.input(x.values.clone());
        let out = self.predict_on(&mut g, x_node, i)?;
        let grads = g.backward(out, &[1.0])?;
        let grad = grads
            .input(x_node)
            .map(|v| v.to_vec())
            .unwrap_or_else(|| alloc::vec![0.0; self.window_len]);
        for v in &grad {
            if !v.is_finite() {
                return Err(CoreError::Numeric("non-finite guidance gradient".into()));
            }
        }
        Ok(grad)
    }

    /// Squared error against the scaled ground-truth return of the window's
    /// start state.
    pub fn loss_v(&self, x: &NoisyTrajectory, i: usize, target: f64) -> Result<f64> {
        let y = self.predict(x, i)?;
        Ok((y - target) * (y - target))
    }

    /// Tape version of [`Self::loss_v`].
    pub fn loss_on(&self, g: &mut Graph, x_node: NodeId, i: usize, target: f64) -> Result<NodeId> {
        let y = self.predict_on(g, x_node, i)?;
        g.sum_sq_diff(y, &[target])
    }
}

/// Finite-difference helper shared by gradient tests: central differences of
/// `f` at `x` with step `h`.
pub fn central_difference<F: FnMut(&[f64]) -> f64>(x: &[f64], h: f64, mut f: F) -> Vec<f64> {
    let mut grad = alloc::vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for k in 0..x.len() {
        let orig = probe[k];
        probe[k] = orig + h;
        let hi = f(&probe);
        probe[k] = orig - h;
        let lo = f(&probe);
        probe[k] = orig;
        grad[k] = (hi - lo) / (2.0 * h);
    }
    grad
}
