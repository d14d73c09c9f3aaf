//! Forward (noising) and backward (denoising) diffusion over trajectory
//! windows, with optional return-gradient guidance and observation
//! conditioning.

use alloc::format;
use alloc::vec::Vec;

use crate::dataset::WindowSpec;
use crate::error::{CoreError, Result};
use crate::graph::{Graph, NodeId};
use crate::guide::ReturnPredictor;
use crate::mlp::{time_embed, MlpParams};
use crate::rng::SeededRng;
use crate::schedule::DiffusionSchedule;

/// A flattened trajectory window tagged with its diffusion step.
/// Step 0 means clean data.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyTrajectory {
    pub values: Vec<f64>,
    pub step: usize,
}

impl NoisyTrajectory {
    pub fn clean(values: Vec<f64>) -> Self {
        NoisyTrajectory { values, step: 0 }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Closed-form noising to step `i`:
/// `x_i = sqrt(alpha_bar_i) * x_0 + sqrt(1 - alpha_bar_i) * noise`.
pub fn forward_sample(
    x0: &NoisyTrajectory,
    i: usize,
    noise: &[f64],
    schedule: &DiffusionSchedule,
) -> Result<NoisyTrajectory> {
    if x0.step != 0 {
        return Err(CoreError::Config(format!(
            "forward_sample needs clean input, got step {}",
            x0.step
        )));
    }
    if noise.len() != x0.len() {
        return Err(CoreError::Shape(format!(
            "noise has {} values, window {}",
            noise.len(),
            x0.len()
        )));
    }
    let (signal, spread) = schedule.marginal_coeffs(i)?;
    let values = x0
        .values
        .iter()
        .zip(noise)
        .map(|(x, e)| signal * x + spread * e)
        .collect();
    Ok(NoisyTrajectory { values, step: i })
}

fn embed_for(net: &MlpParams, window_len: usize, i: usize) -> Result<Vec<f64>> {
    let embed_dim = net.input_dim().checked_sub(window_len).ok_or_else(|| {
        CoreError::Shape(format!(
            "network input {} smaller than window {}",
            net.input_dim(),
            window_len
        ))
    })?;
    Ok(time_embed(i, embed_dim)?.into_data())
}

/// Estimate the clean window from a noisy one. The denoiser sees the
/// flattened window concatenated with the sinusoidal embedding of `i`.
pub fn reconstruct(denoiser: &MlpParams, x_i: &NoisyTrajectory, i: usize) -> Result<NoisyTrajectory> {
    if i == 0 {
        return Err(CoreError::Index { index: 0, limit: 0 });
    }
    if denoiser.output_dim() != x_i.len() {
        return Err(CoreError::Shape(format!(
            "denoiser outputs {}, window has {}",
            denoiser.output_dim(),
            x_i.len()
        )));
    }
    let mut input = x_i.values.clone();
    input.extend_from_slice(&embed_for(denoiser, x_i.len(), i)?);
    let values = denoiser.eval(&input)?;
    Ok(NoisyTrajectory { values, step: 0 })
}

/// Record the denoiser's reconstruction on a gradient tape. Returns the
/// output node; `x_node` must hold the flattened window.
pub fn reconstruct_on(
    g: &mut Graph,
    denoiser: &MlpParams,
    x_node: NodeId,
    i: usize,
) -> Result<NodeId> {
    let window_len = g.len(x_node);
    let emb = g.constant(embed_for(denoiser, window_len, i)?);
    let input = g.concat(&[x_node, emb]);
    denoiser.forward_on(g, input)
}

/// Mean of `p(x_{i-1} | x_i, x_hat_0)` under the fixed-variance posterior.
pub fn posterior_mean(
    x_i: &NoisyTrajectory,
    x_hat0: &NoisyTrajectory,
    schedule: &DiffusionSchedule,
    i: usize,
) -> Result<Vec<f64>> {
    if x_hat0.len() != x_i.len() {
        return Err(CoreError::Shape(format!(
            "clean estimate has {} values, window {}",
            x_hat0.len(),
            x_i.len()
        )));
    }
    let (c_current, c_clean) = schedule.posterior_coeffs(i)?;
    Ok(x_i
        .values
        .iter()
        .zip(&x_hat0.values)
        .map(|(x, x0)| c_current * x + c_clean * x0)
        .collect())
}

/// Optional return-gradient guidance for the backward step.
pub struct Guide<'a> {
    pub predictor: &'a ReturnPredictor,
    pub scale: f64,
}

/// One backward step: reconstruct, form the posterior mean, shift it by
/// `scale * grad J(x_i, i)` when guided, then add `sqrt(beta_i)` noise.
/// The final step (`i == 1`) adds no noise.
pub fn denoise_step(
    x_i: &NoisyTrajectory,
    i: usize,
    denoiser: &MlpParams,
    guide: Option<&Guide<'_>>,
    schedule: &DiffusionSchedule,
    rng: &mut SeededRng,
) -> Result<NoisyTrajectory> {
    let x_hat0 = reconstruct(denoiser, x_i, i)?;
    let mut values = posterior_mean(x_i, &x_hat0, schedule, i)?;

    if let Some(guide) = guide {
        if guide.scale != 0.0 {
            let grad = guide.predictor.input_gradient(x_i, i)?;
            for (v, g) in values.iter_mut().zip(&grad) {
                *v += guide.scale * g;
            }
        }
    }

    if i > 1 {
        let sigma = libm::sqrt(schedule.beta(i));
        for v in values.iter_mut() {
            *v += sigma * rng.normal();
        }
    }
    for v in &values {
        if !v.is_finite() {
            return Err(CoreError::Numeric("non-finite value in denoise step".into()));
        }
    }
    Ok(NoisyTrajectory { values, step: i - 1 })
}

/// Overwrite the window's first state slot with the observation. All other
/// entries pass through untouched; applying twice is a no-op.
pub fn apply_condition(
    x: &NoisyTrajectory,
    observation: &[f64],
    spec: &WindowSpec,
) -> Result<NoisyTrajectory> {
    if observation.len() != spec.state_dim {
        return Err(CoreError::Shape(format!(
            "observation has {} dims, state has {}",
            observation.len(),
            spec.state_dim
        )));
    }
    if x.len() != spec.flat_len() {
        return Err(CoreError::Shape(format!(
            "window has {} values, spec expects {}",
            x.len(),
            spec.flat_len()
        )));
    }
    let mut values = x.values.clone();
    values[spec.state_range(0)].copy_from_slice(observation);
    Ok(NoisyTrajectory {
        values,
        step: x.step,
    })
}
