//! Adam optimizer with bias correction.

use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::mlp::{MlpGrads, MlpParams};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(lr: f64) -> Self {
        AdamConfig {
            learning_rate: lr,
            ..Default::default()
        }
    }
}

/// First and second moment accumulators for one network, plus the step
/// counter used for bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    cfg: AdamConfig,
    m_weights: Vec<Vec<f64>>,
    v_weights: Vec<Vec<f64>>,
    m_biases: Vec<Vec<f64>>,
    v_biases: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(cfg: AdamConfig, params: &MlpParams) -> Self {
        let m_weights = (0..params.layer_count())
            .map(|l| alloc::vec![0.0; params.weight(l).len()])
            .collect::<Vec<_>>();
        let m_biases = (0..params.layer_count())
            .map(|l| alloc::vec![0.0; params.bias(l).len()])
            .collect::<Vec<_>>();
        AdamState {
            cfg,
            v_weights: m_weights.clone(),
            v_biases: m_biases.clone(),
            m_weights,
            m_biases,
            step: 0,
        }
    }

    pub fn config(&self) -> AdamConfig {
        self.cfg
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Raw accessors for checkpointing. Order: per layer, weight then bias.
    pub fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>], &[Vec<f64>], &[Vec<f64>]) {
        (&self.m_weights, &self.v_weights, &self.m_biases, &self.v_biases)
    }

    pub fn restore(
        cfg: AdamConfig,
        m_weights: Vec<Vec<f64>>,
        v_weights: Vec<Vec<f64>>,
        m_biases: Vec<Vec<f64>>,
        v_biases: Vec<Vec<f64>>,
        step: u64,
    ) -> Self {
        AdamState {
            cfg,
            m_weights,
            v_weights,
            m_biases,
            v_biases,
            step,
        }
    }
}

/// One Adam update. Moments decay even where the gradient is zero; the
/// parameters themselves only move where `grads` is nonzero.
pub fn adam_step(state: &mut AdamState, params: &mut MlpParams, grads: &MlpGrads) -> Result<()> {
    if grads.weights.len() != params.layer_count() || grads.biases.len() != params.layer_count() {
        return Err(CoreError::Shape("gradient layer count mismatch".into()));
    }
    for l in 0..params.layer_count() {
        if grads.weights[l].len() != params.weight(l).len()
            || grads.biases[l].len() != params.bias(l).len()
        {
            return Err(CoreError::Shape(alloc::format!(
                "gradient shape mismatch at layer {l}"
            )));
        }
        for g in grads.weights[l].iter().chain(grads.biases[l].iter()) {
            if !g.is_finite() {
                return Err(CoreError::Numeric(alloc::format!(
                    "non-finite gradient at layer {l}"
                )));
            }
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.cfg;
    let bias1 = 1.0 - libm::pow(beta1, t as f64);
    let bias2 = 1.0 - libm::pow(beta2, t as f64);

    for l in 0..params.layer_count() {
        update_block(
            params.weight_mut(l).data_mut(),
            &grads.weights[l],
            &mut state.m_weights[l],
            &mut state.v_weights[l],
            learning_rate,
            beta1,
            beta2,
            epsilon,
            bias1,
            bias2,
        );
        update_block(
            params.bias_mut(l).data_mut(),
            &grads.biases[l],
            &mut state.m_biases[l],
            &mut state.v_biases[l],
            learning_rate,
            beta1,
            beta2,
            epsilon,
            bias1,
            bias2,
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn update_block(
    p: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    bias1: f64,
    bias2: f64,
) {
    for i in 0..p.len() {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        let m_hat = m[i] / bias1;
        let v_hat = v[i] / bias2;
        p[i] -= lr * m_hat / (libm::sqrt(v_hat) + eps);
    }
}
