//! Dense MLPs: parameters, forward/backward through the gradient tape, and
//! the sinusoidal diffusion-step embedding.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::graph::{Gradients, Graph, NodeId, ParamKind, ParamRef};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// Output-layer activation; hidden layers are always ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Sigmoid,
}

/// Weights and biases of a fixed-architecture MLP.
///
/// `block` tags every parameter so gradients from a multi-network tape can be
/// routed back to their owner; the tag doubles as the checkpoint block id.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    block: u16,
    sizes: Vec<usize>,
    weights: Vec<Tensor>,
    biases: Vec<Tensor>,
    output_activation: Activation,
}

impl MlpParams {
    /// Initialize with weights uniform in `[-1/sqrt(fan_in), +1/sqrt(fan_in)]`
    /// and zero biases, drawn from the given stream.
    pub fn init(
        block: u16,
        sizes: &[usize],
        output_activation: Activation,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(CoreError::Config(format!(
                "MLP needs at least input and output sizes, got {sizes:?}"
            )));
        }
        if sizes.iter().any(|s| *s == 0) {
            return Err(CoreError::Config(format!("zero layer size in {sizes:?}")));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for win in sizes.windows(2) {
            let (fan_in, fan_out) = (win[0], win[1]);
            let bound = 1.0 / libm::sqrt(fan_in as f64);
            let data: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.uniform_in(-bound, bound))
                .collect();
            weights.push(Tensor::new(alloc::vec![fan_out, fan_in], data)?);
            biases.push(Tensor::zeros(alloc::vec![fan_out]));
        }
        Ok(MlpParams {
            block,
            sizes: sizes.to_vec(),
            weights,
            biases,
            output_activation,
        })
    }

    /// Build from explicit tensors (used by checkpoint loading and tests).
    pub fn from_tensors(
        block: u16,
        sizes: Vec<usize>,
        weights: Vec<Tensor>,
        biases: Vec<Tensor>,
        output_activation: Activation,
    ) -> Result<Self> {
        if sizes.len() < 2 || weights.len() != sizes.len() - 1 || biases.len() != weights.len() {
            return Err(CoreError::Config("inconsistent layer list".into()));
        }
        for (i, win) in sizes.windows(2).enumerate() {
            if weights[i].shape() != [win[1], win[0]] || biases[i].shape() != [win[1]] {
                return Err(CoreError::Shape(format!(
                    "layer {i}: weight {:?} bias {:?} vs sizes {win:?}",
                    weights[i].shape(),
                    biases[i].shape()
                )));
            }
        }
        Ok(MlpParams {
            block,
            sizes,
            weights,
            biases,
            output_activation,
        })
    }

    pub fn block(&self) -> u16 {
        self.block
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weight(&self, layer: usize) -> &Tensor {
        &self.weights[layer]
    }

    pub fn bias(&self, layer: usize) -> &Tensor {
        &self.biases[layer]
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut Tensor {
        &mut self.weights[layer]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut Tensor {
        &mut self.biases[layer]
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Tensor::len).sum::<usize>()
            + self.biases.iter().map(Tensor::len).sum::<usize>()
    }

    fn param_ref(&self, layer: usize, kind: ParamKind) -> ParamRef {
        ParamRef {
            block: self.block,
            layer: layer as u16,
            kind,
        }
    }

    /// Record this network's forward pass on an existing graph.
    pub fn forward_on(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        if g.len(x) != self.input_dim() {
            return Err(CoreError::Shape(format!(
                "input has {} values, first layer expects {}",
                g.len(x),
                self.input_dim()
            )));
        }
        let mut h = x;
        for layer in 0..self.layer_count() {
            let w = g.param(self.param_ref(layer, ParamKind::Weight), self.weights[layer].data());
            let b = g.param(self.param_ref(layer, ParamKind::Bias), self.biases[layer].data());
            let rows = self.sizes[layer + 1];
            let cols = self.sizes[layer];
            h = g.linear(w, b, h, rows, cols)?;
            let last = layer + 1 == self.layer_count();
            h = if !last {
                g.relu(h)
            } else {
                match self.output_activation {
                    Activation::Linear => h,
                    Activation::Sigmoid => g.sigmoid(h),
                }
            };
        }
        Ok(h)
    }

    /// Plain forward evaluation without recording a tape.
    pub fn eval(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(CoreError::Shape(format!(
                "input has {} values, first layer expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        let mut h = input.to_vec();
        for layer in 0..self.layer_count() {
            let rows = self.sizes[layer + 1];
            let cols = self.sizes[layer];
            let w = self.weights[layer].data();
            let b = self.biases[layer].data();
            let mut y = b.to_vec();
            for r in 0..rows {
                y[r] += crate::tensor::dot(&w[r * cols..(r + 1) * cols], &h);
            }
            let last = layer + 1 == self.layer_count();
            if !last {
                for v in &mut y {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            } else if self.output_activation == Activation::Sigmoid {
                for v in &mut y {
                    *v = 1.0 / (1.0 + libm::exp(-*v));
                }
            }
            h = y;
        }
        Ok(h)
    }
}

/// Gradients of one network, aligned with its layer list.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGrads {
    /// Extract this block's gradients from a multi-network sweep. Parameters
    /// the loss never touched come back as zeros.
    pub fn from_gradients(params: &MlpParams, grads: &Gradients) -> Self {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for layer in 0..params.layer_count() {
            let wr = params.param_ref(layer, ParamKind::Weight);
            let br = params.param_ref(layer, ParamKind::Bias);
            weights.push(
                grads
                    .param(wr)
                    .map(|g| g.to_vec())
                    .unwrap_or_else(|| alloc::vec![0.0; params.weight(layer).len()]),
            );
            biases.push(
                grads
                    .param(br)
                    .map(|g| g.to_vec())
                    .unwrap_or_else(|| alloc::vec![0.0; params.bias(layer).len()]),
            );
        }
        MlpGrads { weights, biases }
    }

    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .flat_map(|v| v.iter())
            .fold(0.0f64, |m, g| m.max(g.abs()))
    }
}

/// Replayable record of one forward pass through a single MLP.
pub struct GradTape {
    graph: Graph,
    input: NodeId,
    output: NodeId,
}

/// Run `params` on `input`, returning the output and a tape for gradients.
pub fn mlp_forward(params: &MlpParams, input: &Tensor) -> Result<(Tensor, GradTape)> {
    let mut graph = Graph::new();
    let x = graph.input(input.data().to_vec());
    let y = params.forward_on(&mut graph, x)?;
    let out = Tensor::from_vec(graph.value(y).to_vec());
    Ok((
        out,
        GradTape {
            graph,
            input: x,
            output: y,
        },
    ))
}

/// Backward pass for a tape made by [`mlp_forward`]. Consumes the tape, so a
/// second pass over the same forward is a compile-time error.
pub fn mlp_backward(
    params: &MlpParams,
    tape: GradTape,
    output_grad: &Tensor,
) -> Result<(MlpGrads, Tensor)> {
    let grads = tape.graph.backward(tape.output, output_grad.data())?;
    let input_grad = grads
        .input(tape.input)
        .map(|g| Tensor::from_vec(g.to_vec()))
        .unwrap_or_else(|| Tensor::zeros(alloc::vec![params.input_dim()]));
    Ok((MlpGrads::from_gradients(params, &grads), input_grad))
}

/// Sinusoidal embedding of a diffusion-step index.
///
/// Layout is `[sin(step * f_0) .. sin(step * f_{h-1}), cos(..)]` with
/// `f_j = 10000^(-j/h)` and `h = dim/2`.
pub fn time_embed(step: usize, dim: usize) -> Result<Tensor> {
    if dim == 0 || dim % 2 != 0 {
        return Err(CoreError::Config(format!(
            "embedding size must be even and positive, got {dim}"
        )));
    }
    let half = dim / 2;
    let mut out = alloc::vec![0.0; dim];
    for j in 0..half {
        let freq = libm::exp(-libm::log(10000.0) * j as f64 / half as f64);
        let phase = step as f64 * freq;
        out[j] = libm::sin(phase);
        out[half + j] = libm::cos(phase);
    }
    Tensor::new(alloc::vec![dim], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn zero_weights_zero_bias_give_zero_output() {
        let sizes = [3, 4, 2];
        let mut rng = SeededRng::from_seed(0);
        let mut params = MlpParams::init(0, &sizes, Activation::Linear, &mut rng).unwrap();
        for l in 0..params.layer_count() {
            params.weight_mut(l).data_mut().fill(0.0);
            params.bias_mut(l).data_mut().fill(0.0);
        }
        let (y, _) = mlp_forward(&params, &Tensor::from_vec(vec![1.0, -2.0, 3.0])).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0]);
    }

    #[test]
    fn identity_single_layer_passes_input_through() {
        let weights = vec![Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap()];
        let biases = vec![Tensor::zeros(vec![2])];
        let params =
            MlpParams::from_tensors(0, vec![2, 2], weights, biases, Activation::Linear).unwrap();
        let (y, _) = mlp_forward(&params, &Tensor::from_vec(vec![1.0, 2.0])).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);
    }

    #[test]
    fn hand_set_relu_net_matches_manual_forward() {
        // 2 -> 2 -> 1, W1 = [[1, 2], [-1, 1]], b1 = [0.5, 0], W2 = [[2, 3]], b2 = [-1]
        // input [1, -1]: pre1 = [1-2+0.5, -1-1] = [-0.5, -2] -> relu [0, 0]
        // out = 2*0 + 3*0 - 1 = -1
        let weights = vec![
            Tensor::new(vec![2, 2], vec![1.0, 2.0, -1.0, 1.0]).unwrap(),
            Tensor::new(vec![1, 2], vec![2.0, 3.0]).unwrap(),
        ];
        let biases = vec![
            Tensor::from_vec(vec![0.5, 0.0]),
            Tensor::from_vec(vec![-1.0]),
        ];
        let params =
            MlpParams::from_tensors(0, vec![2, 2, 1], weights, biases, Activation::Linear).unwrap();
        let (y, _) = mlp_forward(&params, &Tensor::from_vec(vec![1.0, -1.0])).unwrap();
        assert!((y.data()[0] - (-1.0)).abs() < 1e-15);
    }

    #[test]
    fn linear_layer_backward_is_adjoint() {
        // y = W x, output_grad g -> input_grad = W^T g
        let weights = vec![Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap()];
        let biases = vec![Tensor::zeros(vec![2])];
        let params =
            MlpParams::from_tensors(0, vec![2, 2], weights, biases, Activation::Linear).unwrap();
        let (_, tape) = mlp_forward(&params, &Tensor::from_vec(vec![1.0, 1.0])).unwrap();
        let (_, gx) = mlp_backward(&params, tape, &Tensor::from_vec(vec![1.0, 2.0])).unwrap();
        assert_eq!(gx.data(), &[7.0, 10.0]); // W^T [1,2]
    }

    #[test]
    fn zero_output_grad_zeroes_everything() {
        let mut rng = SeededRng::from_seed(5);
        let params = MlpParams::init(0, &[3, 5, 2], Activation::Linear, &mut rng).unwrap();
        let (_, tape) = mlp_forward(&params, &Tensor::from_vec(vec![0.3, -0.2, 0.9])).unwrap();
        let (grads, gx) = mlp_backward(&params, tape, &Tensor::from_vec(vec![0.0, 0.0])).unwrap();
        assert_eq!(grads.max_abs(), 0.0);
        assert!(gx.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn eval_matches_taped_forward() {
        let mut rng = SeededRng::from_seed(11);
        let params = MlpParams::init(0, &[4, 6, 3], Activation::Sigmoid, &mut rng).unwrap();
        let input = Tensor::from_vec(vec![0.1, -0.4, 0.7, 0.2]);
        let (y, _) = mlp_forward(&params, &input).unwrap();
        let z = params.eval(input.data()).unwrap();
        assert_eq!(y.data(), z.as_slice());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut rng = SeededRng::from_seed(1);
        let params = MlpParams::init(0, &[3, 2], Activation::Linear, &mut rng).unwrap();
        let err = match mlp_forward(&params, &Tensor::from_vec(vec![1.0, 2.0])) {
            Err(e) => e,
            Ok(_) => panic!("expected shape error"),
        };
        assert!(matches!(err, CoreError::Shape(_)));
    }

    #[test]
    fn time_embed_step_zero_is_sin_zero_cos_one() {
        let e = time_embed(0, 8).unwrap();
        for j in 0..4 {
            assert_eq!(e.data()[j], 0.0);
            assert_eq!(e.data()[4 + j], 1.0);
        }
    }

    #[test]
    fn time_embed_bounded_and_matches_direct_formula() {
        for step in [1usize, 5, 17, 300] {
            let e = time_embed(step, 4).unwrap();
            for v in e.data() {
                assert!((-1.0..=1.0).contains(v));
            }
            // direct evaluation, dim 4 -> half 2, f_j = 10000^(-j/2)
            for j in 0..2 {
                let freq = libm::exp(-libm::log(10000.0) * j as f64 / 2.0);
                assert!((e.data()[j] - libm::sin(step as f64 * freq)).abs() < 1e-15);
                assert!((e.data()[2 + j] - libm::cos(step as f64 * freq)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn time_embed_rejects_odd_dim() {
        assert!(time_embed(3, 5).is_err());
    }
}
