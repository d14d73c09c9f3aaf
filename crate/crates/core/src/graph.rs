//! Reverse-mode gradient tape over vector-valued nodes.
//!
//! The tape records exactly the op vocabulary needed by this crate: linear
//! layers with ReLU/Sigmoid activations, concat/slice plumbing, squared-error
//! reductions, cosine similarity, temperature log-sum-exp, and weighted sums
//! of scalars. Nodes only reference earlier nodes, so creation order is a
//! topological order and one reverse sweep computes every gradient.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::tensor::{dot, norm};

/// Identifies one parameter tensor of one model block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamRef {
    pub block: u16,
    pub layer: u16,
    pub kind: ParamKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(u32);

impl NodeId {
    fn index(self) -> usize {
        self.0 as usize
    }
}

enum Op {
    /// Untracked constant (targets, pool states).
    Const,
    /// Tracked leaf; its gradient is retrievable after backward.
    Input,
    /// Tracked parameter leaf.
    Param(ParamRef),
    /// y = W x + b with W row-major `rows x cols`.
    Linear {
        w: NodeId,
        b: NodeId,
        x: NodeId,
        rows: usize,
        cols: usize,
    },
    Relu(NodeId),
    Sigmoid(NodeId),
    Concat(Vec<NodeId>),
    Slice {
        x: NodeId,
        start: usize,
        len: usize,
    },
    /// Scalar sum of squared differences against a constant target.
    SumSqDiff {
        x: NodeId,
        target: Vec<f64>,
    },
    /// Scalar cosine similarity between two vectors.
    Cosine {
        a: NodeId,
        b: NodeId,
    },
    /// Scalar log Σ_k exp(x_k / temperature) over scalar nodes.
    LogSumExp {
        xs: Vec<NodeId>,
        temperature: f64,
    },
    /// Scalar Σ_k coeff_k · x_k over scalar nodes.
    AffineSum {
        terms: Vec<(f64, NodeId)>,
    },
}

struct Node {
    value: Vec<f64>,
    op: Op,
}

/// Gradients collected from one backward sweep.
pub struct Gradients {
    params: Vec<(ParamRef, Vec<f64>)>,
    inputs: Vec<(NodeId, Vec<f64>)>,
}

impl Gradients {
    pub fn param(&self, r: ParamRef) -> Option<&[f64]> {
        self.params
            .iter()
            .find(|(p, _)| *p == r)
            .map(|(_, g)| g.as_slice())
    }

    pub fn input(&self, id: NodeId) -> Option<&[f64]> {
        self.inputs
            .iter()
            .find(|(n, _)| *n == id)
            .map(|(_, g)| g.as_slice())
    }

    pub fn params(&self) -> &[(ParamRef, Vec<f64>)] {
        &self.params
    }
}

/// The recording tape. One backward pass per graph; `backward` consumes it.
pub struct Graph {
    nodes: Vec<Node>,
    registered: Vec<(ParamRef, NodeId)>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            registered: Vec::new(),
        }
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node { value, op });
        id
    }

    pub fn constant(&mut self, value: Vec<f64>) -> NodeId {
        self.push(value, Op::Const)
    }

    pub fn input(&mut self, value: Vec<f64>) -> NodeId {
        self.push(value, Op::Input)
    }

    /// Register a parameter leaf. Repeated registration of the same
    /// `ParamRef` returns the existing node so gradients accumulate once.
    pub fn param(&mut self, r: ParamRef, value: &[f64]) -> NodeId {
        if let Some((_, id)) = self.registered.iter().find(|(p, _)| *p == r) {
            return *id;
        }
        let id = self.push(value.to_vec(), Op::Param(r));
        self.registered.push((r, id));
        id
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.index()].value
    }

    pub fn scalar_value(&self, id: NodeId) -> f64 {
        self.nodes[id.index()].value[0]
    }

    pub fn len(&self, id: NodeId) -> usize {
        self.nodes[id.index()].value.len()
    }

    pub fn linear(&mut self, w: NodeId, b: NodeId, x: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        if self.len(w) != rows * cols || self.len(b) != rows || self.len(x) != cols {
            return Err(CoreError::Shape(format!(
                "linear {}x{}: |W|={} |b|={} |x|={}",
                rows,
                cols,
                self.len(w),
                self.len(b),
                self.len(x)
            )));
        }
        let mut y = self.nodes[b.index()].value.clone();
        {
            let wv = &self.nodes[w.index()].value;
            let xv = &self.nodes[x.index()].value;
            for r in 0..rows {
                y[r] += dot(&wv[r * cols..(r + 1) * cols], xv);
            }
        }
        Ok(self.push(y, Op::Linear { w, b, x, rows, cols }))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let y: Vec<f64> = self.nodes[x.index()]
            .value
            .iter()
            .map(|v| if *v > 0.0 { *v } else { 0.0 })
            .collect();
        self.push(y, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let y: Vec<f64> = self.nodes[x.index()]
            .value
            .iter()
            .map(|v| 1.0 / (1.0 + libm::exp(-*v)))
            .collect();
        self.push(y, Op::Sigmoid(x))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let mut y = Vec::new();
        for p in parts {
            y.extend_from_slice(&self.nodes[p.index()].value);
        }
        self.push(y, Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        if start + len > self.len(x) {
            return Err(CoreError::Shape(format!(
                "slice {}..{} of node with {} values",
                start,
                start + len,
                self.len(x)
            )));
        }
        let y = self.nodes[x.index()].value[start..start + len].to_vec();
        Ok(self.push(y, Op::Slice { x, start, len }))
    }

    /// Σ_i (x_i - target_i)^2 as a scalar node.
    pub fn sum_sq_diff(&mut self, x: NodeId, target: &[f64]) -> Result<NodeId> {
        if self.len(x) != target.len() {
            return Err(CoreError::Shape(format!(
                "sum_sq_diff: node has {} values, target {}",
                self.len(x),
                target.len()
            )));
        }
        let v: f64 = self.nodes[x.index()]
            .value
            .iter()
            .zip(target)
            .map(|(a, t)| (a - t) * (a - t))
            .sum();
        Ok(self.push(
            vec![v],
            Op::SumSqDiff {
                x,
                target: target.to_vec(),
            },
        ))
    }

    /// Cosine similarity; errors when either norm is below `1e-12`.
    pub fn cosine(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.len(a) != self.len(b) {
            return Err(CoreError::Shape(format!(
                "cosine: lengths {} vs {}",
                self.len(a),
                self.len(b)
            )));
        }
        let na = norm(&self.nodes[a.index()].value);
        let nb = norm(&self.nodes[b.index()].value);
        if na < 1e-12 || nb < 1e-12 {
            return Err(CoreError::Numeric(format!(
                "cosine similarity of near-zero vector (norms {na:.3e}, {nb:.3e})"
            )));
        }
        let s = dot(&self.nodes[a.index()].value, &self.nodes[b.index()].value) / (na * nb);
        Ok(self.push(vec![s], Op::Cosine { a, b }))
    }

    /// log Σ_k exp(x_k / temperature) over scalar nodes, max-shifted for
    /// stability.
    pub fn log_sum_exp(&mut self, xs: &[NodeId], temperature: f64) -> Result<NodeId> {
        if xs.is_empty() {
            return Err(CoreError::Config("log_sum_exp over empty set".into()));
        }
        if temperature <= 0.0 {
            return Err(CoreError::Config(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        let vals: Vec<f64> = xs.iter().map(|id| self.scalar_value(*id)).collect();
        let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = vals.iter().map(|v| libm::exp((v - m) / temperature)).sum();
        let v = m / temperature + libm::log(sum);
        Ok(self.push(
            vec![v],
            Op::LogSumExp {
                xs: xs.to_vec(),
                temperature,
            },
        ))
    }

    /// Σ_k coeff_k · x_k over scalar nodes.
    pub fn affine_sum(&mut self, terms: &[(f64, NodeId)]) -> NodeId {
        let v: f64 = terms.iter().map(|(c, id)| c * self.scalar_value(*id)).sum();
        self.push(vec![v], Op::AffineSum { terms: terms.to_vec() })
    }

    /// Reverse sweep from `root`, seeded with `seed` (dL/droot). Consumes the
    /// graph, enforcing one backward pass per forward recording.
    pub fn backward(self, root: NodeId, seed: &[f64]) -> Result<Gradients> {
        if seed.len() != self.len(root) {
            return Err(CoreError::Shape(format!(
                "backward seed has {} values, root {}",
                seed.len(),
                self.len(root)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.index()] = Some(seed.to_vec());

        for i in (0..self.nodes.len()).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[i];
            match &node.op {
                Op::Const | Op::Input | Op::Param(_) => {
                    grads[i] = Some(g); // leaves keep their gradient
                }
                Op::Linear { w, b, x, rows, cols } => {
                    let xv = self.nodes[x.index()].value.clone();
                    let wv = self.nodes[w.index()].value.clone();
                    {
                        let gw = slot(&mut grads, *w, rows * cols);
                        for r in 0..*rows {
                            for c in 0..*cols {
                                gw[r * cols + c] += g[r] * xv[c];
                            }
                        }
                    }
                    {
                        let gb = slot(&mut grads, *b, *rows);
                        for r in 0..*rows {
                            gb[r] += g[r];
                        }
                    }
                    {
                        let gx = slot(&mut grads, *x, *cols);
                        for r in 0..*rows {
                            for c in 0..*cols {
                                gx[c] += wv[r * cols + c] * g[r];
                            }
                        }
                    }
                }
                Op::Relu(x) => {
                    let xv = self.nodes[x.index()].value.clone();
                    let gx = slot(&mut grads, *x, xv.len());
                    for (k, xk) in xv.iter().enumerate() {
                        if *xk > 0.0 {
                            gx[k] += g[k];
                        }
                    }
                }
                Op::Sigmoid(x) => {
                    let yv = node.value.clone();
                    let gx = slot(&mut grads, *x, yv.len());
                    for (k, yk) in yv.iter().enumerate() {
                        gx[k] += g[k] * yk * (1.0 - yk);
                    }
                }
                Op::Concat(parts) => {
                    let parts = parts.clone();
                    let mut off = 0;
                    for p in parts {
                        let len = self.nodes[p.index()].value.len();
                        let gp = slot(&mut grads, p, len);
                        for k in 0..len {
                            gp[k] += g[off + k];
                        }
                        off += len;
                    }
                }
                Op::Slice { x, start, len } => {
                    let (x, start, len) = (*x, *start, *len);
                    let full = self.nodes[x.index()].value.len();
                    let gx = slot(&mut grads, x, full);
                    for k in 0..len {
                        gx[start + k] += g[k];
                    }
                }
                Op::SumSqDiff { x, target } => {
                    let xv = self.nodes[x.index()].value.clone();
                    let target = target.clone();
                    let gx = slot(&mut grads, *x, xv.len());
                    for k in 0..xv.len() {
                        gx[k] += 2.0 * (xv[k] - target[k]) * g[0];
                    }
                }
                Op::Cosine { a, b } => {
                    let av = self.nodes[a.index()].value.clone();
                    let bv = self.nodes[b.index()].value.clone();
                    let na = norm(&av);
                    let nb = norm(&bv);
                    let s = node.value[0];
                    {
                        let ga = slot(&mut grads, *a, av.len());
                        for k in 0..av.len() {
                            ga[k] += g[0] * (bv[k] / (na * nb) - s * av[k] / (na * na));
                        }
                    }
                    {
                        let gb = slot(&mut grads, *b, bv.len());
                        for k in 0..bv.len() {
                            gb[k] += g[0] * (av[k] / (na * nb) - s * bv[k] / (nb * nb));
                        }
                    }
                }
                Op::LogSumExp { xs, temperature } => {
                    let xs = xs.clone();
                    let t = *temperature;
                    let vals: Vec<f64> = xs.iter().map(|id| self.nodes[id.index()].value[0]).collect();
                    let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let denom: f64 = vals.iter().map(|v| libm::exp((v - m) / t)).sum();
                    for (k, id) in xs.iter().enumerate() {
                        let soft = libm::exp((vals[k] - m) / t) / denom;
                        let gx = slot(&mut grads, *id, 1);
                        gx[0] += g[0] * soft / t;
                    }
                }
                Op::AffineSum { terms } => {
                    let terms = terms.clone();
                    for (c, id) in terms {
                        let gx = slot(&mut grads, id, 1);
                        gx[0] += c * g[0];
                    }
                }
            }
        }

        let mut params = Vec::new();
        let mut inputs = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            match node.op {
                Op::Param(r) => {
                    let g = grads[i].take().unwrap_or_else(|| vec![0.0; node.value.len()]);
                    params.push((r, g));
                }
                Op::Input => {
                    let g = grads[i].take().unwrap_or_else(|| vec![0.0; node.value.len()]);
                    inputs.push((NodeId(i as u32), g));
                }
                _ => {}
            }
        }
        Ok(Gradients { params, inputs })
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], id: NodeId, len: usize) -> &mut Vec<f64> {
    let entry = &mut grads[id.index()];
    if entry.is_none() {
        *entry = Some(vec![0.0; len]);
    }
    entry.as_mut().unwrap()
}
