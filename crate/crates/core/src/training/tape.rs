//! Reverse-mode differentiation over tensor-level operations.
//!
//! Nodes are appended in evaluation order, so the tape is acyclic by
//! construction and a reverse sweep visits every consumer before its inputs.

use std::borrow::Cow;

use num_complex::Complex64;

use crate::error::{CssmError, Result};
use crate::s5_core::{ssm_backward, ssm_readout, ssm_states, DiscreteGrads, DiscreteS5, S5Params};
use crate::tensor::Tensor;
use crate::wavelet_conv::{
    correlate_same, correlate_same_grad_w, correlate_same_grad_x, layernorm_forward,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

/// Leaves of one state-space layer, in [`S5Params`] field order.
#[derive(Debug, Clone, Copy)]
pub struct SsmLeaves {
    pub lambda_re: NodeId,
    pub lambda_im: NodeId,
    pub b_re: NodeId,
    pub b_im: NodeId,
    pub c_re: NodeId,
    pub c_im: NodeId,
    pub d: NodeId,
    pub log_delta: NodeId,
}

impl SsmLeaves {
    fn ids(&self) -> [NodeId; 8] {
        [
            self.lambda_re,
            self.lambda_im,
            self.b_re,
            self.b_im,
            self.c_re,
            self.c_im,
            self.d,
            self.log_delta,
        ]
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    /// `[M x T]` signal correlated with `[F x K]` kernels -> `[M x F x T]`.
    Conv1d {
        x: NodeId,
        w: NodeId,
    },
    /// Per-row temporal normalization; parameters indexed by row mod `R`.
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        stats: Vec<(f64, f64)>,
    },
    /// Shared state-space layer over `S` slices of `[P x T]`.
    Ssm {
        x: NodeId,
        leaves: SsmLeaves,
        params: Box<S5Params>,
        sys: Box<DiscreteS5>,
        states: Vec<Vec<Complex64>>,
    },
    /// `[S x P x T]` -> `[S x H x T]` with `W: [H x P]`, `b: [H]`.
    PointwiseLinear {
        x: NodeId,
        w: NodeId,
        b: NodeId,
    },
    Gelu {
        x: NodeId,
    },
    /// `wa * a + wb * b`.
    Combine {
        a: NodeId,
        b: NodeId,
        wa: f64,
        wb: f64,
    },
    SwapLeading {
        x: NodeId,
    },
    /// `[.. x T]` -> `[..]`.
    MeanTime {
        x: NodeId,
    },
    Concat {
        parts: Vec<NodeId>,
    },
    /// `y = W x + b` on flat vectors, `W: [H x D]`.
    Dense {
        x: NodeId,
        w: NodeId,
        b: NodeId,
    },
    /// `[M x T]` -> `[M x F x T]`, `y[m,f,t] = scale[f] x[m,t] + shift[f]`.
    Lift {
        x: NodeId,
        scale: NodeId,
        shift: NodeId,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv1d { .. } => "conv1d",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Ssm { .. } => "ssm",
            Op::PointwiseLinear { .. } => "pointwise_linear",
            Op::Gelu { .. } => "gelu",
            Op::Combine { .. } => "combine",
            Op::SwapLeading { .. } => "swap_leading",
            Op::MeanTime { .. } => "mean_time",
            Op::Concat { .. } => "concat",
            Op::Dense { .. } => "dense",
            Op::Lift { .. } => "lift",
        }
    }
}

#[derive(Debug)]
struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Gradients of one backward sweep, indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// `None` when the node does not influence the seeded output.
    pub fn get(&self, id: NodeId) -> Option<&[f64]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, id: NodeId) -> Option<Vec<f64>> {
        self.grads.get_mut(id.0).and_then(|g| g.take())
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// GELU, tanh approximation.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let th = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// `y[s,h,t] = sum_p w[h,p] x[s,p,t] + b[h]`.
pub fn pointwise_linear(x: &[f64], s: usize, p: usize, t: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let h = b.len();
    debug_assert_eq!(x.len(), s * p * t);
    debug_assert_eq!(w.len(), h * p);
    let mut y = vec![0.0; s * h * t];
    for si in 0..s {
        let xs = &x[si * p * t..(si + 1) * p * t];
        for hi in 0..h {
            let yr = &mut y[(si * h + hi) * t..(si * h + hi + 1) * t];
            yr.fill(b[hi]);
            for pi in 0..p {
                let wv = w[hi * p + pi];
                if wv == 0.0 {
                    continue;
                }
                for (o, &xv) in yr.iter_mut().zip(&xs[pi * t..(pi + 1) * t]) {
                    *o += wv * xv;
                }
            }
        }
    }
    y
}

/// `y = W x + b`.
pub fn dense(x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let d = x.len();
    b.iter()
        .enumerate()
        .map(|(i, &bi)| {
            bi + w[i * d..(i + 1) * d]
                .iter()
                .zip(x)
                .map(|(a, c)| a * c)
                .sum::<f64>()
        })
        .collect()
}

/// Recording of one forward evaluation.
#[derive(Debug, Default)]
pub struct GradTape<'a> {
    nodes: Vec<Node<'a>>,
}

impl<'a> GradTape<'a> {
    pub fn new() -> Self {
        GradTape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, value: Cow<'a, Tensor>, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|&i| self.nodes[i.0].requires_grad)
    }

    /// Trainable leaf borrowing its value.
    pub fn param(&mut self, value: &'a Tensor) -> NodeId {
        self.push(Cow::Borrowed(value), Op::Leaf, true)
    }

    /// Constant leaf.
    pub fn constant(&mut self, value: Cow<'a, Tensor>) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf whose gradient is wanted but which is not a parameter.
    pub fn input(&mut self, value: Cow<'a, Tensor>) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    pub fn conv1d(&mut self, x: NodeId, w: NodeId) -> Result<NodeId> {
        let (xv, wv) = (self.value(x), self.value(w));
        if xv.shape().len() != 2 || wv.shape().len() != 2 {
            return Err(CssmError::dim(
                "conv1d expects [M x T] input and [F x K] kernels",
            ));
        }
        let (m, t) = (xv.dim(0), xv.dim(1));
        let (f, k) = (wv.dim(0), wv.dim(1));
        if k > t {
            return Err(CssmError::dim(format!(
                "kernel length {k} exceeds signal length {t}"
            )));
        }
        let mut out = vec![0.0; m * f * t];
        for mi in 0..m {
            correlate_same(
                &xv.data()[mi * t..(mi + 1) * t],
                wv.data(),
                f,
                k,
                &mut out[mi * f * t..(mi + 1) * f * t],
            );
        }
        let rg = self.rg(&[x, w]);
        Ok(self.push(
            Cow::Owned(Tensor::from_vec(&[m, f, t], out)),
            Op::Conv1d { x, w },
            rg,
        ))
    }

    pub fn layer_norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        eps: f64,
    ) -> Result<NodeId> {
        let xv = self.value(x);
        let t = *xv.shape().last().unwrap();
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        if g.len() != b.len() || (xv.len() / t) % g.len() != 0 {
            return Err(CssmError::dim(format!(
                "layer norm over {:?} with {} affine rows",
                xv.shape(),
                g.len()
            )));
        }
        let mut out = vec![0.0; xv.len()];
        let stats = layernorm_forward(xv.data(), t, g, b, eps, &mut out);
        let shape = xv.shape().to_vec();
        let rg = self.rg(&[x, gamma, beta]);
        Ok(self.push(
            Cow::Owned(Tensor::from_vec(&shape, out)),
            Op::LayerNorm {
                x,
                gamma,
                beta,
                stats,
            },
            rg,
        ))
    }

    /// `x` is `[S x P x T]`; the same layer is applied to each slice.
    pub fn ssm(&mut self, x: NodeId, leaves: SsmLeaves) -> Result<NodeId> {
        let xv = self.value(x);
        if xv.shape().len() != 3 {
            return Err(CssmError::dim("ssm expects [S x P x T]"));
        }
        let (s, p, t) = (xv.dim(0), xv.dim(1), xv.dim(2));
        let get = |id: NodeId| self.value(id).data().to_vec();
        let q = self.value(leaves.lambda_re).len();
        let params = S5Params {
            q,
            p,
            lambda_re: get(leaves.lambda_re),
            lambda_im: get(leaves.lambda_im),
            b_re: get(leaves.b_re),
            b_im: get(leaves.b_im),
            c_re: get(leaves.c_re),
            c_im: get(leaves.c_im),
            d: get(leaves.d),
            log_delta: get(leaves.log_delta),
        };
        if params.b_re.len() != q * p || params.c_re.len() != p * q || params.d.len() != p {
            return Err(CssmError::dim(format!(
                "state-space parameters do not fit Q = {q}, P = {p}"
            )));
        }
        let sys = params.discretize();
        let mut out = Vec::with_capacity(s * p * t);
        let mut states = Vec::with_capacity(s);
        for si in 0..s {
            let u = &xv.data()[si * p * t..(si + 1) * p * t];
            let h = ssm_states(&sys, u, t);
            out.extend(ssm_readout(&sys, &h, u, t));
            states.push(h);
        }
        let mut ids = leaves.ids().to_vec();
        ids.push(x);
        let rg = self.rg(&ids);
        Ok(self.push(
            Cow::Owned(Tensor::from_vec(&[s, p, t], out)),
            Op::Ssm {
                x,
                leaves,
                params: Box::new(params),
                sys: Box::new(sys),
                states,
            },
            rg,
        ))
    }

    pub fn pointwise_linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let xv = self.value(x);
        if xv.shape().len() != 3 {
            return Err(CssmError::dim("pointwise linear expects [S x P x T]"));
        }
        let (s, p, t) = (xv.dim(0), xv.dim(1), xv.dim(2));
        let (wv, bv) = (self.value(w), self.value(b));
        let h = bv.len();
        if wv.len() != h * p {
            return Err(CssmError::dim(format!(
                "pointwise weight {:?} for width {p}",
                wv.shape()
            )));
        }
        let y = pointwise_linear(xv.data(), s, p, t, wv.data(), bv.data());
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(
            Cow::Owned(Tensor::from_vec(&[s, h, t], y)),
            Op::PointwiseLinear { x, w, b },
            rg,
        ))
    }

    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let y: Vec<f64> = xv.data().iter().map(|&v| gelu(v)).collect();
        let shape = xv.shape().to_vec();
        let rg = self.rg(&[x]);
        self.push(Cow::Owned(Tensor::from_vec(&shape, y)), Op::Gelu { x }, rg)
    }

    pub fn combine(&mut self, a: NodeId, wa: f64, b: NodeId, wb: f64) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(CssmError::dim(format!(
                "add {:?} and {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let y: Vec<f64> = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(x, y)| wa * x + wb * y)
            .collect();
        let shape = av.shape().to_vec();
        let rg = self.rg(&[a, b]);
        Ok(self.push(
            Cow::Owned(Tensor::from_vec(&shape, y)),
            Op::Combine { a, b, wa, wb },
            rg,
        ))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.combine(a, 1.0, b, 1.0)
    }

    pub fn swap_leading(&mut self, x: NodeId) -> NodeId {
        let y = self.value(x).swap_leading();
        let rg = self.rg(&[x]);
        self.push(Cow::Owned(y), Op::SwapLeading { x }, rg)
    }

    pub fn mean_time(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let t = *xv.shape().last().unwrap();
        let y: Vec<f64> = xv
            .data()
            .chunks_exact(t)
            .map(|r| r.iter().sum::<f64>() / t as f64)
            .collect();
        let shape = xv.shape()[..xv.shape().len() - 1].to_vec();
        let rg = self.rg(&[x]);
        self.push(
            Cow::Owned(Tensor::from_vec(&shape, y)),
            Op::MeanTime { x },
            rg,
        )
    }

    /// Flattens and concatenates.
    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let mut y = Vec::new();
        for &p in parts {
            y.extend_from_slice(self.value(p).data());
        }
        let n = y.len();
        let rg = self.rg(parts);
        self.push(
            Cow::Owned(Tensor::from_vec(&[n], y)),
            Op::Concat {
                parts: parts.to_vec(),
            },
            rg,
        )
    }

    pub fn dense(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if wv.len() != bv.len() * xv.len() {
            return Err(CssmError::dim(format!(
                "dense weight {:?} for input {} and output {}",
                wv.shape(),
                xv.len(),
                bv.len()
            )));
        }
        let y = dense(xv.data(), wv.data(), bv.data());
        let n = y.len();
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(
            Cow::Owned(Tensor::from_vec(&[n], y)),
            Op::Dense { x, w, b },
            rg,
        ))
    }

    pub fn lift(&mut self, x: NodeId, scale: NodeId, shift: NodeId) -> Result<NodeId> {
        let (xv, sv, hv) = (self.value(x), self.value(scale), self.value(shift));
        if xv.shape().len() != 2 || sv.len() != hv.len() {
            return Err(CssmError::dim(
                "lift expects [M x T] input and matching scale/shift",
            ));
        }
        let (m, t, f) = (xv.dim(0), xv.dim(1), sv.len());
        let mut y = Vec::with_capacity(m * f * t);
        for mi in 0..m {
            let row = &xv.data()[mi * t..(mi + 1) * t];
            for fi in 0..f {
                let (a, c) = (sv.data()[fi], hv.data()[fi]);
                y.extend(row.iter().map(|&v| a * v + c));
            }
        }
        let rg = self.rg(&[x, scale, shift]);
        Ok(self.push(
            Cow::Owned(Tensor::from_vec(&[m, f, t], y)),
            Op::Lift { x, scale, shift },
            rg,
        ))
    }

    /// Reverse sweep from `output` seeded with `seed` (same shape as the output).
    pub fn backward(&self, output: NodeId, seed: &[f64]) -> Result<Gradients> {
        let out_node = &self.nodes[output.0];
        if !out_node.requires_grad {
            return Err(CssmError::Gradient {
                op: out_node.op.name(),
                message: "output does not depend on any differentiable leaf".into(),
            });
        }
        if seed.len() != out_node.value.len() {
            return Err(CssmError::dim(format!(
                "seed of length {} for output of length {}",
                seed.len(),
                out_node.value.len()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(seed.to_vec());
        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !g.iter().all(|v| v.is_finite()) {
                return Err(CssmError::Gradient {
                    op: node.op.name(),
                    message: format!("non-finite gradient reached node {idx}"),
                });
            }
            self.backprop_node(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(
        &self,
        node: &Node<'a>,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) -> Result<()> {
        let nodes = &self.nodes;
        // accumulates into the gradient slot of `id` if it needs one
        let mut acc = |id: NodeId, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[id.0].requires_grad {
                return;
            }
            let slot = grads[id.0].get_or_insert_with(|| vec![0.0; nodes[id.0].value.len()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::Conv1d { x, w } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (m, t) = (xv.dim(0), xv.dim(1));
                let (f, k) = (wv.dim(0), wv.dim(1));
                acc(*w, &mut |gw| {
                    for mi in 0..m {
                        correlate_same_grad_w(
                            &xv.data()[mi * t..(mi + 1) * t],
                            &g[mi * f * t..(mi + 1) * f * t],
                            f,
                            k,
                            gw,
                        );
                    }
                });
                acc(*x, &mut |gx| {
                    for mi in 0..m {
                        correlate_same_grad_x(
                            &g[mi * f * t..(mi + 1) * f * t],
                            wv.data(),
                            f,
                            k,
                            &mut gx[mi * t..(mi + 1) * t],
                        );
                    }
                });
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                stats,
            } => {
                let xv = self.value(*x);
                let t = *xv.shape().last().unwrap();
                let gam = self.value(*gamma).data();
                let r_len = gam.len();
                let xhat: Vec<f64> = xv
                    .data()
                    .chunks_exact(t)
                    .zip(stats)
                    .flat_map(|(row, &(mu, inv))| row.iter().map(move |v| (v - mu) * inv))
                    .collect();
                acc(*gamma, &mut |gg| {
                    for (i, (gr, xr)) in g.chunks_exact(t).zip(xhat.chunks_exact(t)).enumerate() {
                        gg[i % r_len] += gr.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>();
                    }
                });
                acc(*beta, &mut |gb| {
                    for (i, gr) in g.chunks_exact(t).enumerate() {
                        gb[i % r_len] += gr.iter().sum::<f64>();
                    }
                });
                acc(*x, &mut |gx| {
                    let n = t as f64;
                    for (i, ((gr, xr), gxr)) in g
                        .chunks_exact(t)
                        .zip(xhat.chunks_exact(t))
                        .zip(gx.chunks_exact_mut(t))
                        .enumerate()
                    {
                        let (_, inv) = stats[i];
                        let gm = gam[i % r_len];
                        let s1: f64 = gr.iter().sum::<f64>() * gm;
                        let s2: f64 = gr.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>() * gm;
                        for ((o, &gv), &xh) in gxr.iter_mut().zip(gr).zip(xr) {
                            *o += inv / n * (n * gm * gv - s1 - xh * s2);
                        }
                    }
                });
            }
            Op::Ssm {
                x,
                leaves,
                params,
                sys,
                states,
            } => {
                let xv = self.value(*x);
                let (s, p, t) = (xv.dim(0), xv.dim(1), xv.dim(2));
                let mut dg = DiscreteGrads::zeros(params.q, p);
                let mut gu_all = Vec::with_capacity(s * p * t);
                for si in 0..s {
                    let u = &xv.data()[si * p * t..(si + 1) * p * t];
                    let gy = &g[si * p * t..(si + 1) * p * t];
                    gu_all.extend(ssm_backward(sys, u, &states[si], gy, t, &mut dg));
                }
                acc(*x, &mut |gx| {
                    for (o, v) in gx.iter_mut().zip(&gu_all) {
                        *o += v;
                    }
                });
                let pg = params.backprop_discretization(&dg);
                let pairs: [(NodeId, &Vec<f64>); 8] = [
                    (leaves.lambda_re, &pg.lambda_re),
                    (leaves.lambda_im, &pg.lambda_im),
                    (leaves.b_re, &pg.b_re),
                    (leaves.b_im, &pg.b_im),
                    (leaves.c_re, &pg.c_re),
                    (leaves.c_im, &pg.c_im),
                    (leaves.d, &pg.d),
                    (leaves.log_delta, &pg.log_delta),
                ];
                for (id, v) in pairs {
                    acc(id, &mut |gp| {
                        for (o, a) in gp.iter_mut().zip(v) {
                            *o += a;
                        }
                    });
                }
            }
            Op::PointwiseLinear { x, w, b } => {
                let xv = self.value(*x);
                let (s, p, t) = (xv.dim(0), xv.dim(1), xv.dim(2));
                let wv = self.value(*w).data();
                let h = self.value(*b).len();
                acc(*w, &mut |gw| {
                    for si in 0..s {
                        for hi in 0..h {
                            let gr = &g[(si * h + hi) * t..(si * h + hi + 1) * t];
                            for pi in 0..p {
                                let xr = &xv.data()[(si * p + pi) * t..(si * p + pi + 1) * t];
                                gw[hi * p + pi] +=
                                    gr.iter().zip(xr).map(|(a, c)| a * c).sum::<f64>();
                            }
                        }
                    }
                });
                acc(*b, &mut |gb| {
                    for si in 0..s {
                        for hi in 0..h {
                            gb[hi] += g[(si * h + hi) * t..(si * h + hi + 1) * t]
                                .iter()
                                .sum::<f64>();
                        }
                    }
                });
                acc(*x, &mut |gx| {
                    for si in 0..s {
                        for hi in 0..h {
                            let gr = &g[(si * h + hi) * t..(si * h + hi + 1) * t];
                            for pi in 0..p {
                                let wv = wv[hi * p + pi];
                                let xr = &mut gx[(si * p + pi) * t..(si * p + pi + 1) * t];
                                for (o, &gv) in xr.iter_mut().zip(gr) {
                                    *o += wv * gv;
                                }
                            }
                        }
                    }
                });
            }
            Op::Gelu { x } => {
                let xv = self.value(*x).data();
                acc(*x, &mut |gx| {
                    for ((o, &gv), &v) in gx.iter_mut().zip(g).zip(xv) {
                        *o += gv * gelu_grad(v);
                    }
                });
            }
            Op::Combine { a, b, wa, wb } => {
                acc(*a, &mut |ga| {
                    for (o, &gv) in ga.iter_mut().zip(g) {
                        *o += wa * gv;
                    }
                });
                acc(*b, &mut |gb| {
                    for (o, &gv) in gb.iter_mut().zip(g) {
                        *o += wb * gv;
                    }
                });
            }
            Op::SwapLeading { x } => {
                let sh = node.value.shape();
                let gt = Tensor::from_vec(sh, g.to_vec()).swap_leading();
                acc(*x, &mut |gx| {
                    for (o, v) in gx.iter_mut().zip(gt.data()) {
                        *o += v;
                    }
                });
            }
            Op::MeanTime { x } => {
                let t = *self.value(*x).shape().last().unwrap();
                let inv = 1.0 / t as f64;
                acc(*x, &mut |gx| {
                    for (row, &gv) in gx.chunks_exact_mut(t).zip(g) {
                        for o in row {
                            *o += gv * inv;
                        }
                    }
                });
            }
            Op::Concat { parts } => {
                let mut off = 0;
                for &pid in parts {
                    let n = self.value(pid).len();
                    let gs = &g[off..off + n];
                    acc(pid, &mut |gp| {
                        for (o, v) in gp.iter_mut().zip(gs) {
                            *o += v;
                        }
                    });
                    off += n;
                }
            }
            Op::Dense { x, w, b } => {
                let xv = self.value(*x).data();
                let wv = self.value(*w).data();
                let d = xv.len();
                acc(*w, &mut |gw| {
                    for (i, &gv) in g.iter().enumerate() {
                        if gv == 0.0 {
                            continue;
                        }
                        for (o, &xj) in gw[i * d..(i + 1) * d].iter_mut().zip(xv) {
                            *o += gv * xj;
                        }
                    }
                });
                acc(*b, &mut |gb| {
                    for (o, v) in gb.iter_mut().zip(g) {
                        *o += v;
                    }
                });
                acc(*x, &mut |gx| {
                    for (i, &gv) in g.iter().enumerate() {
                        if gv == 0.0 {
                            continue;
                        }
                        for (o, &wij) in gx.iter_mut().zip(&wv[i * d..(i + 1) * d]) {
                            *o += gv * wij;
                        }
                    }
                });
            }
            Op::Lift { x, scale, shift } => {
                let xv = self.value(*x);
                let (m, t) = (xv.dim(0), xv.dim(1));
                let sv = self.value(*scale).data();
                let f = sv.len();
                acc(*scale, &mut |gs| {
                    for mi in 0..m {
                        let row = &xv.data()[mi * t..(mi + 1) * t];
                        for (fi, o) in gs.iter_mut().enumerate() {
                            let gr = &g[(mi * f + fi) * t..(mi * f + fi + 1) * t];
                            *o += gr.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                });
                acc(*shift, &mut |gh| {
                    for mi in 0..m {
                        for (fi, o) in gh.iter_mut().enumerate() {
                            *o += g[(mi * f + fi) * t..(mi * f + fi + 1) * t]
                                .iter()
                                .sum::<f64>();
                        }
                    }
                });
                acc(*x, &mut |gx| {
                    for mi in 0..m {
                        for fi in 0..f {
                            let gr = &g[(mi * f + fi) * t..(mi * f + fi + 1) * t];
                            for (o, &gv) in gx[mi * t..(mi + 1) * t].iter_mut().zip(gr) {
                                *o += sv[fi] * gv;
                            }
                        }
                    }
                });
            }
        }
        Ok(())
    }
}
