//! The full model recorded on a gradient tape.

use std::borrow::Cow;

use super::blocks::softmax;
use super::config::ModelConfig;
use super::params::{BlockIds, ModelParams};
use crate::error::{CssmError, Result};
use crate::signal_io::SignalTensor;
use crate::tensor::Tensor;
use crate::training::tape::{GradTape, NodeId, SsmLeaves};
use crate::wavelet_conv::{FrontEnd, BRANCH_WEIGHTS};

/// One recording converted to model inputs; the spectral map is constant
/// with respect to the parameters, so it is computed once and reused.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedInput {
    /// `[M x T]`
    pub signal: Tensor,
    /// `[M x F x T]` deterministic spectral features.
    pub spectral: Option<Tensor>,
}

/// Tape nodes of interest after a forward recording.
#[derive(Debug, Clone)]
pub struct ForwardNodes {
    /// Leaf of every parameter, indexed like the parameter store.
    pub params: Vec<NodeId>,
    /// `X~`, `[M x F x T]`.
    pub x_tilde: NodeId,
    /// Frequency-branch output `U^(L)` as `[M x F x T]`.
    pub u_last: Option<NodeId>,
    /// Channel-branch output `V^(L)`, `[M x F x T]`.
    pub v_last: Option<NodeId>,
    /// Pre-softmax scores `[N]`.
    pub logits: NodeId,
}

/// Architecture plus the deterministic parts of the front-end.
#[derive(Debug, Clone)]
pub struct SsmClassifier {
    pub cfg: ModelConfig,
    pub front_end: Option<FrontEnd>,
}

impl SsmClassifier {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let front_end = if cfg.enable_wavelet_conv {
            Some(FrontEnd::new(&cfg.front_end, cfg.n_freqs, cfg.fs)?)
        } else {
            None
        };
        Ok(SsmClassifier {
            cfg: cfg.clone(),
            front_end,
        })
    }

    /// Row frequencies in Hz.
    pub fn freqs(&self) -> Vec<f64> {
        crate::wavelet_conv::frequency_grid(
            self.cfg.n_freqs,
            self.cfg.front_end.f_min,
            self.cfg.front_end.f_max,
        )
    }

    pub fn check_input(&self, x: &SignalTensor) -> Result<()> {
        let c = &self.cfg;
        if x.n_electrodes() != c.n_electrodes || x.n_times() != c.n_times {
            return Err(CssmError::Config(format!(
                "input is {} x {} but the model expects {} x {}",
                x.n_electrodes(),
                x.n_times(),
                c.n_electrodes,
                c.n_times
            )));
        }
        if (x.fs - c.fs).abs() > 1e-9 * c.fs {
            return Err(CssmError::Config(format!(
                "input sampled at {} Hz but the model expects {} Hz",
                x.fs, c.fs
            )));
        }
        Ok(())
    }

    pub fn prepare(&self, x: &SignalTensor) -> Result<PreparedInput> {
        self.check_input(x)?;
        let spectral = self
            .front_end
            .as_ref()
            .and_then(|fe| fe.spectral.as_ref())
            .map(|s| s.features(x));
        Ok(PreparedInput {
            signal: Tensor::from_vec(&[x.n_electrodes(), x.n_times()], x.data().to_vec()),
            spectral,
        })
    }

    /// Records the forward pass of one recording.
    pub fn record<'a>(
        &self,
        tape: &mut GradTape<'a>,
        params: &'a ModelParams,
        input: &'a PreparedInput,
    ) -> Result<ForwardNodes> {
        let cfg = &self.cfg;
        let eps = cfg.ln_eps;
        let lay = &params.layout;
        let pn: Vec<NodeId> = params
            .store
            .tensors()
            .iter()
            .map(|t| tape.param(t))
            .collect();
        let node = |id: super::params::ParamId| pn[id.0];
        let signal = tape.constant(Cow::Borrowed(&input.signal));

        let x_tilde = if let Some((scale, shift)) = lay.lift {
            tape.lift(signal, node(scale), node(shift))?
        } else {
            let mut e_out = None;
            if let (Some(feats), Some((g, b))) = (&input.spectral, lay.ln_e) {
                let e = tape.constant(Cow::Borrowed(feats));
                e_out = Some(tape.layer_norm(e, node(g), node(b), eps)?);
            }
            let mut a_out = None;
            if let (Some(w), Some((g, b))) = (lay.conv, lay.ln_a) {
                let a = tape.conv1d(signal, node(w))?;
                a_out = Some(tape.layer_norm(a, node(g), node(b), eps)?);
            }
            match (e_out, a_out) {
                (Some(e), Some(a)) => tape.combine(e, BRANCH_WEIGHTS[0], a, BRANCH_WEIGHTS[1])?,
                (Some(e), None) => e,
                (None, Some(a)) => a,
                (None, None) => {
                    return Err(CssmError::config(
                        "front-end produced no features; check the E-Branch inputs",
                    ))
                }
            }
        };

        let block = |tape: &mut GradTape<'a>, x: NodeId, ids: &BlockIds| -> Result<NodeId> {
            let xn = tape.layer_norm(x, node(ids.ln_gamma), node(ids.ln_beta), eps)?;
            let s = ids.ssm;
            let y = tape.ssm(
                xn,
                SsmLeaves {
                    lambda_re: node(s[0]),
                    lambda_im: node(s[1]),
                    b_re: node(s[2]),
                    b_im: node(s[3]),
                    c_re: node(s[4]),
                    c_im: node(s[5]),
                    d: node(s[6]),
                    log_delta: node(s[7]),
                },
            )?;
            let h = tape.pointwise_linear(y, node(ids.w1), node(ids.b1))?;
            let h = tape.gelu(h);
            let o = tape.pointwise_linear(h, node(ids.w2), node(ids.b2))?;
            tape.add(o, xn)
        };

        let mut pooled = Vec::new();
        let mut u_last = None;
        if !lay.freq_blocks.is_empty() {
            let mut u = tape.swap_leading(x_tilde);
            for ids in &lay.freq_blocks {
                u = block(tape, u, ids)?;
            }
            let u = tape.swap_leading(u);
            pooled.push(tape.mean_time(u));
            u_last = Some(u);
        }
        let mut v_last = None;
        if !lay.chan_blocks.is_empty() {
            let mut v = x_tilde;
            for ids in &lay.chan_blocks {
                v = block(tape, v, ids)?;
            }
            pooled.push(tape.mean_time(v));
            v_last = Some(v);
        }
        let mut z = tape.concat(&pooled);
        let n_head = lay.head.len();
        for (i, &(w, b)) in lay.head.iter().enumerate() {
            z = tape.dense(z, node(w), node(b))?;
            if i + 1 < n_head {
                z = tape.gelu(z);
            }
        }
        Ok(ForwardNodes {
            params: pn,
            x_tilde,
            u_last,
            v_last,
            logits: z,
        })
    }

    pub fn logits(&self, params: &ModelParams, input: &PreparedInput) -> Result<Vec<f64>> {
        let mut tape = GradTape::new();
        let nodes = self.record(&mut tape, params, input)?;
        Ok(tape.value(nodes.logits).data().to_vec())
    }

    pub fn predict_proba(&self, params: &ModelParams, input: &PreparedInput) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(params, input)?))
    }
}

/// Class probabilities for one recording.
pub fn model_forward(
    cfg: &ModelConfig,
    params: &ModelParams,
    x: &SignalTensor,
) -> Result<Vec<f64>> {
    let model = SsmClassifier::new(cfg)?;
    params.check_shapes(cfg)?;
    let input = model.prepare(x)?;
    model.predict_proba(params, &input)
}
