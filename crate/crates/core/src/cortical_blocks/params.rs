use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use crate::error::{CssmError, Result};
use crate::rng::{seeded, stream::INIT, Rng};
use crate::s5_core::{init_s5_params_with, S5Params};
use crate::tensor::Tensor;
use crate::wavelet_conv::{
    conv_kernel_len, ABranch, ConvBranchParams, EBranch, TemporalLayerNormParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Ordered, named collection of every trainable tensor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn require(&self, name: &str) -> Result<ParamId> {
        self.find(name)
            .ok_or_else(|| CssmError::config(format!("parameter `{name}` missing")))
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Parameters whose name starts with `prefix`.
    pub fn n_scalars_with_prefix(&self, prefix: &str) -> usize {
        self.names
            .iter()
            .zip(&self.tensors)
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(_, t)| t.len())
            .sum()
    }

    /// Same names, every tensor zero.
    pub fn zeros_like(&self) -> ParamStore {
        ParamStore {
            names: self.names.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.shape()))
                .collect(),
        }
    }
}

/// Parameter ids of one residual SSM block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockIds {
    pub ln_gamma: ParamId,
    pub ln_beta: ParamId,
    /// `lambda_re, lambda_im, b_re, b_im, c_re, c_im, d, log_delta`.
    pub ssm: [ParamId; 8],
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelLayout {
    pub conv: Option<ParamId>,
    pub ln_e: Option<(ParamId, ParamId)>,
    pub ln_a: Option<(ParamId, ParamId)>,
    /// Ablation replacement of the front-end: per-row scale and shift.
    pub lift: Option<(ParamId, ParamId)>,
    pub freq_blocks: Vec<BlockIds>,
    pub chan_blocks: Vec<BlockIds>,
    /// Dense layers of the head, `(weight, bias)`.
    pub head: Vec<(ParamId, ParamId)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub store: ParamStore,
    pub layout: ModelLayout,
}

const SSM_FIELDS: [&str; 8] = [
    "lambda_re",
    "lambda_im",
    "b_re",
    "b_im",
    "c_re",
    "c_im",
    "d",
    "log_delta",
];

/// Two affine maps with a GELU between them.
#[derive(Debug, Clone, PartialEq)]
pub struct FfnParams {
    /// `[H x P]`
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `[P x H]`
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub ln: TemporalLayerNormParams,
    pub ssm: S5Params,
    pub ffn: FfnParams,
}

impl BlockParams {
    /// Width of the block's variable axis.
    pub fn width(&self) -> usize {
        self.ssm.p
    }
}

/// Dense layers of the head, input first.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

fn uniform_tensor(rng: &mut Rng, shape: &[usize], bound: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(
        shape,
        (0..n).map(|_| rng.gen_range(-bound..bound)).collect(),
    )
}

fn block_names(prefix: &str) -> Vec<String> {
    let mut v = vec![format!("{prefix}.ln.gamma"), format!("{prefix}.ln.beta")];
    v.extend(SSM_FIELDS.iter().map(|f| format!("{prefix}.ssm.{f}")));
    v.extend(
        ["w1", "b1", "w2", "b2"]
            .iter()
            .map(|f| format!("{prefix}.ffn.{f}")),
    );
    v
}

fn push_block(
    store: &mut ParamStore,
    prefix: &str,
    p: usize,
    cfg: &ModelConfig,
    rng: &mut Rng,
) -> Result<BlockIds> {
    let h = cfg.ffn_expansion * p;
    let ln_gamma = store.push(format!("{prefix}.ln.gamma"), Tensor::full(&[p], 1.0));
    let ln_beta = store.push(format!("{prefix}.ln.beta"), Tensor::zeros(&[p]));
    let s = init_s5_params_with(cfg.state_dim, p, rng)?;
    let (q, pp) = (s.q, s.p);
    let fields: [(Vec<usize>, Vec<f64>); 8] = [
        (vec![q], s.lambda_re),
        (vec![q], s.lambda_im),
        (vec![q, pp], s.b_re),
        (vec![q, pp], s.b_im),
        (vec![pp, q], s.c_re),
        (vec![pp, q], s.c_im),
        (vec![pp], s.d),
        (vec![q], s.log_delta),
    ];
    let mut ssm = [ParamId(0); 8];
    for (k, (shape, data)) in fields.into_iter().enumerate() {
        ssm[k] = store.push(
            format!("{prefix}.ssm.{}", SSM_FIELDS[k]),
            Tensor::from_vec(&shape, data),
        );
    }
    let w1 = store.push(
        format!("{prefix}.ffn.w1"),
        uniform_tensor(rng, &[h, p], (p as f64).sqrt().recip()),
    );
    let b1 = store.push(format!("{prefix}.ffn.b1"), Tensor::zeros(&[h]));
    let w2 = store.push(
        format!("{prefix}.ffn.w2"),
        uniform_tensor(rng, &[p, h], (h as f64).sqrt().recip()),
    );
    let b2 = store.push(format!("{prefix}.ffn.b2"), Tensor::zeros(&[p]));
    Ok(BlockIds {
        ln_gamma,
        ln_beta,
        ssm,
        w1,
        b1,
        w2,
        b2,
    })
}

fn find_block(store: &ParamStore, prefix: &str) -> Result<BlockIds> {
    let ids: Vec<ParamId> = block_names(prefix)
        .iter()
        .map(|n| store.require(n))
        .collect::<Result<_>>()?;
    let mut ssm = [ParamId(0); 8];
    ssm.copy_from_slice(&ids[2..10]);
    Ok(BlockIds {
        ln_gamma: ids[0],
        ln_beta: ids[1],
        ssm,
        w1: ids[10],
        b1: ids[11],
        w2: ids[12],
        b2: ids[13],
    })
}

fn head_widths(cfg: &ModelConfig) -> Vec<usize> {
    let mut w = vec![cfg.head_input()];
    if cfg.head_hidden > 0 {
        w.push(cfg.head_hidden);
    }
    w.push(cfg.n_classes);
    w
}

/// Standard deviation of the ablation lift's per-row scale around 1.
pub const LIFT_SCALE_STD: f64 = 0.1;

impl ModelParams {
    /// Seeded initialization; the draw order is fixed by the layout order.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = seeded(seed, INIT);
        let mut store = ParamStore::new();
        let (m, f) = (cfg.n_electrodes, cfg.n_freqs);
        let fe = &cfg.front_end;
        let mut layout = ModelLayout {
            conv: None,
            ln_e: None,
            ln_a: None,
            lift: None,
            freq_blocks: Vec::new(),
            chan_blocks: Vec::new(),
            head: Vec::new(),
        };
        if cfg.enable_wavelet_conv {
            if fe.e_branch != EBranch::None {
                layout.ln_e = Some((
                    store.push("front_end.ln_e.gamma", Tensor::full(&[f], 1.0)),
                    store.push("front_end.ln_e.beta", Tensor::zeros(&[f])),
                ));
            }
            if fe.a_branch == ABranch::Conv1d {
                let k = conv_kernel_len(cfg.fs);
                layout.conv = Some(store.push(
                    "front_end.conv.kernels",
                    uniform_tensor(&mut rng, &[f, k], (k as f64).sqrt().recip()),
                ));
                layout.ln_a = Some((
                    store.push("front_end.ln_a.gamma", Tensor::full(&[f], 1.0)),
                    store.push("front_end.ln_a.beta", Tensor::zeros(&[f])),
                ));
            }
        } else {
            let normal = Normal::new(1.0, LIFT_SCALE_STD).expect("valid normal");
            let scale: Vec<f64> = (0..f).map(|_| normal.sample(&mut rng)).collect();
            layout.lift = Some((
                store.push("lift.scale", Tensor::from_vec(&[f], scale)),
                store.push("lift.shift", Tensor::zeros(&[f])),
            ));
        }
        if cfg.enable_frequency_ssm {
            for l in 0..cfg.n_blocks {
                layout.freq_blocks.push(push_block(
                    &mut store,
                    &format!("freq.{l}"),
                    m,
                    cfg,
                    &mut rng,
                )?);
            }
        }
        if cfg.enable_channel_ssm {
            for l in 0..cfg.n_blocks {
                layout.chan_blocks.push(push_block(
                    &mut store,
                    &format!("chan.{l}"),
                    f,
                    cfg,
                    &mut rng,
                )?);
            }
        }
        let widths = head_widths(cfg);
        for (i, win) in widths.windows(2).enumerate() {
            let w = store.push(
                format!("head.{i}.w"),
                uniform_tensor(&mut rng, &[win[1], win[0]], (win[0] as f64).sqrt().recip()),
            );
            let b = store.push(format!("head.{i}.b"), Tensor::zeros(&[win[1]]));
            layout.head.push((w, b));
        }
        let out = ModelParams { store, layout };
        out.check_shapes(cfg)?;
        Ok(out)
    }

    /// Rebuilds the layout of a stored parameter set and checks every shape.
    pub fn from_store(cfg: &ModelConfig, store: ParamStore) -> Result<Self> {
        cfg.validate()?;
        let fe = &cfg.front_end;
        let pair = |a: &str, b: &str| -> Result<(ParamId, ParamId)> {
            Ok((store.require(a)?, store.require(b)?))
        };
        let mut layout = ModelLayout {
            conv: None,
            ln_e: None,
            ln_a: None,
            lift: None,
            freq_blocks: Vec::new(),
            chan_blocks: Vec::new(),
            head: Vec::new(),
        };
        if cfg.enable_wavelet_conv {
            if fe.e_branch != EBranch::None {
                layout.ln_e = Some(pair("front_end.ln_e.gamma", "front_end.ln_e.beta")?);
            }
            if fe.a_branch == ABranch::Conv1d {
                layout.conv = Some(store.require("front_end.conv.kernels")?);
                layout.ln_a = Some(pair("front_end.ln_a.gamma", "front_end.ln_a.beta")?);
            }
        } else {
            layout.lift = Some(pair("lift.scale", "lift.shift")?);
        }
        if cfg.enable_frequency_ssm {
            for l in 0..cfg.n_blocks {
                layout
                    .freq_blocks
                    .push(find_block(&store, &format!("freq.{l}"))?);
            }
        }
        if cfg.enable_channel_ssm {
            for l in 0..cfg.n_blocks {
                layout
                    .chan_blocks
                    .push(find_block(&store, &format!("chan.{l}"))?);
            }
        }
        for i in 0..head_widths(cfg).len() - 1 {
            layout
                .head
                .push(pair(&format!("head.{i}.w"), &format!("head.{i}.b"))?);
        }
        let out = ModelParams { store, layout };
        out.check_shapes(cfg)?;
        Ok(out)
    }

    /// Compares every tensor against the shapes a fresh init would produce.
    pub fn check_shapes(&self, cfg: &ModelConfig) -> Result<()> {
        let expect = expected_shapes(cfg);
        let mut diffs = Vec::new();
        for (name, shape) in &expect {
            match self.store.find(name) {
                None => diffs.push(format!("{name}: missing (expected {shape:?})")),
                Some(id) if self.store.get(id).shape() != shape.as_slice() => diffs.push(format!(
                    "{name}: found {:?}, expected {shape:?}",
                    self.store.get(id).shape()
                )),
                _ => {}
            }
        }
        for name in self.store.names() {
            if !expect.iter().any(|(n, _)| n == name) {
                diffs.push(format!("{name}: not part of this architecture"));
            }
        }
        if diffs.is_empty() {
            Ok(())
        } else {
            Err(CssmError::dim(format!(
                "parameters do not match config: {}",
                diffs.join("; ")
            )))
        }
    }

    pub fn block(&self, ids: &BlockIds, eps: f64) -> BlockParams {
        let s = &self.store;
        let v = |id: ParamId| s.get(id).data().to_vec();
        let p = s.get(ids.ln_gamma).len();
        let q = s.get(ids.ssm[0]).len();
        BlockParams {
            ln: TemporalLayerNormParams {
                gamma: v(ids.ln_gamma),
                beta: v(ids.ln_beta),
                eps,
            },
            ssm: S5Params {
                q,
                p,
                lambda_re: v(ids.ssm[0]),
                lambda_im: v(ids.ssm[1]),
                b_re: v(ids.ssm[2]),
                b_im: v(ids.ssm[3]),
                c_re: v(ids.ssm[4]),
                c_im: v(ids.ssm[5]),
                d: v(ids.ssm[6]),
                log_delta: v(ids.ssm[7]),
            },
            ffn: FfnParams {
                w1: v(ids.w1),
                b1: v(ids.b1),
                w2: v(ids.w2),
                b2: v(ids.b2),
            },
        }
    }

    pub fn head(&self) -> HeadParams {
        HeadParams {
            layers: self
                .layout
                .head
                .iter()
                .map(|&(w, b)| {
                    (
                        self.store.get(w).data().to_vec(),
                        self.store.get(b).data().to_vec(),
                    )
                })
                .collect(),
        }
    }

    pub fn conv(&self) -> Option<ConvBranchParams> {
        self.layout.conv.map(|id| {
            let t = self.store.get(id);
            ConvBranchParams::new(t.data().to_vec(), t.dim(0), t.dim(1)).expect("shape checked")
        })
    }

    pub fn layer_norm(
        &self,
        ids: Option<(ParamId, ParamId)>,
        eps: f64,
    ) -> Option<TemporalLayerNormParams> {
        ids.map(|(g, b)| TemporalLayerNormParams {
            gamma: self.store.get(g).data().to_vec(),
            beta: self.store.get(b).data().to_vec(),
            eps,
        })
    }

    /// Keeps every state-space layer stable after an update.
    pub fn project(&mut self) {
        let blocks: Vec<BlockIds> = self
            .layout
            .freq_blocks
            .iter()
            .chain(&self.layout.chan_blocks)
            .copied()
            .collect();
        for b in blocks {
            let mut s = S5Params {
                q: 0,
                p: 0,
                lambda_re: self.store.get(b.ssm[0]).data().to_vec(),
                lambda_im: Vec::new(),
                b_re: Vec::new(),
                b_im: Vec::new(),
                c_re: Vec::new(),
                c_im: Vec::new(),
                d: Vec::new(),
                log_delta: self.store.get(b.ssm[7]).data().to_vec(),
            };
            s.project();
            self.store
                .get_mut(b.ssm[0])
                .data_mut()
                .copy_from_slice(&s.lambda_re);
            self.store
                .get_mut(b.ssm[7])
                .data_mut()
                .copy_from_slice(&s.log_delta);
        }
    }

    /// Rounds every parameter to the nearest `f32`.
    pub fn quantize_f32(&mut self) {
        for t in self.store.tensors_mut() {
            for v in t.data_mut() {
                *v = *v as f32 as f64;
            }
        }
    }
}

/// Names and shapes of every parameter of `cfg`, in layout order.
pub fn expected_shapes(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let (m, f, q) = (cfg.n_electrodes, cfg.n_freqs, cfg.state_dim);
    let fe = &cfg.front_end;
    let mut out: Vec<(String, Vec<usize>)> = Vec::new();
    if cfg.enable_wavelet_conv {
        if fe.e_branch != EBranch::None {
            out.push(("front_end.ln_e.gamma".into(), vec![f]));
            out.push(("front_end.ln_e.beta".into(), vec![f]));
        }
        if fe.a_branch == ABranch::Conv1d {
            out.push((
                "front_end.conv.kernels".into(),
                vec![f, conv_kernel_len(cfg.fs)],
            ));
            out.push(("front_end.ln_a.gamma".into(), vec![f]));
            out.push(("front_end.ln_a.beta".into(), vec![f]));
        }
    } else {
        out.push(("lift.scale".into(), vec![f]));
        out.push(("lift.shift".into(), vec![f]));
    }
    let mut blocks = |prefix: &str, p: usize| {
        let h = cfg.ffn_expansion * p;
        let shapes = [
            vec![p],
            vec![p],
            vec![q],
            vec![q],
            vec![q, p],
            vec![q, p],
            vec![p, q],
            vec![p, q],
            vec![p],
            vec![q],
            vec![h, p],
            vec![h],
            vec![p, h],
            vec![p],
        ];
        for (n, s) in block_names(prefix).into_iter().zip(shapes) {
            out.push((n, s));
        }
    };
    if cfg.enable_frequency_ssm {
        for l in 0..cfg.n_blocks {
            blocks(&format!("freq.{l}"), m);
        }
    }
    if cfg.enable_channel_ssm {
        for l in 0..cfg.n_blocks {
            blocks(&format!("chan.{l}"), f);
        }
    }
    let widths = head_widths(cfg);
    for (i, win) in widths.windows(2).enumerate() {
        out.push((format!("head.{i}.w"), vec![win[1], win[0]]));
        out.push((format!("head.{i}.b"), vec![win[1]]));
    }
    out
}

/// Trainable scalar counts by component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct ParameterCount {
    pub front_end: usize,
    pub frequency_blocks: usize,
    pub channel_blocks: usize,
    pub head: usize,
    pub total: usize,
}

/// Exact count of trainable scalars; complex entries count twice because
/// they are stored as separate real and imaginary tensors.
pub fn count_parameters(params: &ModelParams) -> ParameterCount {
    let s = &params.store;
    let front_end = s.n_scalars_with_prefix("front_end.") + s.n_scalars_with_prefix("lift.");
    let frequency_blocks = s.n_scalars_with_prefix("freq.");
    let channel_blocks = s.n_scalars_with_prefix("chan.");
    let head = s.n_scalars_with_prefix("head.");
    ParameterCount {
        front_end,
        frequency_blocks,
        channel_blocks,
        head,
        total: s.n_scalars(),
    }
}
