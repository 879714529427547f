//! Independent reference computations shared by the module tests and the
//! acceptance run.

use cssm_core::cortical_blocks::{
    channel_ssm_block, frequency_ssm_block, softmax, ModelConfig, ModelParams, SsmClassifier,
};
use cssm_core::explain::ScoreTarget;
use cssm_core::s5_core::DiscreteS5;
use cssm_core::signal_io::SignalTensor;
use cssm_core::training::{backward, cross_entropy_logits};
use cssm_core::wavelet_conv::{wavelet_conv_forward, FrontEndParams};
use num_complex::Complex64;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random diagonal system with every pole strictly inside the unit disc.
pub fn random_system(q: usize, p: usize, seed: u64) -> DiscreteS5 {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut z = |s: f64| Complex64::new(r.gen_range(-s..s), r.gen_range(-s..s));
    let lambda_bar = (0..q)
        .map(|_| {
            let v = z(1.0);
            v * (0.999 / v.norm().max(1.0))
        })
        .collect();
    DiscreteS5 {
        q,
        p,
        lambda_bar,
        b_bar: (0..q * p).map(|_| z(1.0)).collect(),
        c: (0..p * q).map(|_| z(1.0)).collect(),
        d: (0..p).map(|_| z(1.0).re).collect(),
    }
}

pub fn random_input(p: usize, t: usize, seed: u64) -> Vec<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..p * t).map(|_| r.gen_range(-1.0..1.0)).collect()
}

/// Plain for-loop recurrence `h_t = lambda_bar h_(t-1) + B_bar u_t`, `y_t = Re(C h_t) + D u_t`.
pub fn recurrence(sys: &DiscreteS5, u: &[f64], t_len: usize) -> Vec<f64> {
    let (q, p) = (sys.q, sys.p);
    let mut h = vec![Complex64::new(0.0, 0.0); q];
    let mut y = vec![0.0; p * t_len];
    for t in 0..t_len {
        for i in 0..q {
            let mut bu = Complex64::new(0.0, 0.0);
            for k in 0..p {
                bu += sys.b_bar[i * p + k] * u[k * t_len + t];
            }
            h[i] = sys.lambda_bar[i] * h[i] + bu;
        }
        for k in 0..p {
            let ch: Complex64 = (0..q).map(|i| sys.c[k * q + i] * h[i]).sum();
            y[k * t_len + t] = ch.re + sys.d[k] * u[k * t_len + t];
        }
    }
    y
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let den = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-300);
    num / den
}

/// Below this gradient norm, finite-difference round-off dominates.
const NORM_FLOOR: f64 = 1e-6;

/// Relative error of the taped loss gradient against central differences
/// with step `h`, per parameter group, on up to 24 sampled entries each.
pub fn gradient_errors(cfg: &ModelConfig, h: f64) -> Vec<(String, f64)> {
    let model = SsmClassifier::new(cfg).unwrap();
    let params = ModelParams::init(cfg, 3).unwrap();
    let x = crate::common::random_signal(cfg, 9);
    let input = model.prepare(&x).unwrap();
    let label = 1;
    let analytic = backward(&model, &params, &input, label).unwrap();
    let loss_at =
        |p: &ModelParams| cross_entropy_logits(&model.logits(p, &input).unwrap(), label).0;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut out = Vec::new();
    for (k, name) in params.store.names().iter().enumerate() {
        let n = params.store.tensors()[k].len();
        let picks: Vec<usize> = if n <= 24 {
            (0..n).collect()
        } else {
            sample(&mut rng, n, 24).into_vec()
        };
        let (mut num, mut den) = (0.0f64, 0.0f64);
        for &i in &picks {
            let mut p = params.clone();
            p.store.tensors_mut()[k].data_mut()[i] += h;
            let lp = loss_at(&p);
            p.store.tensors_mut()[k].data_mut()[i] -= 2.0 * h;
            let lm = loss_at(&p);
            let fd = (lp - lm) / (2.0 * h);
            let an = analytic.grads[k][i];
            num += (fd - an).powi(2);
            den += fd.powi(2).max(an.powi(2));
        }
        // groups with structurally zero gradient are compared against a norm floor
        out.push((name.clone(), num.sqrt() / den.sqrt().max(NORM_FLOOR)));
    }
    out
}

/// M=2, F=2, T=4 with a single linear head layer.
pub fn micro_config() -> ModelConfig {
    let mut c = crate::common::tiny_config();
    c.n_electrodes = 2;
    c.n_freqs = 2;
    c.n_times = 4;
    c.fs = 8.0;
    c.front_end.f_min = 1.0;
    c.front_end.f_max = 3.0;
    c.state_dim = 2;
    c.head_hidden = 0;
    c
}

/// Maps written out term by term from the untaped forward pass and the
/// closed-form score gradient of a linear head over time-pooled features.
/// Returns `(z_ch, z_freq)` row-major.
pub fn micro_maps(
    cfg: &ModelConfig,
    params: &ModelParams,
    x: &SignalTensor,
    n: usize,
    target: ScoreTarget,
) -> (Vec<f64>, Vec<f64>) {
    let (m, f, t) = (cfg.n_electrodes, cfg.n_freqs, cfg.n_times);
    let eps = cfg.ln_eps;
    let lay = &params.layout;
    let model = SsmClassifier::new(cfg).unwrap();
    let fp = FrontEndParams {
        conv: params.conv(),
        ln_e: params.layer_norm(lay.ln_e, eps),
        ln_a: params.layer_norm(lay.ln_a, eps),
    };
    let xt = wavelet_conv_forward(x, model.front_end.as_ref().unwrap(), &fp).unwrap();
    let u = frequency_ssm_block(&xt, &params.block(&lay.freq_blocks[0], eps)).unwrap();
    let v = channel_ssm_block(&xt, &params.block(&lay.chan_blocks[0], eps)).unwrap();
    let head = params.head();
    assert_eq!(head.layers.len(), 1);
    let (w, b) = &head.layers[0];
    let d = 2 * m * f;
    let mut pooled = vec![0.0; d];
    for (k, row) in u.data().chunks(t).chain(v.data().chunks(t)).enumerate() {
        pooled[k] = row.iter().sum::<f64>() / t as f64;
    }
    let logits: Vec<f64> = (0..b.len())
        .map(|k| b[k] + (0..d).map(|j| w[k * d + j] * pooled[j]).sum::<f64>())
        .collect();
    let onehot = |k: usize| if k == n { 1.0 } else { 0.0 };
    // d score / d logit_k
    let seed: Vec<f64> = match target {
        ScoreTarget::Logit => (0..b.len()).map(onehot).collect(),
        ScoreTarget::Probability => {
            let p = softmax(&logits);
            (0..b.len()).map(|k| p[n] * (onehot(k) - p[k])).collect()
        }
    };
    // every time step of a pooled row gets the same gradient, so alpha is it
    let alpha = |j: usize| (0..b.len()).map(|k| seed[k] * w[k * d + j]).sum::<f64>() / t as f64;
    let mut z_ch = vec![0.0; m * t];
    let mut z_freq = vec![0.0; f * t];
    for mi in 0..m {
        for ti in 0..t {
            let s: f64 = (0..f)
                .map(|fi| alpha(m * f + mi * f + fi) * v.data()[(mi * f + fi) * t + ti])
                .sum();
            z_ch[mi * t + ti] = s.max(0.0);
        }
    }
    for fi in 0..f {
        for ti in 0..t {
            let s: f64 = (0..m)
                .map(|mi| alpha(mi * f + fi) * u.data()[(mi * f + fi) * t + ti])
                .sum();
            z_freq[fi * t + ti] = s.max(0.0);
        }
    }
    (z_ch, z_freq)
}

pub fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
}

/// Pairs (positive, negative) ordered correctly, ties counting one half.
pub fn auroc_pairs(scores: &[f64], positive: &[bool]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if positive[i] && !positive[j] {
                den += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / den
}

/// Two-sided p of the signed-rank statistic by listing every sign pattern.
pub fn wilcoxon_enumerated(d: &[f64]) -> f64 {
    let d: Vec<f64> = d.iter().copied().filter(|v| *v != 0.0).collect();
    let n = d.len();
    // midranks of |d|
    let ranks: Vec<f64> = d
        .iter()
        .map(|x| {
            let below = d.iter().filter(|y| y.abs() < x.abs()).count() as f64;
            let equal = d.iter().filter(|y| y.abs() == x.abs()).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect();
    let total: f64 = ranks.iter().sum();
    let w: f64 = d
        .iter()
        .zip(&ranks)
        .filter(|(v, _)| **v > 0.0)
        .map(|(_, r)| r)
        .sum();
    let obs = (2.0 * w - total).abs();
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        let s: f64 = (0..n)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| ranks[i])
            .sum();
        if (2.0 * s - total).abs() >= obs - 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / (1u64 << n) as f64
}
