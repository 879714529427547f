mod common;

use common::{random_signal, tiny_config};
use cssm_core::cortical_blocks::{
    channel_ssm_block, count_parameters, frequency_ssm_block, fusion_head, fusion_logits,
    lift_forward, mean_over_time, model_forward, residual_ssm_block, softmax, BlockParams,
    FfnParams, HeadParams, ModelConfig, ModelParams, SsmClassifier,
};
use cssm_core::s5_core::init_s5_params;
use cssm_core::training::tape::GradTape;
use cssm_core::wavelet_conv::{
    temporal_layernorm, wavelet_conv_forward, FrontEndParams, TemporalLayerNormParams,
};
use cssm_core::{CssmError, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_vec(n: usize, r: &mut ChaCha8Rng, s: f64) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(-s..s)).collect()
}

fn rand_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_vec(shape, rand_vec(shape.iter().product(), &mut r, 1.0))
}

fn block_params(p: usize, q: usize, seed: u64) -> BlockParams {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let h = 2 * p;
    BlockParams {
        ln: TemporalLayerNormParams {
            gamma: (0..p).map(|_| r.gen_range(0.5..1.5)).collect(),
            beta: rand_vec(p, &mut r, 0.3),
            eps: 1e-6,
        },
        ssm: init_s5_params(q, p, seed).unwrap(),
        ffn: FfnParams {
            w1: rand_vec(h * p, &mut r, 0.5),
            b1: rand_vec(h, &mut r, 0.1),
            w2: rand_vec(p * h, &mut r, 0.5),
            b2: rand_vec(p, &mut r, 0.1),
        },
    }
}

fn silenced(mut b: BlockParams) -> BlockParams {
    b.ssm.d.iter_mut().for_each(|v| *v = 0.0);
    b.ssm.c_re.iter_mut().for_each(|v| *v = 0.0);
    b.ssm.c_im.iter_mut().for_each(|v| *v = 0.0);
    for v in [&mut b.ffn.w1, &mut b.ffn.b1, &mut b.ffn.w2, &mut b.ffn.b2] {
        v.iter_mut().for_each(|x| *x = 0.0);
    }
    b
}

#[test]
fn blocks_preserve_shape() {
    let x = rand_tensor(&[8, 50, 250], 1);
    let y = frequency_ssm_block(&x, &block_params(8, 8, 2)).unwrap();
    assert_eq!(y.shape(), &[8, 50, 250]);
    let y = channel_ssm_block(&x, &block_params(50, 8, 3)).unwrap();
    assert_eq!(y.shape(), &[8, 50, 250]);
    assert!(y.all_finite());
    // the variable axis must match the block width
    assert!(matches!(
        channel_ssm_block(&x, &block_params(8, 8, 2)),
        Err(CssmError::Dimension(_))
    ));
}

#[test]
fn silenced_blocks_reduce_to_layer_norm() {
    let x = rand_tensor(&[3, 5, 40], 4);
    let pc = silenced(block_params(5, 4, 5));
    let y = channel_ssm_block(&x, &pc).unwrap();
    assert_eq!(
        y.data(),
        temporal_layernorm(x.data(), 40, &pc.ln).unwrap().as_slice()
    );

    let pf = silenced(block_params(3, 4, 6));
    let y = frequency_ssm_block(&x, &pf).unwrap();
    let want = temporal_layernorm(x.swap_leading().data(), 40, &pf.ln).unwrap();
    assert_eq!(
        y.data(),
        Tensor::from_vec(&[5, 3, 40], want).swap_leading().data()
    );
}

/// Indices along axis 0 and 1 whose output differs.
fn changed(a: &Tensor, b: &Tensor) -> Vec<(usize, usize)> {
    let (d0, d1, t) = (a.dim(0), a.dim(1), a.dim(2));
    let mut out = Vec::new();
    for i in 0..d0 {
        for j in 0..d1 {
            let o = (i * d1 + j) * t;
            if a.data()[o..o + t] != b.data()[o..o + t] {
                out.push((i, j));
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn frequency_rows_are_independent(f0 in 0usize..6, seed in any::<u64>()) {
        let (m, f, t) = (4, 6, 30);
        let x = rand_tensor(&[m, f, t], seed);
        let mut xp = x.clone();
        for mi in 0..m {
            xp.data_mut()[(mi * f + f0) * t + 3] += 0.7;
        }
        let p = block_params(m, 4, seed ^ 9);
        let diff = changed(&frequency_ssm_block(&x, &p).unwrap(), &frequency_ssm_block(&xp, &p).unwrap());
        prop_assert!(!diff.is_empty());
        prop_assert!(diff.iter().all(|&(_, fi)| fi == f0));
    }

    #[test]
    fn electrodes_are_independent(m0 in 0usize..4, seed in any::<u64>()) {
        let (m, f, t) = (4, 6, 30);
        let x = rand_tensor(&[m, f, t], seed);
        let mut xp = x.clone();
        xp.data_mut()[(m0 * f + 2) * t + 11] -= 0.4;
        let p = block_params(f, 4, seed ^ 3);
        let diff = changed(&channel_ssm_block(&x, &p).unwrap(), &channel_ssm_block(&xp, &p).unwrap());
        prop_assert!(!diff.is_empty());
        prop_assert!(diff.iter().all(|&(mi, _)| mi == m0));
    }

    #[test]
    fn head_output_is_a_simplex(seed in any::<u64>(), n in 2usize..6) {
        let (m, f) = (3, 4);
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let head = HeadParams {
            layers: vec![
                (rand_vec(10 * 2 * m * f, &mut r, 3.0), rand_vec(10, &mut r, 1.0)),
                (rand_vec(n * 10, &mut r, 3.0), rand_vec(n, &mut r, 1.0)),
            ],
        };
        let u = rand_tensor(&[m, f, 9], seed ^ 1);
        let v = rand_tensor(&[m, f, 9], seed ^ 2);
        let p = fusion_head(Some(&u), Some(&v), &head).unwrap();
        prop_assert_eq!(p.len(), n);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|v| *v > 0.0 && *v < 1.0));
    }
}

#[test]
fn shared_weights_give_identical_slices() {
    let (m, f, t) = (3, 4, 25);
    let mut x = rand_tensor(&[m, f, t], 7);
    // frequency rows 1 and 3 carry the same [M x T] slice
    for mi in 0..m {
        let src: Vec<f64> = x.data()[(mi * f + 1) * t..(mi * f + 2) * t].to_vec();
        x.data_mut()[(mi * f + 3) * t..(mi * f + 4) * t].copy_from_slice(&src);
    }
    let y = frequency_ssm_block(&x, &block_params(m, 4, 8)).unwrap();
    for mi in 0..m {
        assert_eq!(
            y.data()[(mi * f + 1) * t..(mi * f + 2) * t],
            y.data()[(mi * f + 3) * t..(mi * f + 4) * t]
        );
    }
    // electrodes 0 and 2 carry the same [F x T] slice
    let mut x = rand_tensor(&[m, f, t], 9);
    let src: Vec<f64> = x.data()[..f * t].to_vec();
    x.data_mut()[2 * f * t..3 * f * t].copy_from_slice(&src);
    let y = channel_ssm_block(&x, &block_params(f, 4, 10)).unwrap();
    assert_eq!(y.data()[..f * t], y.data()[2 * f * t..3 * f * t]);
}

#[test]
fn constant_inputs_pool_to_their_value() {
    let x = Tensor::from_vec(
        &[2, 2, 8],
        (0..32).map(|i| ((i / 8) as f64) * 0.75 - 1.25).collect(),
    );
    assert_eq!(mean_over_time(&x), vec![-1.25, -0.5, 0.25, 1.0]);
    let p = softmax(&[1000.0, 1000.0, -1000.0]);
    assert_eq!(p[0], 0.5);
    assert!(p[2] >= 0.0);
}

#[test]
fn four_class_head() {
    let mut cfg = tiny_config();
    cfg.n_classes = 4;
    let params = ModelParams::init(&cfg, 1).unwrap();
    let p = model_forward(&cfg, &params, &random_signal(&cfg, 2)).unwrap();
    assert_eq!(p.len(), 4);
    assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
}

#[test]
fn forward_is_deterministic_and_checks_dimensions() {
    let cfg = tiny_config();
    let params = ModelParams::init(&cfg, 3).unwrap();
    let x = random_signal(&cfg, 4);
    let a = model_forward(&cfg, &params, &x).unwrap();
    let b = model_forward(&cfg, &params, &x).unwrap();
    assert_eq!(
        a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    let wrong = random_signal(
        &ModelConfig {
            n_times: 60,
            ..cfg.clone()
        },
        4,
    );
    assert!(matches!(
        model_forward(&cfg, &params, &wrong),
        Err(CssmError::Config(_))
    ));
}

/// The model assembled from the standalone stage functions.
fn staged_logits(
    cfg: &ModelConfig,
    params: &ModelParams,
    x: &cssm_core::signal_io::SignalTensor,
) -> Vec<f64> {
    let eps = cfg.ln_eps;
    let lay = &params.layout;
    let x_tilde = match lay.lift {
        Some((s, b)) => lift_forward(
            x.data(),
            cfg.n_electrodes,
            cfg.n_times,
            params.store.get(s).data(),
            params.store.get(b).data(),
        ),
        None => {
            let model = SsmClassifier::new(cfg).unwrap();
            let fe = model.front_end.as_ref().unwrap();
            let fp = FrontEndParams {
                conv: params.conv(),
                ln_e: params.layer_norm(lay.ln_e, eps),
                ln_a: params.layer_norm(lay.ln_a, eps),
            };
            wavelet_conv_forward(x, fe, &fp).unwrap()
        }
    };
    let mut u = None;
    if !lay.freq_blocks.is_empty() {
        let mut z = x_tilde.clone();
        for ids in &lay.freq_blocks {
            z = frequency_ssm_block(&z, &params.block(ids, eps)).unwrap();
        }
        u = Some(z);
    }
    let mut v = None;
    if !lay.chan_blocks.is_empty() {
        let mut z = x_tilde;
        for ids in &lay.chan_blocks {
            z = channel_ssm_block(&z, &params.block(ids, eps)).unwrap();
        }
        v = Some(z);
    }
    fusion_logits(u.as_ref(), v.as_ref(), &params.head()).unwrap()
}

#[test]
fn taped_forward_equals_staged_composition() {
    let base = tiny_config();
    let mut two_blocks = base.clone();
    two_blocks.n_blocks = 2;
    let mut variants = vec![base.clone(), two_blocks];
    variants.extend(
        cssm_core::cortical_blocks::ablation_grid(&base)
            .into_iter()
            .map(|(_, c)| c),
    );
    for (i, cfg) in variants.iter().enumerate() {
        let params = ModelParams::init(cfg, 10 + i as u64).unwrap();
        let x = random_signal(cfg, 20 + i as u64);
        let model = SsmClassifier::new(cfg).unwrap();
        let input = model.prepare(&x).unwrap();
        let got = model.logits(&params, &input).unwrap();
        let want = staged_logits(cfg, &params, &x);
        for (g, w) in got.iter().zip(&want) {
            assert!(
                (g - w).abs() <= 1e-10 * (1.0 + w.abs()),
                "variant {i}: {g} vs {w}"
            );
        }
        let p = model_forward(cfg, &params, &x).unwrap();
        assert_eq!(p, softmax(&got));
    }
}

#[test]
fn branches_only_meet_at_the_head() {
    let cfg = tiny_config();
    let params = ModelParams::init(&cfg, 5).unwrap();
    let mut other = params.clone();
    for ids in &other.layout.chan_blocks.clone() {
        for v in other.store.get_mut(ids.w1).data_mut() {
            *v *= -3.0;
        }
    }
    let model = SsmClassifier::new(&cfg).unwrap();
    let input = model.prepare(&random_signal(&cfg, 6)).unwrap();
    let run = |p: &ModelParams| {
        let mut tape = GradTape::new();
        let nodes = model.record(&mut tape, p, &input).unwrap();
        (
            tape.value(nodes.u_last.unwrap()).clone(),
            tape.value(nodes.v_last.unwrap()).clone(),
        )
    };
    let (u0, v0) = run(&params);
    let (u1, v1) = run(&other);
    assert_eq!(u0, u1);
    assert_ne!(v0, v1);
}

#[test]
fn residual_block_matches_hand_composition() {
    let (s, p, t) = (2, 3, 20);
    let x = rand_tensor(&[s, p, t], 31);
    let b = block_params(p, 4, 32);
    let y = residual_ssm_block(&x, &b).unwrap();
    let xn = temporal_layernorm(x.data(), t, &b.ln).unwrap();
    let sys = b.ssm.discretize();
    for si in 0..s {
        let slice = &xn[si * p * t..(si + 1) * p * t];
        let ssm = cssm_core::s5_core::ssm_apply(&sys, slice, t);
        for ti in 0..t {
            let h = 2 * p;
            let hidden: Vec<f64> = (0..h)
                .map(|hi| {
                    let z: f64 = (0..p)
                        .map(|k| b.ffn.w1[hi * p + k] * ssm[k * t + ti])
                        .sum::<f64>()
                        + b.ffn.b1[hi];
                    // tanh-form GELU
                    0.5 * z
                        * (1.0
                            + ((2.0 / std::f64::consts::PI).sqrt() * (z + 0.044715 * z.powi(3)))
                                .tanh())
                })
                .collect();
            for k in 0..p {
                let o: f64 = (0..h)
                    .map(|hi| b.ffn.w2[k * h + hi] * hidden[hi])
                    .sum::<f64>()
                    + b.ffn.b2[k];
                let want = o + slice[k * t + ti];
                assert!((y.data()[(si * p + k) * t + ti] - want).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn parameter_counts_add_up() {
    let cfg = tiny_config();
    let one = count_parameters(&ModelParams::init(&cfg, 0).unwrap());
    let two = count_parameters(
        &ModelParams::init(
            &ModelConfig {
                n_blocks: 2,
                ..cfg.clone()
            },
            0,
        )
        .unwrap(),
    );
    assert_eq!(two.frequency_blocks, 2 * one.frequency_blocks);
    assert_eq!(two.channel_blocks, 2 * one.channel_blocks);
    assert_eq!(
        one.total,
        one.front_end + one.frequency_blocks + one.channel_blocks + one.head
    );

    // one residual block of width P: LN 2P, SSM 2Q + 4QP + P + Q, FFN 2 e P^2 + e P + P
    let block = |p: usize| {
        let (q, e) = (cfg.state_dim, cfg.ffn_expansion);
        2 * p + 3 * q + 4 * q * p + p + 2 * e * p * p + e * p + p
    };
    assert_eq!(one.frequency_blocks, block(cfg.n_electrodes));
    assert_eq!(one.channel_blocks, block(cfg.n_freqs));

    // head: (2 M F) -> H -> N, and the linear variant (2 M F) -> N
    let d = 2 * cfg.n_electrodes * cfg.n_freqs;
    let (h, n) = (cfg.head_hidden, cfg.n_classes);
    assert_eq!(one.head, d * h + h + h * n + n);
    let linear = count_parameters(
        &ModelParams::init(
            &ModelConfig {
                head_hidden: 0,
                ..cfg.clone()
            },
            0,
        )
        .unwrap(),
    );
    assert_eq!(linear.head, d * n + n);
    let single = ModelConfig {
        enable_channel_ssm: false,
        head_hidden: 0,
        ..cfg.clone()
    };
    let single = count_parameters(&ModelParams::init(&single, 0).unwrap());
    assert_eq!(single.head, (d / 2) * n + n);
    assert_eq!(single.channel_blocks, 0);
}

#[test]
fn lift_replaces_the_front_end() {
    let mut cfg = tiny_config();
    cfg.enable_wavelet_conv = false;
    let params = ModelParams::init(&cfg, 2).unwrap();
    let (s, b) = params.layout.lift.unwrap();
    let scale = params.store.get(s).data();
    assert!(scale.iter().all(|v| (v - 1.0).abs() < 0.6));
    let x = random_signal(&cfg, 3);
    let y = lift_forward(
        x.data(),
        cfg.n_electrodes,
        cfg.n_times,
        scale,
        params.store.get(b).data(),
    );
    let t = cfg.n_times;
    for mi in 0..cfg.n_electrodes {
        for fi in 0..cfg.n_freqs {
            for ti in 0..t {
                assert_eq!(
                    y.data()[(mi * cfg.n_freqs + fi) * t + ti],
                    scale[fi] * x.row(mi)[ti]
                );
            }
        }
    }
}
