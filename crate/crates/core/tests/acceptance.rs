//! Exit-gate checks for the whole library. Runs without the libtest harness
//! so every criterion prints one line; the process fails if any line does.

mod common;

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::oracles::{
    auroc_pairs, close, gradient_errors, micro_config, micro_maps, random_input, random_system,
    recurrence, rel_err, wilcoxon_enumerated,
};
use common::{random_signal, tiny_config};
use cssm_core::cortical_blocks::{
    ablation_grid, count_parameters, ModelConfig, ModelParams, SsmClassifier,
};
use cssm_core::explain::{
    classwise_average, explain_sample, ClasswiseAverage, ExplanationMap, ScoreTarget,
};
use cssm_core::metrics_eval::{
    auroc_binary, evaluate, evaluate_logits, f1_from_counts, wilcoxon_signed_rank_with,
    PredictionSet, WilcoxonMethod,
};
use cssm_core::s5_core::{
    build_hippo_n, diagonalize, normality_residual, ssm_apply, zoh_coefficients, zoh_discretize,
    ZOH_GUARD,
};
use cssm_core::signal_io::{generate_synthetic, FoldSplit, LabeledDataset, SyntheticSpec};
use cssm_core::training::{
    accuracy_of, predict_logits, prepare_all, train, AdamWConfig, Checkpoint, Precision, TrainHyper,
};
use cssm_core::wavelet_conv::{build_morlet_filterbank, cwt};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn scan_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for case in 0..100u64 {
        let (q, p, t) = (
            rng.gen_range(1..=16),
            rng.gen_range(1..=8),
            rng.gen_range(1..=256),
        );
        let sys = random_system(q, p, case);
        let u = random_input(p, t, case ^ 0xA5);
        worst = worst.max(rel_err(&ssm_apply(&sys, &u, t), &recurrence(&sys, &u, t)));
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-10 && secs < 10.0,
        format!("100 cases, worst rel err {worst:.1e}, {secs:.2} s"),
    )
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let errs = gradient_errors(&tiny_config(), 1e-5);
    let (name, worst) = errs
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .cloned()
        .unwrap();
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-4 && secs < 120.0,
        format!(
            "{} groups, worst rel err {worst:.1e} ({name}), {secs:.1} s",
            errs.len()
        ),
    )
}

fn cwt_localization() -> Outcome {
    let (fs, t) = (250.0, 1000);
    let bank = build_morlet_filterbank(50, 1.0, 100.0, fs, 6.0).map_err(|e| e.to_string())?;
    let mut worst = 0usize;
    for f0 in [5.0, 10.0, 20.0, 40.0] {
        let x: Vec<f64> = (0..t)
            .map(|i| (2.0 * PI * f0 * i as f64 / fs).sin())
            .collect();
        let y = cwt(&x, &bank);
        let want = (0..50)
            .min_by(|&a, &b| {
                (bank.freqs[a] - f0)
                    .abs()
                    .total_cmp(&(bank.freqs[b] - f0).abs())
            })
            .unwrap();
        for ti in t / 4..3 * t / 4 {
            let got = (0..50)
                .max_by(|&a, &b| y[a * t + ti].total_cmp(&y[b * t + ti]))
                .unwrap();
            worst = worst.max(got.abs_diff(want));
        }
    }
    check(
        worst <= 1,
        format!("tones 5/10/20/40 Hz, worst row offset {worst}"),
    )
}

fn zoh() -> Outcome {
    let (lb, kappa) = zoh_coefficients(Complex64::new(-1.0, 0.0), 1.0);
    let e = (-1.0f64).exp();
    let closed = (lb - e).norm().max((kappa - (1.0 - e)).norm());
    let delta = 0.37;
    let b = [Complex64::new(0.25, -1.5), Complex64::new(3.0, 0.125)];
    let (_, bbar) = zoh_discretize(&[Complex64::new(1e-9, -2e-9)], &b, &[delta]);
    let guard_exact = bbar == vec![b[0] * delta, b[1] * delta];
    // approaching zero from outside the guard follows delta sum_k z^k / (k+1)!
    let mut series = 0.0f64;
    for k in 1..=60 {
        let z = Complex64::from_polar(10f64.powf(-2.0 - 6.0 * k as f64 / 60.0), 0.1 * k as f64);
        let (_, kap) = zoh_coefficients(z / delta, delta);
        let (mut term, mut sum) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        for j in 1..=8 {
            sum += term;
            term = term * z / (j + 1) as f64;
        }
        series = series.max((kap - sum * delta).norm() / delta);
    }
    let (_, above) = zoh_coefficients(Complex64::new(-1.01 * ZOH_GUARD, 0.0), 1.0);
    let (_, below) = zoh_coefficients(Complex64::new(-0.99 * ZOH_GUARD, 0.0), 1.0);
    let jump = (above - below).norm();
    check(
        closed <= 1e-12 && guard_exact && series <= 1e-12 && jump <= 1e-8,
        format!("closed form err {closed:.1e}, guard exact {guard_exact}, series err {series:.1e}, jump at guard {jump:.1e}"),
    )
}

fn hippo() -> Outcome {
    let (mut normal, mut re, mut recon) = (0.0f64, 0.0f64, 0.0f64);
    for q in [2, 4, 8, 16, 64] {
        let spec = build_hippo_n(q).map_err(|e| e.to_string())?;
        let a = spec.matrix();
        normal = normal.max(normality_residual(&a));
        let d = diagonalize(&spec).map_err(|e| e.to_string())?;
        recon = recon.max(d.reconstruction_error(&a));
        re = d.lambda.iter().fold(re, |m, l| m.max((l.re + 0.5).abs()));
    }
    check(
        normal <= 1e-10 && re <= 1e-8 && recon <= 1e-8,
        format!(
            "Q in 2..64: normality {normal:.1e}, |Re+1/2| {re:.1e}, reconstruction {recon:.1e}"
        ),
    )
}

/// Default two-class task split 400/100/100 over its six groups.
fn learnability_data() -> (LabeledDataset, FoldSplit) {
    let ds = generate_synthetic(&SyntheticSpec::default()).unwrap();
    let split = FoldSplit {
        fold_index: 0,
        train: vec![0, 1, 2, 3],
        val: vec![4],
        test: vec![5],
    };
    (ds, split)
}

fn learnability_config(ds: &LabeledDataset) -> ModelConfig {
    let x = &ds.samples[0];
    let mut c = tiny_config();
    c.n_electrodes = x.n_electrodes();
    c.n_times = x.n_times();
    c.fs = x.fs;
    c.front_end.f_min = 4.0;
    c.front_end.f_max = 40.0;
    c.head_hidden = 32;
    c
}

const LEARN_EPOCHS: usize = 10;

fn learn_hyper() -> TrainHyper {
    TrainHyper {
        epochs: LEARN_EPOCHS,
        batch_size: 8,
        optimizer: AdamWConfig {
            lr: 3e-3,
            ..AdamWConfig::default()
        },
        seed: 11,
        precision: Precision::Double,
    }
}

fn test_indices(ds: &LabeledDataset, split: &FoldSplit) -> Vec<usize> {
    (0..ds.labels.len())
        .filter(|&i| split.test.contains(&ds.groups[i]))
        .collect()
}

fn test_accuracy(
    cfg: &ModelConfig,
    ck: &Checkpoint,
    ds: &LabeledDataset,
    split: &FoldSplit,
) -> f64 {
    let model = SsmClassifier::new(cfg).unwrap();
    let idx = test_indices(ds, split);
    let inputs = prepare_all(&model, ds, &idx).unwrap();
    let logits = predict_logits(&model, &ck.best_params, &inputs).unwrap();
    let labels: Vec<usize> = idx.iter().map(|&i| ds.labels[i]).collect();
    accuracy_of(&logits, &labels)
}

fn learnability(trained: &mut Option<(ModelConfig, Checkpoint)>) -> Outcome {
    let (ds, split) = learnability_data();
    let base = learnability_config(&ds);
    let sizes = [&split.train, &split.val, &split.test]
        .map(|g| ds.groups.iter().filter(|x| g.contains(x)).count());
    let mut runs = vec![("full", base.clone())];
    runs.extend(
        ablation_grid(&base)
            .into_iter()
            .filter(|(n, _)| n.starts_with("no_")),
    );
    let mut ok = sizes == [400, 100, 100];
    let mut parts = vec![format!("split {}/{}/{}", sizes[0], sizes[1], sizes[2])];
    for (name, cfg) in runs {
        let start = Instant::now();
        let ck = train(&cfg, &ds, &split, &learn_hyper()).map_err(|e| format!("{name}: {e}"))?;
        let secs = start.elapsed().as_secs_f64();
        let acc = test_accuracy(&cfg, &ck, &ds, &split);
        let floor = if name == "full" { 0.90 } else { 0.60 };
        ok &= acc >= floor && secs <= 600.0;
        parts.push(format!("{name} {:.1}% ({secs:.0} s)", 100.0 * acc));
        if name == "full" {
            *trained = Some((cfg, ck));
        }
    }
    check(ok, format!("{} epochs: {}", LEARN_EPOCHS, parts.join(", ")))
}

fn metric_oracles() -> Outcome {
    let f1 = format!("{:.2}", 100.0 * f1_from_counts(230, 72, 90));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut chance = |n: usize| {
        let scores = (0..10_000)
            .map(|_| {
                let r: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 1e-12).collect();
                let s: f64 = r.iter().sum();
                r.into_iter().map(|v| v / s).collect()
            })
            .collect();
        let labels = (0..10_000).map(|_| rng.gen_range(0..n)).collect();
        evaluate(&PredictionSet::new(scores, labels, n).unwrap()).unwrap()
    };
    let (two, four) = (chance(2), chance(4));
    let chance_ok = (two.accuracy - 50.0).abs() <= 1.5
        && (four.accuracy - 25.0).abs() <= 1.5
        && (two.auroc_macro - 50.0).abs() <= 1.5
        && (four.auroc_macro - 50.0).abs() <= 1.5
        && two.kappa.abs() <= 0.03
        && four.kappa.abs() <= 0.03;

    let mut auroc_err = 0.0f64;
    for _ in 0..200 {
        let n = rng.gen_range(2..=200);
        let s: Vec<f64> = (0..n).map(|_| rng.gen_range(0..25) as f64).collect();
        let mut y: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        y[0] = true;
        y[1] = false;
        auroc_err = auroc_err.max((auroc_binary(&s, &y).unwrap() - auroc_pairs(&s, &y)).abs());
    }
    let mut wil_err = 0.0f64;
    for _ in 0..300 {
        let k = rng.gen_range(1..=10);
        let d: Vec<f64> = (0..k).map(|_| rng.gen_range(-4..=4) as f64 * 0.5).collect();
        let r = wilcoxon_signed_rank_with(&d, &vec![0.0; k], WilcoxonMethod::Exact).unwrap();
        if !r.degenerate {
            wil_err = wil_err.max((r.p_value - wilcoxon_enumerated(&d)).abs());
        }
    }
    check(
        f1 == "73.95" && chance_ok && auroc_err <= 1e-12 && wil_err <= 1e-12,
        format!(
            "F1 {f1}%, chance acc {:.2}/{:.2}, AUROC {:.2}/{:.2}, kappa {:.3}/{:.3}, pair-count err {auroc_err:.1e}, \
             enumeration err {wil_err:.1e}",
            two.accuracy, four.accuracy, two.auroc_macro, four.auroc_macro, two.kappa, four.kappa
        ),
    )
}

fn explanations(trained: &Option<(ModelConfig, Checkpoint)>) -> Outcome {
    let cfg = tiny_config();
    let model = SsmClassifier::new(&cfg).unwrap();
    let mut negative = 0usize;
    for i in 0..1000u64 {
        let params = ModelParams::init(&cfg, i / 50).unwrap();
        let input = model.prepare(&random_signal(&cfg, 1000 + i)).unwrap();
        let e = explain_sample(
            &model,
            &params,
            &input,
            (i % 2) as usize,
            ScoreTarget::Logit,
            0,
        )
        .unwrap();
        for z in [e.z_ch.unwrap(), e.z_freq.unwrap()] {
            negative += z
                .data()
                .iter()
                .filter(|v| !(**v >= 0.0 && v.is_finite()))
                .count();
        }
    }

    let mc = micro_config();
    let micro = SsmClassifier::new(&mc).unwrap();
    let mut oracle_ok = true;
    for seed in 0..8u64 {
        let params = ModelParams::init(&mc, seed).unwrap();
        let x = random_signal(&mc, 100 + seed);
        let input = micro.prepare(&x).unwrap();
        for n in 0..2 {
            for target in [ScoreTarget::Logit, ScoreTarget::Probability] {
                let e = explain_sample(&micro, &params, &input, n, target, 0).unwrap();
                let (zc, zf) = micro_maps(&mc, &params, &x, n, target);
                oracle_ok &= close(e.z_ch.unwrap().data(), &zc, 1e-10)
                    && close(e.z_freq.unwrap().data(), &zf, 1e-10);
            }
        }
    }

    // logged expectation on the trained task, not part of the verdict
    let ratio = trained.as_ref().map(|(cfg, ck)| informative_ratio(cfg, ck));
    let soft = match ratio {
        Some(r) => format!("informative/other z_ch ratio {r:.2} (expected >= 2, logged only)"),
        None => "no trained model for the informative-electrode ratio".into(),
    };
    check(
        negative == 0 && oracle_ok,
        format!("1000 inputs, {negative} negative entries, micro-oracle within 1e-10: {oracle_ok}; {soft}"),
    )
}

/// Mean class-averaged electrode score on each class's informative
/// electrodes divided by the mean over the remaining electrodes.
fn informative_ratio(cfg: &ModelConfig, ck: &Checkpoint) -> f64 {
    let (ds, split) = learnability_data();
    let spec = SyntheticSpec::default();
    let model = SsmClassifier::new(cfg).unwrap();
    let idx = test_indices(&ds, &split);
    let inputs = prepare_all(&model, &ds, &idx).unwrap();
    let logits = predict_logits(&model, &ck.best_params, &inputs).unwrap();
    let preds: Vec<usize> = logits
        .iter()
        .map(|l| cssm_core::training::argmax(l))
        .collect();
    let labels: Vec<usize> = idx.iter().map(|&i| ds.labels[i]).collect();
    let mut ratios = Vec::new();
    for (class, informative) in spec.informative.iter().enumerate() {
        let maps: Vec<ExplanationMap> = inputs
            .iter()
            .enumerate()
            .filter(|(j, _)| labels[*j] == class && preds[*j] == class)
            .map(|(j, x)| {
                explain_sample(&model, &ck.best_params, x, class, ScoreTarget::Logit, j).unwrap()
            })
            .collect();
        if let ClasswiseAverage::Mean { z_ch: Some(z), .. } =
            classwise_average(&maps, &preds, &labels, class).unwrap()
        {
            let t = z.dim(1);
            let score: Vec<f64> = z
                .data()
                .chunks(t)
                .map(|r| r.iter().sum::<f64>() / t as f64)
                .collect();
            let (mut inf, mut other) = (Vec::new(), Vec::new());
            for (m, s) in score.iter().enumerate() {
                if informative.contains(&m) {
                    inf.push(*s)
                } else {
                    other.push(*s)
                }
            }
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            ratios.push(mean(&inf) / mean(&other).max(1e-300));
        }
    }
    ratios.iter().sum::<f64>() / ratios.len().max(1) as f64
}

fn parameter_count() -> Outcome {
    let cfg = ModelConfig::reference();
    let params = ModelParams::init(&cfg, 0).map_err(|e| e.to_string())?;
    let c = count_parameters(&params);
    check(
        (300_000..=3_000_000).contains(&c.total),
        format!(
            "{} trainable (front-end {}, frequency blocks {}, channel blocks {}, head {})",
            c.total, c.front_end, c.frequency_blocks, c.channel_blocks, c.head
        ),
    )
}

/// Bit patterns of a small end-to-end run: data, history, weights, test
/// metrics and maps.
fn pipeline_bits() -> Vec<u64> {
    let spec = SyntheticSpec {
        n_electrodes: 4,
        n_times: 64,
        fs: 64.0,
        n_samples: 48,
        n_groups: 4,
        informative: vec![vec![0], vec![3]],
        seed: 21,
        ..SyntheticSpec::default()
    };
    let ds = generate_synthetic(&spec).unwrap();
    let split = FoldSplit {
        fold_index: 0,
        train: vec![0, 1],
        val: vec![2],
        test: vec![3],
    };
    let cfg = tiny_config();
    let hyper = TrainHyper {
        epochs: 2,
        batch_size: 4,
        seed: 5,
        ..TrainHyper::default()
    };
    let ck = train(&cfg, &ds, &split, &hyper).unwrap();
    let model = SsmClassifier::new(&cfg).unwrap();
    let idx = test_indices(&ds, &split);
    let inputs = prepare_all(&model, &ds, &idx).unwrap();
    let logits = predict_logits(&model, &ck.best_params, &inputs).unwrap();
    let labels: Vec<usize> = idx.iter().map(|&i| ds.labels[i]).collect();
    let r = evaluate_logits(&logits, &labels, 2).unwrap();

    let mut bits: Vec<u64> = ds
        .samples
        .iter()
        .flat_map(|s| s.data().iter().map(|v| v.to_bits()))
        .collect();
    bits.extend(ds.labels.iter().map(|&y| y as u64));
    for h in &ck.history {
        bits.extend([h.train_loss.to_bits(), h.val_acc.to_bits()]);
    }
    for t in ck.best_params.store.tensors() {
        bits.extend(t.data().iter().map(|v| v.to_bits()));
    }
    bits.extend(
        [
            r.accuracy,
            r.macro_f1,
            r.auroc_macro,
            r.auprc_macro,
            r.kappa,
        ]
        .map(f64::to_bits),
    );
    for (j, x) in inputs.iter().enumerate() {
        let e =
            explain_sample(&model, &ck.best_params, x, labels[j], ScoreTarget::Logit, j).unwrap();
        for z in [e.z_ch.unwrap(), e.z_freq.unwrap()] {
            bits.extend(z.data().iter().map(|v| v.to_bits()));
        }
    }
    bits
}

fn determinism() -> Outcome {
    let in_pool = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(pipeline_bits)
    };
    let one = in_pool(1);
    let again = in_pool(1);
    let eight = in_pool(8);
    check(
        one == again && one == eight,
        format!(
            "{} values; repeat identical {}, 1 vs 8 workers identical {}",
            one.len(),
            one == again,
            one == eight
        ),
    )
}

fn run(id: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let took = Duration::from_secs_f64(start.elapsed().as_secs_f64());
    let (tag, detail, ok) = match outcome {
        Ok(d) => ("PASS", d, true),
        Err(d) => ("FAIL", d, false),
    };
    println!(
        "{tag} {id:>2} {name}: {detail} [{:.1} s]",
        took.as_secs_f64()
    );
    ok
}

fn main() {
    // only `cargo test` with no filter, or a filter naming this target, runs it
    let args: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    if args.iter().any(|a| !"acceptance".contains(a.as_str())) {
        return;
    }
    let mut trained = None;
    let results = [
        run(
            1,
            "scan matches the sequential recurrence",
            scan_correctness,
        ),
        run(2, "end-to-end gradient check", gradient_check),
        run(3, "CWT tone localization", cwt_localization),
        run(4, "ZOH closed form, guard and continuity", zoh),
        run(5, "HiPPO-N normality and spectrum", hippo),
        run(6, "synthetic learnability and module ablations", || {
            learnability(&mut trained)
        }),
        run(7, "metric oracles", metric_oracles),
        run(8, "explanation contracts", || explanations(&trained)),
        run(9, "reference parameter count", parameter_count),
        run(10, "determinism across runs and worker counts", determinism),
    ];
    let passed = results.iter().filter(|r| **r).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
