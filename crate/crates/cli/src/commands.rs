//! The five subcommands.

use std::path::Path;

use cssm_core::cortical_blocks::{ablation_grid, ModelConfig, ModelParams, SsmClassifier};
use cssm_core::explain::{
    classwise_average, explain_sample, export_maps, ClasswiseAverage, ExplanationMap,
};
use cssm_core::metrics_eval::{evaluate_logits, MetricsReport};
use cssm_core::rng::{seeded_indexed, stream::NOISE};
use cssm_core::signal_io::{
    degrade_snr, downsample, generate_synthetic, kfold_split, load_dataset, save_dataset,
    DegradeStatus, FoldSplit, LabeledDataset, SignalTensor, SyntheticSpec,
};
use cssm_core::training::{
    argmax, history_csv, load_checkpoint, predict_logits, prepare_all, save_checkpoint,
    train_resumable, Checkpoint,
};
use cssm_core::CssmError;
use rand::RngCore;
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{
    metric_values, summarize, write_file, write_json, Layout, MetricSummary, METRIC_NAMES,
};

pub fn cmd_synth(cfg: &mut RunConfig, out: &Path) -> CliResult<()> {
    let spec = cfg.synth.get_or_insert_with(SyntheticSpec::default).clone();
    // generation validates the spec, so nothing is written on error
    let ds = generate_synthetic(&spec)?;
    let layout = Layout::new(out)?;
    let path = cfg
        .dataset
        .clone()
        .unwrap_or_else(|| layout.root.join("dataset.bin"));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        crate::output::mkdir(dir)?;
    }
    save_dataset(&ds, &path)?;
    cfg.dataset = Some(path.clone());
    write_json(&layout.config(), cfg)?;
    log::info!("wrote {} samples to {}", ds.len(), path.display());
    Ok(())
}

fn load_folds(cfg: &RunConfig) -> CliResult<(LabeledDataset, Vec<FoldSplit>)> {
    let path = cfg.dataset_path()?;
    if !path.exists() {
        return Err(CliError::Usage(format!(
            "dataset {} does not exist",
            path.display()
        )));
    }
    let ds = load_dataset(path)?;
    let splits = kfold_split(&ds, cfg.split.k, cfg.split.seed)?;
    Ok((ds, splits))
}

/// Metrics of `params` on the test groups of `split`, with the raw logits.
fn test_metrics(
    model_cfg: &ModelConfig,
    params: &ModelParams,
    ds: &LabeledDataset,
    split: &FoldSplit,
) -> CliResult<(MetricsReport, Vec<Vec<f64>>)> {
    let model = SsmClassifier::new(model_cfg)?;
    let idx = ds.indices_for_groups(&split.test);
    if idx.is_empty() {
        return Err(CliError::Usage(format!(
            "fold {} has no test samples",
            split.fold_index
        )));
    }
    let inputs = prepare_all(&model, ds, &idx)?;
    let logits = predict_logits(&model, params, &inputs)?;
    let labels: Vec<usize> = idx.iter().map(|&i| ds.labels[i]).collect();
    Ok((evaluate_logits(&logits, &labels, ds.n_classes)?, logits))
}

fn train_fold(
    cfg: &RunConfig,
    model_cfg: &ModelConfig,
    ds: &LabeledDataset,
    split: &FoldSplit,
    checkpoint: Option<&Path>,
    resume: bool,
) -> CliResult<Checkpoint> {
    let prior = match checkpoint {
        Some(p) if resume && p.exists() => {
            log::info!("resuming fold {} from {}", split.fold_index, p.display());
            Some(load_checkpoint(p)?)
        }
        _ => None,
    };
    let mut save = |ck: &Checkpoint| match checkpoint {
        Some(p) => save_checkpoint(ck, p),
        None => Ok(()),
    };
    Ok(train_resumable(
        model_cfg, ds, split, &cfg.train, prior, &mut save,
    )?)
}

fn report_json(r: &MetricsReport) -> Value {
    serde_json::to_value(r).expect("report serializes")
}

fn summary_json(rows: &[(usize, &MetricsReport)]) -> Value {
    let reports: Vec<&MetricsReport> = rows.iter().map(|r| r.1).collect();
    let MetricSummary { mean, std } = summarize(&reports);
    let named = |v: [f64; 5]| -> Value {
        Value::Object(
            METRIC_NAMES
                .iter()
                .zip(v)
                .map(|(k, x)| (k.to_string(), json!(x)))
                .collect::<Map<_, _>>(),
        )
    };
    json!({
        "folds": rows.iter().map(|(f, r)| {
            let mut o = named(metric_values(r));
            o["fold"] = json!(f);
            o
        }).collect::<Vec<_>>(),
        "mean": named(mean),
        "std": named(std),
    })
}

fn metrics_csv(rows: &[(String, [f64; 5])]) -> String {
    let mut s = format!("fold,{}\n", METRIC_NAMES.join(","));
    for (label, v) in rows {
        let cells: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
        s.push_str(&format!("{label},{}\n", cells.join(",")));
    }
    s
}

pub fn cmd_train(cfg: &RunConfig, out: &Path, resume: bool) -> CliResult<()> {
    let model_cfg = cfg.model()?.clone();
    let folds = cfg.folds()?;
    let (ds, splits) = load_folds(cfg)?;
    let layout = Layout::new(out)?;
    write_json(&layout.config(), cfg)?;
    let mut history = String::from("fold,epoch,train_loss,val_acc\n");
    let mut reports = Vec::new();
    for &f in &folds {
        let split = &splits[f];
        let ck = train_fold(
            cfg,
            &model_cfg,
            &ds,
            split,
            Some(&layout.checkpoint(f)?),
            resume,
        )?;
        let (report, _) = test_metrics(&model_cfg, &ck.best_params, &ds, split)?;
        log::info!(
            "fold {f}: best epoch {}, test accuracy {:.2}%",
            ck.best_epoch,
            report.accuracy
        );
        write_json(
            &layout.metrics()?.join(format!("fold{f}.json")),
            &json!({
                "fold": f,
                "split": split,
                "best_epoch": ck.best_epoch,
                "best_val_acc": ck.best_val_acc,
                "test": report_json(&report),
            }),
        )?;
        for line in history_csv(&ck.history).lines().skip(1) {
            history.push_str(&format!("{f},{line}\n"));
        }
        reports.push((f, report));
    }
    write_file(&layout.history(), history.as_bytes())?;
    let rows: Vec<(usize, &MetricsReport)> = reports.iter().map(|(f, r)| (*f, r)).collect();
    let summary = summary_json(&rows);
    write_json(&layout.metrics()?.join("summary.json"), &summary)?;
    let mut csv_rows: Vec<(String, [f64; 5])> = reports
        .iter()
        .map(|(f, r)| (f.to_string(), metric_values(r)))
        .collect();
    let s = summarize(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
    csv_rows.push(("mean".into(), s.mean));
    csv_rows.push(("std".into(), s.std));
    write_file(
        &layout.metrics()?.join("summary.csv"),
        metrics_csv(&csv_rows).as_bytes(),
    )?;
    Ok(())
}

/// Best parameters of fold `f`, checked against the run's model config.
fn load_fold_params(layout: &Layout, model_cfg: &ModelConfig, f: usize) -> CliResult<ModelParams> {
    let path = layout.existing_checkpoint(f);
    if !path.exists() {
        return Err(CliError::Usage(format!(
            "no checkpoint for fold {f} at {}; run `train` first",
            path.display()
        )));
    }
    let ck = load_checkpoint(&path)?;
    ck.best_params.check_shapes(model_cfg)?;
    if ck.config != *model_cfg {
        return Err(CliError::Usage(format!(
            "checkpoint {} was trained with a different model config",
            path.display()
        )));
    }
    Ok(ck.best_params)
}

fn degraded_metrics(
    cfg: &RunConfig,
    model_cfg: &ModelConfig,
    params: &ModelParams,
    ds: &LabeledDataset,
    split: &FoldSplit,
    db: f64,
) -> CliResult<(MetricsReport, usize)> {
    let idx = ds.indices_for_groups(&split.test);
    let noisy: Vec<(SignalTensor, bool)> = idx
        .par_iter()
        .map(|&i| {
            let seed = seeded_indexed(cfg.split.seed, NOISE, i as u64).next_u64();
            let d = degrade_snr(&ds.samples[i], cfg.eval.snr_band, db, seed)?;
            Ok((d.signal, matches!(d.status, DegradeStatus::NoOp { .. })))
        })
        .collect::<Result<_, CssmError>>()?;
    let unchanged = noisy.iter().filter(|n| n.1).count();
    let sub = LabeledDataset::new(
        noisy.into_iter().map(|n| n.0).collect(),
        idx.iter().map(|&i| ds.labels[i]).collect(),
        idx.iter().map(|&i| ds.groups[i]).collect(),
        ds.n_classes,
    )?;
    let (r, _) = test_metrics(model_cfg, params, &sub, split)?;
    Ok((r, unchanged))
}

fn resampled(ds: &LabeledDataset, target_fs: f64) -> CliResult<LabeledDataset> {
    let samples = ds
        .samples
        .par_iter()
        .map(|s| downsample(s, target_fs))
        .collect::<Result<Vec<_>, CssmError>>()?;
    Ok(LabeledDataset::new(
        samples,
        ds.labels.clone(),
        ds.groups.clone(),
        ds.n_classes,
    )?)
}

pub fn cmd_eval(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let model_cfg = cfg.model()?.clone();
    let folds = cfg.folds()?;
    let (ds, splits) = load_folds(cfg)?;
    let layout = Layout::new(out)?;
    let metrics = layout.metrics()?;
    let mut reports = Vec::new();
    for &f in &folds {
        let split = &splits[f];
        let params = load_fold_params(&layout, &model_cfg, f)?;
        let (report, logits) = test_metrics(&model_cfg, &params, &ds, split)?;
        let preds: Vec<usize> = logits.iter().map(|l| argmax(l)).collect();
        write_json(
            &metrics.join(format!("eval_fold{f}.json")),
            &json!({"fold": f, "test": report_json(&report), "predictions": preds}),
        )?;
        if !cfg.eval.snr_db.is_empty() {
            let mut s = format!("snr_db,unchanged,{}\n", METRIC_NAMES.join(","));
            for &db in &cfg.eval.snr_db {
                let (r, unchanged) = degraded_metrics(cfg, &model_cfg, &params, &ds, split, db)?;
                let cells: Vec<String> = metric_values(&r)
                    .iter()
                    .map(|x| format!("{x:.4}"))
                    .collect();
                s.push_str(&format!("{db},{unchanged},{}\n", cells.join(",")));
            }
            write_file(&metrics.join(format!("snr_fold{f}.csv")), s.as_bytes())?;
        }
        if !cfg.eval.target_fs.is_empty() {
            let mut s = format!("target_fs,n_times,{}\n", METRIC_NAMES.join(","));
            for &fs in &cfg.eval.target_fs {
                let sub = resampled(&ds, fs)?;
                let t = sub.samples[0].n_times();
                let c = model_cfg.with_timing(t, fs);
                let ck = train_fold(cfg, &c, &sub, split, None, false)?;
                let (r, _) = test_metrics(&c, &ck.best_params, &sub, split)?;
                let cells: Vec<String> = metric_values(&r)
                    .iter()
                    .map(|x| format!("{x:.4}"))
                    .collect();
                s.push_str(&format!("{fs},{t},{}\n", cells.join(",")));
            }
            write_file(&metrics.join(format!("length_fold{f}.csv")), s.as_bytes())?;
        }
        reports.push((f, report));
    }
    let rows: Vec<(usize, &MetricsReport)> = reports.iter().map(|(f, r)| (*f, r)).collect();
    write_json(&metrics.join("eval_summary.json"), &summary_json(&rows))?;
    Ok(())
}

pub fn cmd_explain(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let model_cfg = cfg.model()?.clone();
    let folds = cfg.folds()?;
    let (ds, splits) = load_folds(cfg)?;
    let layout = Layout::new(out)?;
    let model = SsmClassifier::new(&model_cfg)?;
    let freqs = model.freqs();
    let ex = &cfg.explain;
    for &f in &folds {
        let params = load_fold_params(&layout, &model_cfg, f)?;
        let dir = layout.maps()?.join(format!("fold{f}"));
        let idx = ds.indices_for_groups(&splits[f].test);
        let chosen: Vec<usize> = match ex.sample {
            Some(i) if i >= idx.len() => {
                return Err(CliError::Usage(format!(
                    "sample {i} out of range; fold {f} has {} test samples",
                    idx.len()
                )))
            }
            Some(i) => vec![i],
            None => (0..idx.len()).collect(),
        };
        let inputs = prepare_all(
            &model,
            &ds,
            &chosen.iter().map(|&j| idx[j]).collect::<Vec<_>>(),
        )?;
        let logits = predict_logits(&model, &params, &inputs)?;
        let maps: Vec<ExplanationMap> = chosen
            .par_iter()
            .zip(&inputs)
            .zip(&logits)
            .map(|((&j, x), l)| explain_sample(&model, &params, x, argmax(l), ex.target, j))
            .collect::<Result<_, CssmError>>()?;
        let labels_of = |j: usize| ds.samples[idx[j]].electrode_labels.clone();
        let electrode_labels: Vec<String> = match labels_of(chosen[0]) {
            Some(l) => l,
            None => (0..model_cfg.n_electrodes)
                .map(|m| ds.samples[idx[chosen[0]]].label(m))
                .collect(),
        };
        for map in &maps {
            export_maps(
                map,
                &electrode_labels,
                &freqs,
                &dir,
                &format!("sample{}", map.sample_id),
                ex.heatmaps,
            )?;
        }
        if ex.sample.is_none() && ex.classwise {
            let mut preds = vec![0; idx.len()];
            for (j, l) in chosen.iter().zip(&logits) {
                preds[*j] = argmax(l);
            }
            let labels: Vec<usize> = idx.iter().map(|&i| ds.labels[i]).collect();
            let mut status = Vec::new();
            for n in 0..model_cfg.n_classes {
                match classwise_average(&maps, &preds, &labels, n)? {
                    ClasswiseAverage::Mean {
                        z_ch,
                        z_freq,
                        count,
                    } => {
                        let avg = ExplanationMap {
                            sample_id: 0,
                            class_index: n,
                            z_ch,
                            z_freq,
                        };
                        export_maps(
                            &avg,
                            &electrode_labels,
                            &freqs,
                            &dir,
                            &format!("class{n}_avg"),
                            ex.heatmaps,
                        )?;
                        status.push(json!({"class": n, "count": count}));
                    }
                    ClasswiseAverage::NoSuccessfulCases => {
                        log::warn!("fold {f}: no correctly classified test sample of class {n}");
                        status.push(json!({"class": n, "count": 0}));
                    }
                }
            }
            write_json(&dir.join("classwise.json"), &status)?;
        }
        log::info!(
            "fold {f}: exported {} maps to {}",
            maps.len(),
            dir.display()
        );
    }
    Ok(())
}

/// Serde name of a unit enum variant.
fn tag<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default()
}

pub fn cmd_ablate(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let base = cfg.model()?.clone();
    let folds = cfg.folds()?;
    let (ds, splits) = load_folds(cfg)?;
    let layout = Layout::new(out)?;
    write_json(&layout.config(), cfg)?;
    let mut header =
        String::from("variant,e_branch,a_branch,wavelet_conv,frequency_ssm,channel_ssm");
    for m in METRIC_NAMES {
        header.push_str(&format!(",{m},{m}_std"));
    }
    let mut csv = header + "\n";
    for (name, mc) in ablation_grid(&base) {
        let mut reports = Vec::new();
        for &f in &folds {
            let ck = train_fold(cfg, &mc, &ds, &splits[f], None, false)?;
            reports.push(test_metrics(&mc, &ck.best_params, &ds, &splits[f])?.0);
        }
        let s = summarize(&reports.iter().collect::<Vec<_>>());
        let fe = &mc.front_end;
        csv.push_str(&format!(
            "{name},{},{},{},{},{}",
            tag(&fe.e_branch),
            tag(&fe.a_branch),
            mc.enable_wavelet_conv,
            mc.enable_frequency_ssm,
            mc.enable_channel_ssm
        ));
        for i in 0..5 {
            csv.push_str(&format!(",{:.4},{:.4}", s.mean[i], s.std[i]));
        }
        csv.push('\n');
        log::info!("ablation {name}: accuracy {:.2}%", s.mean[0]);
    }
    write_file(&layout.metrics()?.join("ablation.csv"), csv.as_bytes())?;
    Ok(())
}
