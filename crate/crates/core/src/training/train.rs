//! Mini-batch training with validation-accuracy model selection.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::batch_gradient;
use super::optim::{adamw_step, AdamWConfig, OptimState};
use crate::cortical_blocks::{ModelConfig, ModelParams, PreparedInput, SsmClassifier};
use crate::error::{CssmError, Result};
use crate::rng::{seeded_indexed, stream::SHUFFLE};
use crate::signal_io::{FoldSplit, LabeledDataset};

/// Storage precision of the trainable parameters. Arithmetic is always
/// `f64`; `Single` rounds every parameter to `f32` after init and each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    Single,
    Double,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainHyper {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub optimizer: AdamWConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub precision: Precision,
}

fn default_epochs() -> usize {
    100
}
fn default_batch() -> usize {
    8
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            epochs: default_epochs(),
            batch_size: default_batch(),
            optimizer: AdamWConfig::default(),
            seed: 0,
            precision: Precision::default(),
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(CssmError::config("batch_size must be >= 1"));
        }
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
}

/// Everything needed to continue training bit-exactly. The shuffle of epoch
/// `e` is drawn from `(seed, e)`, so no generator state is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub hyper: TrainHyper,
    pub epochs_done: usize,
    pub best_val_acc: f64,
    /// 1-based epoch of `best_params`; 0 before the first epoch.
    pub best_epoch: usize,
    pub params: ModelParams,
    pub best_params: ModelParams,
    pub optim: OptimState,
    pub history: Vec<EpochRecord>,
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Prepares every sample of `ds` selected by `indices`, in order.
pub fn prepare_all(
    model: &SsmClassifier,
    ds: &LabeledDataset,
    indices: &[usize],
) -> Result<Vec<PreparedInput>> {
    indices
        .par_iter()
        .map(|&i| model.prepare(&ds.samples[i]))
        .collect()
}

/// Logits of every prepared input, in order.
pub fn predict_logits(
    model: &SsmClassifier,
    params: &ModelParams,
    inputs: &[PreparedInput],
) -> Result<Vec<Vec<f64>>> {
    inputs.par_iter().map(|x| model.logits(params, x)).collect()
}

pub fn accuracy_of(logits: &[Vec<f64>], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = logits
        .iter()
        .zip(labels)
        .filter(|(l, &y)| argmax(l) == y)
        .count();
    hits as f64 / labels.len() as f64
}

fn fresh_checkpoint(cfg: &ModelConfig, hyper: &TrainHyper) -> Result<Checkpoint> {
    let mut params = ModelParams::init(cfg, hyper.seed)?;
    if hyper.precision == Precision::Single {
        params.quantize_f32();
    }
    let optim = OptimState::new(hyper.optimizer, params.store.tensors());
    Ok(Checkpoint {
        config: cfg.clone(),
        hyper: hyper.clone(),
        epochs_done: 0,
        best_val_acc: f64::NEG_INFINITY,
        best_epoch: 0,
        best_params: params.clone(),
        params,
        optim,
        history: Vec::new(),
    })
}

/// Trains from scratch on `split`; see [`train_resumable`].
pub fn train(
    cfg: &ModelConfig,
    ds: &LabeledDataset,
    split: &FoldSplit,
    hyper: &TrainHyper,
) -> Result<Checkpoint> {
    train_resumable(cfg, ds, split, hyper, None, &mut |_| Ok(()))
}

/// Runs epochs `resume.epochs_done + 1 ..= hyper.epochs`, calling
/// `on_epoch` with the state after each one.
pub fn train_resumable(
    cfg: &ModelConfig,
    ds: &LabeledDataset,
    split: &FoldSplit,
    hyper: &TrainHyper,
    resume: Option<Checkpoint>,
    on_epoch: &mut dyn FnMut(&Checkpoint) -> Result<()>,
) -> Result<Checkpoint> {
    hyper.validate()?;
    ds.validate()?;
    let model = SsmClassifier::new(cfg)?;
    if ds.n_classes != cfg.n_classes {
        return Err(CssmError::config(format!(
            "dataset has {} classes, model has {}",
            ds.n_classes, cfg.n_classes
        )));
    }
    let train_idx = ds.indices_for_groups(&split.train);
    let val_idx = ds.indices_for_groups(&split.val);
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(CssmError::config(format!(
            "fold {} has {} training and {} validation samples; both must be non-empty",
            split.fold_index,
            train_idx.len(),
            val_idx.len()
        )));
    }
    let mut ck = match resume {
        Some(ck) => {
            if ck.config != *cfg {
                return Err(CssmError::config(
                    "checkpoint was trained with a different model config",
                ));
            }
            let same = TrainHyper {
                epochs: hyper.epochs,
                ..ck.hyper.clone()
            };
            if same != *hyper {
                return Err(CssmError::config(
                    "checkpoint hyperparameters differ from the requested run (only epochs may change)",
                ));
            }
            ck.params.check_shapes(cfg)?;
            ck
        }
        None => fresh_checkpoint(cfg, hyper)?,
    };
    ck.hyper.epochs = hyper.epochs;

    let train_x = prepare_all(&model, ds, &train_idx)?;
    let train_y: Vec<usize> = train_idx.iter().map(|&i| ds.labels[i]).collect();
    let val_x = prepare_all(&model, ds, &val_idx)?;
    let val_y: Vec<usize> = val_idx.iter().map(|&i| ds.labels[i]).collect();

    for epoch in ck.epochs_done + 1..=hyper.epochs {
        let mut order: Vec<usize> = (0..train_x.len()).collect();
        order.shuffle(&mut seeded_indexed(hyper.seed, SHUFFLE, epoch as u64));
        let mut loss_sum = 0.0;
        for chunk in order.chunks(hyper.batch_size) {
            let batch: Vec<(&PreparedInput, usize)> =
                chunk.iter().map(|&i| (&train_x[i], train_y[i])).collect();
            let (loss, grads, _) = batch_gradient(&model, &ck.params, &batch)?;
            loss_sum += loss * chunk.len() as f64;
            adamw_step(ck.params.store.tensors_mut(), &grads, &mut ck.optim)?;
            ck.params.project();
            if hyper.precision == Precision::Single {
                ck.params.quantize_f32();
            }
        }
        let train_loss = loss_sum / train_x.len() as f64;
        if !train_loss.is_finite() {
            return Err(CssmError::Numerical(format!(
                "training loss became {train_loss} in epoch {epoch}"
            )));
        }
        let val_acc = accuracy_of(&predict_logits(&model, &ck.params, &val_x)?, &val_y);
        if val_acc > ck.best_val_acc {
            ck.best_val_acc = val_acc;
            ck.best_epoch = epoch;
            ck.best_params = ck.params.clone();
        }
        ck.history.push(EpochRecord {
            epoch,
            train_loss,
            val_acc,
        });
        ck.epochs_done = epoch;
        log::info!(
            "fold {} epoch {epoch}/{}: train loss {train_loss:.4}, val acc {:.2}%",
            split.fold_index,
            hyper.epochs,
            100.0 * val_acc
        );
        on_epoch(&ck)?;
    }
    Ok(ck)
}

/// `epoch,train_loss,val_acc` rows.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,train_loss,val_acc\n");
    for r in history {
        s.push_str(&format!("{},{},{}\n", r.epoch, r.train_loss, r.val_acc));
    }
    s
}

pub fn history_json(history: &[EpochRecord]) -> String {
    serde_json::to_string_pretty(history).expect("history serializes")
}
