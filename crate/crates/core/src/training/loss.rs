//! Cross-entropy and per-sample gradients.

use rayon::prelude::*;

use super::tape::GradTape;
use crate::cortical_blocks::{ModelParams, PreparedInput, SsmClassifier};
use crate::error::{CssmError, Result};

/// `-ln p[y]` for a probability vector.
pub fn cross_entropy(p: &[f64], y: usize) -> f64 {
    -p[y].ln()
}

/// `-log_softmax(logits)[y]` and its gradient `softmax(logits) - e_y`.
pub fn cross_entropy_logits(logits: &[f64], y: usize) -> (f64, Vec<f64>) {
    let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = mx + logits.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
    let mut g: Vec<f64> = logits.iter().map(|v| (v - lse).exp()).collect();
    g[y] -= 1.0;
    (lse - logits[y], g)
}

/// Mean cross-entropy over a batch of logit rows.
pub fn batch_cross_entropy(logits: &[Vec<f64>], labels: &[usize]) -> f64 {
    let n = logits.len() as f64;
    logits
        .iter()
        .zip(labels)
        .map(|(l, &y)| cross_entropy_logits(l, y).0)
        .sum::<f64>()
        / n
}

/// Loss and parameter gradients of one sample.
#[derive(Debug, Clone)]
pub struct SampleGradient {
    pub loss: f64,
    pub logits: Vec<f64>,
    /// One vector per parameter tensor, in store order.
    pub grads: Vec<Vec<f64>>,
}

/// Forward, loss and reverse sweep for one labelled recording.
pub fn backward(
    model: &SsmClassifier,
    params: &ModelParams,
    input: &PreparedInput,
    label: usize,
) -> Result<SampleGradient> {
    let n = model.cfg.n_classes;
    if label >= n {
        return Err(CssmError::config(format!(
            "label {label} out of range for {n} classes"
        )));
    }
    let mut tape = GradTape::new();
    let nodes = model.record(&mut tape, params, input)?;
    let logits = tape.value(nodes.logits).data().to_vec();
    let (loss, seed) = cross_entropy_logits(&logits, label);
    if !loss.is_finite() {
        return Err(CssmError::Numerical(format!("non-finite loss {loss}")));
    }
    let mut g = tape.backward(nodes.logits, &seed)?;
    let grads = nodes
        .params
        .iter()
        .zip(params.store.tensors())
        .map(|(&id, t)| g.take(id).unwrap_or_else(|| vec![0.0; t.len()]))
        .collect();
    Ok(SampleGradient {
        loss,
        logits,
        grads,
    })
}

/// Mean loss and mean gradients over a batch.
///
/// Samples run in parallel; the reduction follows the batch order, so the
/// result does not depend on the thread count.
pub fn batch_gradient(
    model: &SsmClassifier,
    params: &ModelParams,
    batch: &[(&PreparedInput, usize)],
) -> Result<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    if batch.is_empty() {
        return Err(CssmError::config("empty batch"));
    }
    let per: Vec<SampleGradient> = batch
        .par_iter()
        .map(|(x, y)| backward(model, params, x, *y))
        .collect::<Result<_>>()?;
    let inv = 1.0 / batch.len() as f64;
    let mut grads: Vec<Vec<f64>> = params
        .store
        .tensors()
        .iter()
        .map(|t| vec![0.0; t.len()])
        .collect();
    let mut loss = 0.0;
    for s in &per {
        loss += s.loss;
        for (acc, g) in grads.iter_mut().zip(&s.grads) {
            for (a, v) in acc.iter_mut().zip(g) {
                *a += v;
            }
        }
    }
    for acc in &mut grads {
        for a in acc.iter_mut() {
            *a *= inv;
        }
    }
    let logits = per.into_iter().map(|s| s.logits).collect();
    Ok((loss * inv, grads, logits))
}
