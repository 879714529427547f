//! Class-activation maps over the last feature map of each SSM branch.
//!
//! For a class score `y_n` and a branch feature `V` of shape `[M x F x T]`,
//! the weights are temporal means of the score gradient,
//! `alpha[f, m] = (1/T) sum_t dy_n / dV[m, f, t]`. The electrode map is
//! `Z_ch[m, t] = ReLU(sum_f alpha[f, m] V[m, f, t])`; the frequency map
//! weights the frequency-branch feature `U` over electrodes instead,
//! `Z_freq[f, t] = ReLU(sum_m alpha[m, f] U[m, f, t])`.

use serde::{Deserialize, Serialize};

use crate::cortical_blocks::{softmax, ModelParams, PreparedInput, SsmClassifier};
use crate::error::{CssmError, Result};
use crate::tensor::Tensor;
use crate::training::GradTape;

/// Which class score is differentiated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreTarget {
    /// Pre-softmax logit.
    #[default]
    Logit,
    /// Softmax probability.
    Probability,
}

/// Axis of `[M x F x T]` that is kept in the map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapAxis {
    /// `[M x T]`, summed over frequencies.
    Electrode,
    /// `[F x T]`, summed over electrodes.
    Frequency,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationMap {
    pub sample_id: usize,
    pub class_index: usize,
    /// `[M x T]`; `None` when the channel branch is disabled.
    pub z_ch: Option<Tensor>,
    /// `[F x T]`; `None` when the frequency branch is disabled.
    pub z_freq: Option<Tensor>,
}

/// Rectified gradient-weighted sum of `feature [M x F x T]` given the score
/// gradient `grad` of the same shape.
pub fn weighted_map(feature: &Tensor, grad: &Tensor, axis: MapAxis) -> Result<Tensor> {
    if feature.shape().len() != 3 || feature.shape() != grad.shape() {
        return Err(CssmError::dim(format!(
            "feature {:?} and gradient {:?} must share one [M x F x T] shape",
            feature.shape(),
            grad.shape()
        )));
    }
    let (m, f, t) = (feature.dim(0), feature.dim(1), feature.dim(2));
    let (v, g) = (feature.data(), grad.data());
    let alpha: Vec<f64> = g
        .chunks_exact(t)
        .map(|row| row.iter().sum::<f64>() / t as f64)
        .collect();
    let rows = match axis {
        MapAxis::Electrode => m,
        MapAxis::Frequency => f,
    };
    let mut z = vec![0.0; rows * t];
    for mi in 0..m {
        for fi in 0..f {
            let r = mi * f + fi;
            let out = match axis {
                MapAxis::Electrode => mi,
                MapAxis::Frequency => fi,
            };
            let a = alpha[r];
            let zr = &mut z[out * t..(out + 1) * t];
            for (zv, &x) in zr.iter_mut().zip(&v[r * t..(r + 1) * t]) {
                *zv += a * x;
            }
        }
    }
    for zv in &mut z {
        *zv = zv.max(0.0);
    }
    Ok(Tensor::from_vec(&[rows, t], z))
}

fn score_seed(logits: &[f64], n: usize, target: ScoreTarget) -> Vec<f64> {
    match target {
        ScoreTarget::Logit => {
            let mut s = vec![0.0; logits.len()];
            s[n] = 1.0;
            s
        }
        // dp_n/dz_k = p_n (delta_nk - p_k)
        ScoreTarget::Probability => {
            let p = softmax(logits);
            (0..p.len())
                .map(|k| p[n] * (f64::from(u8::from(k == n)) - p[k]))
                .collect()
        }
    }
}

/// Both maps of one recording for class `n`, from a single reverse sweep.
pub fn explain_sample(
    model: &SsmClassifier,
    params: &ModelParams,
    input: &PreparedInput,
    n: usize,
    target: ScoreTarget,
    sample_id: usize,
) -> Result<ExplanationMap> {
    let n_classes = model.cfg.n_classes;
    if n >= n_classes {
        return Err(CssmError::config(format!(
            "class index {n} out of range for {n_classes} classes"
        )));
    }
    let mut tape = GradTape::new();
    let nodes = model.record(&mut tape, params, input)?;
    let logits = tape.value(nodes.logits).data().to_vec();
    let grads = tape.backward(nodes.logits, &score_seed(&logits, n, target))?;
    let map_of = |id, axis| -> Result<Tensor> {
        let feat = tape.value(id);
        let g = match grads.get(id) {
            Some(g) => Tensor::from_vec(feat.shape(), g.to_vec()),
            None => Tensor::zeros(feat.shape()),
        };
        weighted_map(feat, &g, axis)
    };
    Ok(ExplanationMap {
        sample_id,
        class_index: n,
        z_ch: nodes
            .v_last
            .map(|id| map_of(id, MapAxis::Electrode))
            .transpose()?,
        z_freq: nodes
            .u_last
            .map(|id| map_of(id, MapAxis::Frequency))
            .transpose()?,
    })
}

/// Electrode map `[M x T]`; errors if the channel branch is disabled.
pub fn gradcam_channel(
    model: &SsmClassifier,
    params: &ModelParams,
    input: &PreparedInput,
    n: usize,
    target: ScoreTarget,
) -> Result<Tensor> {
    explain_sample(model, params, input, n, target, 0)?
        .z_ch
        .ok_or_else(|| CssmError::config("electrode maps need the channel SSM branch"))
}

/// Frequency map `[F x T]`; errors if the frequency branch is disabled.
pub fn gradcam_freq(
    model: &SsmClassifier,
    params: &ModelParams,
    input: &PreparedInput,
    n: usize,
    target: ScoreTarget,
) -> Result<Tensor> {
    explain_sample(model, params, input, n, target, 0)?
        .z_freq
        .ok_or_else(|| CssmError::config("frequency maps need the frequency SSM branch"))
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClasswiseAverage {
    Mean {
        z_ch: Option<Tensor>,
        z_freq: Option<Tensor>,
        /// Number of averaged maps.
        count: usize,
    },
    /// No sample had `label == prediction == n`.
    NoSuccessfulCases,
}

/// Mean of the maps whose sample was correctly classified as `n`.
/// `predictions` and `labels` are indexed by `ExplanationMap::sample_id`.
pub fn classwise_average(
    maps: &[ExplanationMap],
    predictions: &[usize],
    labels: &[usize],
    n: usize,
) -> Result<ClasswiseAverage> {
    if predictions.len() != labels.len() {
        return Err(CssmError::dim(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut sum_ch: Option<Tensor> = None;
    let mut sum_freq: Option<Tensor> = None;
    let mut count = 0;
    for map in maps {
        let id = map.sample_id;
        if id >= labels.len() {
            return Err(CssmError::config(format!(
                "map refers to unknown sample {id}"
            )));
        }
        if labels[id] != n || predictions[id] != n {
            continue;
        }
        for (sum, z) in [(&mut sum_ch, &map.z_ch), (&mut sum_freq, &map.z_freq)] {
            if let Some(z) = z {
                match sum {
                    Some(s) if s.shape() != z.shape() => {
                        return Err(CssmError::dim(format!(
                            "map shape {:?} differs from {:?}",
                            z.shape(),
                            s.shape()
                        )))
                    }
                    Some(s) => s.add_assign(z),
                    None => *sum = Some(z.clone()),
                }
            }
        }
        count += 1;
    }
    if count == 0 {
        return Ok(ClasswiseAverage::NoSuccessfulCases);
    }
    let inv = 1.0 / count as f64;
    for s in [&mut sum_ch, &mut sum_freq].into_iter().flatten() {
        s.scale(inv);
    }
    Ok(ClasswiseAverage::Mean {
        z_ch: sum_ch,
        z_freq: sum_freq,
        count,
    })
}
