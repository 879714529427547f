//! Confusion-matrix metrics and ranking metrics for class-probability rows.

use serde::{Deserialize, Serialize};

use crate::error::{CssmError, Result};

/// Tolerance on row sums when checking that scores are probabilities.
const SIMPLEX_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    /// `[n_samples x N]` probability rows.
    pub scores: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl PredictionSet {
    pub fn new(scores: Vec<Vec<f64>>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(CssmError::dim(format!(
                "{} score rows for {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if n_classes < 2 {
            return Err(CssmError::config("need at least two classes"));
        }
        for (i, (row, &y)) in scores.iter().zip(&labels).enumerate() {
            if row.len() != n_classes {
                return Err(CssmError::dim(format!("row {i} has {} scores", row.len())));
            }
            if y >= n_classes {
                return Err(CssmError::config(format!(
                    "label {y} of sample {i} out of range"
                )));
            }
            let sum: f64 = row.iter().sum();
            if row.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) || (sum - 1.0).abs() > SIMPLEX_TOL
            {
                return Err(CssmError::config(format!(
                    "row {i} is not a probability vector"
                )));
            }
        }
        Ok(PredictionSet {
            scores,
            labels,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Arg-max decisions; ties go to the lowest class index.
    pub fn predictions(&self) -> Vec<usize> {
        self.scores
            .iter()
            .map(|r| crate::training::argmax(r))
            .collect()
    }
}

/// `2 TP / (2 TP + FP + FN)`; 0 when the class never occurs nor is predicted.
pub fn f1_from_counts(tp: u64, fp: u64, fn_: u64) -> f64 {
    let den = 2 * tp + fp + fn_;
    if den == 0 {
        0.0
    } else {
        (2 * tp) as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionReport {
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    pub per_class_f1: Vec<f64>,
    pub macro_f1: f64,
}

pub fn confusion_matrix(labels: &[usize], preds: &[usize], n: usize) -> Vec<Vec<u64>> {
    let mut c = vec![vec![0u64; n]; n];
    for (&y, &p) in labels.iter().zip(preds) {
        c[y][p] += 1;
    }
    c
}

pub fn f1_from_confusion(c: &[Vec<u64>]) -> (Vec<f64>, f64) {
    let n = c.len();
    let per: Vec<f64> = (0..n)
        .map(|k| {
            let tp = c[k][k];
            let fn_: u64 = c[k].iter().sum::<u64>() - tp;
            let fp: u64 = (0..n).map(|j| c[j][k]).sum::<u64>() - tp;
            if tp + fn_ == 0 {
                log::warn!("class {k} has no support; its F1 is reported as 0");
            }
            f1_from_counts(tp, fp, fn_)
        })
        .collect();
    let macro_f1 = per.iter().sum::<f64>() / n as f64;
    (per, macro_f1)
}

pub fn confusion_and_f1(p: &PredictionSet) -> ConfusionReport {
    let confusion = confusion_matrix(&p.labels, &p.predictions(), p.n_classes);
    let (per_class_f1, macro_f1) = f1_from_confusion(&confusion);
    ConfusionReport {
        confusion,
        per_class_f1,
        macro_f1,
    }
}

/// `(p_o - p_e) / (1 - p_e)` with marginal-product chance agreement.
pub fn cohens_kappa(c: &[Vec<u64>]) -> Result<f64> {
    let n = c.len();
    let total: u64 = c.iter().flatten().sum();
    if total == 0 {
        return Err(CssmError::config("kappa of an empty confusion matrix"));
    }
    let t = total as f64;
    let po = (0..n).map(|k| c[k][k]).sum::<u64>() as f64 / t;
    let pe: f64 = (0..n)
        .map(|k| {
            let row: u64 = c[k].iter().sum();
            let col: u64 = (0..n).map(|j| c[j][k]).sum();
            (row as f64 / t) * (col as f64 / t)
        })
        .sum();
    if (1.0 - pe).abs() < 1e-15 {
        log::warn!("kappa undefined when chance agreement is 1; reporting 0");
        return Ok(0.0);
    }
    Ok((po - pe) / (1.0 - pe))
}

/// Indices sorted by score, with tie groups as `(start, end)` ranges.
fn tie_groups(scores: &[f64]) -> (Vec<usize>, Vec<(usize, usize)>) {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut groups = Vec::new();
    let mut s = 0;
    while s < idx.len() {
        let mut e = s + 1;
        while e < idx.len() && scores[idx[e]] == scores[idx[s]] {
            e += 1;
        }
        groups.push((s, e));
        s = e;
    }
    (idx, groups)
}

/// Mann-Whitney AUROC with midranks for ties; `None` without both classes.
pub fn auroc_binary(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let (idx, groups) = tie_groups(scores);
    let mut rank_sum = 0.0;
    for (s, e) in groups {
        // 1-based ranks s+1..=e share their mean
        let mid = (s + 1 + e) as f64 / 2.0;
        rank_sum += mid * idx[s..e].iter().filter(|&&i| positive[i]).count() as f64;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Step-wise average precision `sum_k (R_k - R_(k-1)) P_k` over descending
/// score thresholds, tied scores entering together; `None` without positives.
pub fn average_precision(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    if n_pos == 0 {
        return None;
    }
    let (idx, groups) = tie_groups(scores);
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut ap = 0.0;
    for &(s, e) in groups.iter().rev() {
        let hits = idx[s..e].iter().filter(|&&i| positive[i]).count();
        tp += hits;
        seen += e - s;
        if hits > 0 {
            ap += (hits as f64 / n_pos as f64) * (tp as f64 / seen as f64);
        }
    }
    Some(ap)
}

fn one_vs_rest(p: &PredictionSet, k: usize) -> (Vec<f64>, Vec<bool>) {
    (
        p.scores.iter().map(|r| r[k]).collect(),
        p.labels.iter().map(|&y| y == k).collect(),
    )
}

fn macro_over_classes(
    p: &PredictionSet,
    metric: &str,
    f: impl Fn(&[f64], &[bool]) -> Option<f64>,
) -> f64 {
    let vals: Vec<f64> = (0..p.n_classes)
        .filter_map(|k| {
            let (s, y) = one_vs_rest(p, k);
            let v = f(&s, &y);
            if v.is_none() {
                log::warn!("{metric}: class {k} lacks positives or negatives and is skipped");
            }
            v
        })
        .collect();
    if vals.is_empty() {
        return f64::NAN;
    }
    100.0 * vals.iter().sum::<f64>() / vals.len() as f64
}

/// Percent. Two classes: the binary AUROC of class 1; otherwise the mean of
/// one-vs-rest AUROCs over classes present in the labels.
pub fn auroc_macro(p: &PredictionSet) -> f64 {
    if p.n_classes == 2 {
        let (s, y) = one_vs_rest(p, 1);
        return auroc_binary(&s, &y).map_or(f64::NAN, |v| 100.0 * v);
    }
    macro_over_classes(p, "AUROC", auroc_binary)
}

/// Percent; mean of one-vs-rest average precisions.
pub fn auprc_macro(p: &PredictionSet) -> f64 {
    macro_over_classes(p, "AUPRC", average_precision)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Percent.
    pub accuracy: f64,
    /// Percent.
    pub macro_f1: f64,
    /// Percent.
    pub auroc_macro: f64,
    /// Percent.
    pub auprc_macro: f64,
    pub kappa: f64,
    pub per_class_f1: Vec<f64>,
    pub confusion: Vec<Vec<u64>>,
    pub n_samples: usize,
}

pub fn evaluate(p: &PredictionSet) -> Result<MetricsReport> {
    if p.is_empty() {
        return Err(CssmError::config("cannot evaluate an empty prediction set"));
    }
    let cr = confusion_and_f1(p);
    let total: u64 = cr.confusion.iter().flatten().sum();
    let trace: u64 = (0..p.n_classes).map(|k| cr.confusion[k][k]).sum();
    Ok(MetricsReport {
        accuracy: 100.0 * trace as f64 / total as f64,
        macro_f1: 100.0 * cr.macro_f1,
        auroc_macro: auroc_macro(p),
        auprc_macro: auprc_macro(p),
        kappa: cohens_kappa(&cr.confusion)?,
        per_class_f1: cr.per_class_f1,
        confusion: cr.confusion,
        n_samples: p.len(),
    })
}

/// Metrics of raw logit rows, converted to probabilities by softmax.
pub fn evaluate_logits(
    logits: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
) -> Result<MetricsReport> {
    let probs = logits
        .iter()
        .map(|l| crate::cortical_blocks::softmax(l))
        .collect();
    evaluate(&PredictionSet::new(probs, labels.to_vec(), n_classes)?)
}

pub const REPORT_CSV_HEADER: &str = "fold,accuracy,macro_f1,auroc,auprc,kappa";

/// One CSV row per `(fold label, report)`.
pub fn reports_csv(rows: &[(String, &MetricsReport)]) -> String {
    let mut s = format!("{REPORT_CSV_HEADER}\n");
    for (fold, r) in rows {
        s.push_str(&format!(
            "{fold},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
            r.accuracy, r.macro_f1, r.auroc_macro, r.auprc_macro, r.kappa
        ));
    }
    s
}
