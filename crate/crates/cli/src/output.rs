//! Output-directory layout and small file helpers.

use std::path::{Path, PathBuf};

use cssm_core::metrics_eval::MetricsReport;
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// `<out>/{config.json, checkpoints/, history.csv, metrics/, maps/}`.
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> CliResult<Self> {
        mkdir(root)?;
        Ok(Layout {
            root: root.to_path_buf(),
        })
    }

    fn sub(&self, name: &str) -> CliResult<PathBuf> {
        let p = self.root.join(name);
        mkdir(&p)?;
        Ok(p)
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn history(&self) -> PathBuf {
        self.root.join("history.csv")
    }

    pub fn checkpoint(&self, fold: usize) -> CliResult<PathBuf> {
        Ok(self.sub("checkpoints")?.join(format!("fold{fold}.ckpt")))
    }

    pub fn existing_checkpoint(&self, fold: usize) -> PathBuf {
        self.root
            .join("checkpoints")
            .join(format!("fold{fold}.ckpt"))
    }

    pub fn metrics(&self) -> CliResult<PathBuf> {
        self.sub("metrics")
    }

    pub fn maps(&self) -> CliResult<PathBuf> {
        self.sub("maps")
    }
}

pub fn mkdir(p: &Path) -> CliResult<()> {
    std::fs::create_dir_all(p).map_err(|e| CliError::io(p, e))
}

/// Writes through a sibling temporary file so readers never see a torn file.
pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    write_file(path, s.as_bytes())
}

/// The five headline metrics in table order.
pub const METRIC_NAMES: [&str; 5] = ["accuracy", "macro_f1", "auroc", "auprc", "kappa"];

pub fn metric_values(r: &MetricsReport) -> [f64; 5] {
    [
        r.accuracy,
        r.macro_f1,
        r.auroc_macro,
        r.auprc_macro,
        r.kappa,
    ]
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricSummary {
    pub mean: [f64; 5],
    pub std: [f64; 5],
}

pub fn summarize(reports: &[&MetricsReport]) -> MetricSummary {
    let mut mean = [0.0; 5];
    let mut std = [0.0; 5];
    for i in 0..5 {
        let vals: Vec<f64> = reports.iter().map(|r| metric_values(r)[i]).collect();
        (mean[i], std[i]) = mean_std(&vals);
    }
    MetricSummary { mean, std }
}
