//! Run configuration documents.

use std::path::{Path, PathBuf};

use cssm_core::cortical_blocks::ModelConfig;
use cssm_core::explain::ScoreTarget;
use cssm_core::signal_io::SyntheticSpec;
use cssm_core::training::{Precision, TrainHyper};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    /// Fold indices to run; all `k` when absent.
    #[serde(default)]
    pub folds: Option<Vec<usize>>,
}

fn default_k() -> usize {
    4
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            k: default_k(),
            seed: 0,
            folds: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Target SNRs of the noise-degradation sweep.
    #[serde(default)]
    pub snr_db: Vec<f64>,
    #[serde(default = "default_snr_band")]
    pub snr_band: (f64, f64),
    /// Sampling rates of the sequence-length sweep; each retrains the fold.
    #[serde(default)]
    pub target_fs: Vec<f64>,
}

fn default_snr_band() -> (f64, f64) {
    (8.0, 13.0)
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            snr_db: Vec::new(),
            snr_band: default_snr_band(),
            target_fs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainConfig {
    #[serde(default)]
    pub target: ScoreTarget,
    /// Index into the fold's test set; every test sample when absent.
    #[serde(default)]
    pub sample: Option<usize>,
    #[serde(default = "yes")]
    pub classwise: bool,
    #[serde(default = "yes")]
    pub heatmaps: bool,
}

fn yes() -> bool {
    true
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            target: ScoreTarget::default(),
            sample: None,
            classwise: true,
            heatmaps: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset file; relative paths resolve against the config file.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub synth: Option<SyntheticSpec>,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub train: TrainHyper,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub explain: ExplainConfig,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub folds: Option<Vec<usize>>,
    pub precision: Option<Precision>,
    pub dataset: Option<PathBuf>,
    pub sample: Option<usize>,
    pub epochs: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| CliError::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        if let Some(d) = &cfg.dataset {
            if d.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.dataset = Some(base.join(d));
            }
        }
        Ok(cfg)
    }

    /// `--seed` sets the synthesis, split and training seeds together.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            if let Some(sy) = &mut self.synth {
                sy.seed = s;
            }
            self.split.seed = s;
            self.train.seed = s;
        }
        if let Some(f) = &o.folds {
            self.split.folds = Some(f.clone());
        }
        if let Some(p) = o.precision {
            self.train.precision = p;
        }
        if let Some(d) = &o.dataset {
            self.dataset = Some(d.clone());
        }
        if let Some(i) = o.sample {
            self.explain.sample = Some(i);
        }
        if let Some(e) = o.epochs {
            self.train.epochs = e;
        }
    }

    pub fn model(&self) -> CliResult<&ModelConfig> {
        self.model
            .as_ref()
            .ok_or_else(|| CliError::Usage("config has no `model` section".into()))
    }

    pub fn dataset_path(&self) -> CliResult<&Path> {
        self.dataset.as_deref().ok_or_else(|| {
            CliError::Usage("no dataset given (config `dataset` or --dataset)".into())
        })
    }

    /// Selected fold indices, checked against `k`.
    pub fn folds(&self) -> CliResult<Vec<usize>> {
        let k = self.split.k;
        let folds = self.split.folds.clone().unwrap_or_else(|| (0..k).collect());
        if let Some(f) = folds.iter().find(|&&f| f >= k) {
            return Err(CliError::Usage(format!(
                "fold {f} out of range for k = {k}"
            )));
        }
        if folds.is_empty() {
            return Err(CliError::Usage("empty fold selection".into()));
        }
        Ok(folds)
    }
}
