use crate::error::{CssmError, Result};

/// One multichannel recording: `[M electrodes x T samples]`, row-major
/// (electrode-major).
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTensor {
    n_electrodes: usize,
    n_times: usize,
    data: Vec<f64>,
    pub fs: f64,
    pub electrode_labels: Option<Vec<String>>,
}

impl SignalTensor {
    pub fn new(n_electrodes: usize, n_times: usize, data: Vec<f64>, fs: f64) -> Result<Self> {
        if n_electrodes < 1 || n_times < 2 {
            return Err(CssmError::dim(format!(
                "signal needs M >= 1 and T >= 2, got M={n_electrodes}, T={n_times}"
            )));
        }
        if data.len() != n_electrodes * n_times {
            return Err(CssmError::dim(format!(
                "signal data has {} values, expected {}x{}",
                data.len(),
                n_electrodes,
                n_times
            )));
        }
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(CssmError::config(format!(
                "sampling rate must be > 0, got {fs}"
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(CssmError::Numerical(format!(
                "non-finite signal value at electrode {}, sample {}",
                i / n_times,
                i % n_times
            )));
        }
        Ok(SignalTensor {
            n_electrodes,
            n_times,
            data,
            fs,
            electrode_labels: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n_electrodes {
            return Err(CssmError::dim(format!(
                "{} electrode labels for {} electrodes",
                labels.len(),
                self.n_electrodes
            )));
        }
        self.electrode_labels = Some(labels);
        Ok(self)
    }

    pub fn n_electrodes(&self) -> usize {
        self.n_electrodes
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.data[m * self.n_times..(m + 1) * self.n_times]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_times)
    }

    /// Electrode label, falling back to `E<index>`.
    pub fn label(&self, m: usize) -> String {
        match &self.electrode_labels {
            Some(l) => l[m].clone(),
            None => format!("E{m}"),
        }
    }
}

/// A labeled collection of recordings with uniform dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub samples: Vec<SignalTensor>,
    pub labels: Vec<usize>,
    pub groups: Vec<u32>,
    pub n_classes: usize,
}

impl LabeledDataset {
    pub fn new(
        samples: Vec<SignalTensor>,
        labels: Vec<usize>,
        groups: Vec<u32>,
        n_classes: usize,
    ) -> Result<Self> {
        let ds = LabeledDataset {
            samples,
            labels,
            groups,
            n_classes,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.len() != self.labels.len() || self.samples.len() != self.groups.len() {
            return Err(CssmError::dim(format!(
                "{} samples, {} labels, {} group keys",
                self.samples.len(),
                self.labels.len(),
                self.groups.len()
            )));
        }
        if self.n_classes < 1 {
            return Err(CssmError::config("dataset needs at least one class"));
        }
        if let Some((i, l)) = self
            .labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l >= self.n_classes)
        {
            return Err(CssmError::config(format!(
                "label {l} of sample {i} outside [0, {})",
                self.n_classes
            )));
        }
        if let Some(first) = self.samples.first() {
            for (i, s) in self.samples.iter().enumerate() {
                if s.n_electrodes() != first.n_electrodes()
                    || s.n_times() != first.n_times()
                    || s.fs != first.fs
                {
                    return Err(CssmError::dim(format!(
                        "sample {i} is {}x{} @ {} Hz, sample 0 is {}x{} @ {} Hz",
                        s.n_electrodes(),
                        s.n_times(),
                        s.fs,
                        first.n_electrodes(),
                        first.n_times(),
                        first.fs
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `(M, T, fs)` of the samples, if any.
    pub fn dims(&self) -> Option<(usize, usize, f64)> {
        self.samples
            .first()
            .map(|s| (s.n_electrodes(), s.n_times(), s.fs))
    }

    /// Distinct group keys in ascending order.
    pub fn distinct_groups(&self) -> Vec<u32> {
        let mut g = self.groups.clone();
        g.sort_unstable();
        g.dedup();
        g
    }

    /// Indices of samples whose group is in `groups`, in dataset order.
    pub fn indices_for_groups(&self, groups: &[u32]) -> Vec<usize> {
        let set: std::collections::HashSet<u32> = groups.iter().copied().collect();
        (0..self.len())
            .filter(|&i| set.contains(&self.groups[i]))
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            groups: indices.iter().map(|&i| self.groups[i]).collect(),
            n_classes: self.n_classes,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }
}
