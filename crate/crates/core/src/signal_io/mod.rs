//! Recordings, datasets, file formats, synthetic data and preprocessing.

mod dataset;
mod format;
mod preprocess;
mod split;
mod synth;

pub use dataset::{LabeledDataset, SignalTensor};
pub(crate) use format::write_atomic;
pub use format::{
    decode_dataset, encode_dataset, import_csv_dataset, load_dataset, parse_csv_table,
    save_dataset, DATASET_MAGIC, DATASET_VERSION,
};
pub use preprocess::{
    antialias_taps, band_powers, compute_snr, degrade_snr, downsample, DegradeStatus, Degraded,
};
pub use split::{kfold_groups, kfold_split, plan_split, FoldSplit, SplitPlan};
pub use synth::{generate_synthetic, SyntheticSpec};
