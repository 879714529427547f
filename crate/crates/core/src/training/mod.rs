//! Reverse-mode gradients, cross-entropy, AdamW and the training loop.

mod checkpoint;
mod loss;
mod optim;
pub mod tape;
mod train;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use loss::{
    backward, batch_cross_entropy, batch_gradient, cross_entropy, cross_entropy_logits,
    SampleGradient,
};
pub use optim::{adamw_step, AdamWConfig, OptimState};
pub use tape::GradTape;
pub use train::{
    accuracy_of, argmax, history_csv, history_json, predict_logits, prepare_all, train,
    train_resumable, Checkpoint, EpochRecord, Precision, TrainHyper,
};
