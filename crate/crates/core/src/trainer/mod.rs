//! Supervised training from scratch: AdamW with decoupled weight decay,
//! linear warmup plus cosine schedule, layer-wise learning-rate decay,
//! label smoothing and drop path.

mod loss;
mod optim;
mod schedule;
mod train;

pub use loss::{apply_drop_path, smoothed_cross_entropy};
pub use optim::{adamw_step, AdamWConfig, OptimizerState, ParamHyper};
pub use schedule::{layer_lr_scale, lr_at};
pub use train::{
    derive_seed, evaluate, param_hypers, predict_all, save_metrics_csv, train, train_with, write_metrics_csv,
    EpochMetrics, EvalReport, TrainConfig, TrainOutcome,
};
