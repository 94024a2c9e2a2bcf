//! Optimizer, checkpoints, configuration, the training loop, evaluation
//! and the scan benchmark.

pub mod adam;
pub mod bench;
pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod trainer;

pub use adam::{adam_update, Adam, AdamConfig};
pub use bench::{benchmark_scan, BenchRow};
pub use checkpoint::Checkpoint;
pub use config::{DataSource, TrainConfig};
pub use eval::{evaluate_samples, infer, EvalResult};
pub use trainer::{MetricRecord, TrainOutcome, Trainer};
