pub mod checkpoint;
pub mod metrics;
pub mod reinforce;
pub mod rng;
pub mod strategy;
pub mod trainer;

pub use checkpoint::Checkpoint;
pub use metrics::{MetricsRow, RunningAverage, SegmentRow};
pub use reinforce::{episode_return, loss_and_grad, reinforce_update, Diagnostics, LossConfig};
pub use rng::{stream, StreamKind};
pub use strategy::{strategy_registry, BatchKind, Strategy};
pub use trainer::{interval_checkpoint, resume_run, run_all_seeds, run_to_dir, seed_dir, BatchOutput, RunSummary, Trainer};
