//! WGAN-GP training with progressive growing.

mod checkpoint;
mod config;
mod losses;
mod schedule;
mod trainer;

pub(crate) use checkpoint::{Reader, Writer};
pub use checkpoint::{Checkpoint, Progress, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::TrainingConfig;
pub use losses::{discriminator_loss, drift_penalty, generator_loss, gradient_penalty, interpolate};
pub use schedule::{schedule_state, segments, Phase, StageState};
pub use trainer::{run_training, StepMetrics, Trainer, LATEST_CHECKPOINT, METRICS_FILE, METRICS_HEADER};
