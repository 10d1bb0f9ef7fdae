//! Training, testing, metrics and the experiment harnesses.

mod config;
mod dd;
mod gradcheck;
mod memory;
mod metrics;
mod run;
mod sweep;

pub use config::{BoundRule, TrainConfig};
pub use gradcheck::{
    gradcheck_instance, gradient_check, loglog_slope, GradGroup, GradcheckConfig, GradcheckReport, GradcheckRow,
    GroupSlopes,
};
pub use memory::{memory_report, pass_memory, MemoryReport, MemoryRow};
pub use metrics::{mean_ssim, mse, psnr, psnr_from_mse, ssim, SsimConfig};
pub use run::{
    minibatch_sample, stream_rng, test, train, BatchResult, Metrics, PairedSet, RoundRecord, TestOutcome, TrainOutcome,
    TrainedModel,
};
pub use sweep::{sweep, SweepData, SweepRow};
