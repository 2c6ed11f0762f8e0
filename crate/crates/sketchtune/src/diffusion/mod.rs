//! Conditional denoising diffusion: schedule, forward noising, reverse
//! sampling with per-step log-probabilities, and the noise-prediction
//! training objective.

pub mod conditioning;
pub mod loss;
pub mod model;
pub mod sampler;
pub mod schedule;
mod train;

pub use conditioning::{CondEmbedding, HashedBagEncoder, TextEncoder};
pub use loss::{denoising_loss, denoising_loss_on_tape};
pub use model::{timestep_embedding, DenoiserConfig, DenoiserModel, ToyDenoiser};
pub use sampler::{
    add_noise, analytic_posterior_mean, posterior_mean_from_eps, recompute_log_probs,
    reverse_step, sample, standard_normal, step_log_prob, DiffusionTrajectory, StepStat,
};
pub use schedule::{NoiseSchedule, ScheduleKind};
pub use train::{train_unet, UnetEpoch, UnetTrainConfig, UnetTrainOutput};

#[derive(Debug, thiserror::Error)]
pub enum DiffusionError {
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("step {t} out of range 1..={t_steps}")]
    StepOutOfRange { t: usize, t_steps: usize },
    #[error("degenerate variance: zero variance away from the mean")]
    DegenerateVariance,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Checkpoint(#[from] crate::checkpoint::CheckpointError),
}
