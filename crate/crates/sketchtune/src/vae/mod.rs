//! Autoencoder fine-tuning: the hybrid reconstruction/perceptual loss
//! family, the toy encoder/decoder, and the training loop with its
//! KL-collapse ablation knobs.

mod extractor;
mod loss;
mod model;
mod train;

pub use extractor::PerceptualExtractor;
pub use loss::{
    kl_loss, kl_on_tape, lpips_loss, lpips_on_tape, recon_loss, recon_on_tape, vae_loss,
    vae_loss_on_tape, LatentPosterior, ReconNorm, VaeLossBreakdown, VaeLossConfig, VaeLossNodes,
};
pub use model::{ToyVae, VaeModelConfig};
pub use train::{
    evaluate_metrics, trace_to_csv, train_vae, EpochMetrics, VaeTrainConfig, VaeTrainOutput,
};

#[derive(Debug, thiserror::Error)]
pub enum VaeError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("perceptual extractor unavailable: {0}")]
    ExtractorUnavailable(String),
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Checkpoint(#[from] crate::checkpoint::CheckpointError),
}
