//! Sketch diffusion training toolkit.
//!
//! A desk-scale, fully deterministic pipeline for sketch generation
//! research: corpus tooling (manifests, validation, augmentation, splits),
//! autoencoder fine-tuning with a hybrid reconstruction/perceptual loss,
//! conditional denoising-diffusion training, policy-gradient fine-tuning
//! driven by a VQA reward, and an evaluation harness (FID, CLIP-style
//! alignment, QA faithfulness).

pub mod augment;
pub mod data;
pub mod fsutil;
pub mod nn;
pub mod raster;
pub mod checkpoint;
pub mod diffusion;
pub mod tensor;
pub mod vae;
