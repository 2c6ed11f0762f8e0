//! Background-preserving augmentation pipeline.
//!
//! Positives receive the full seven-augmentation menu (two rotations, weak
//! and strong blur, weak and strong strokes-only noise, line thickening);
//! negatives contain no strokes, so thickening is omitted and they receive
//! six. Captions and QA pairs are copied verbatim; children reference their
//! parent through provenance tags.

mod raster_ops;

use std::path::Path;

use image::RgbImage;
use rayon::prelude::*;

pub use raster_ops::{
    gaussian_blur, gaussian_blur_plane, gaussian_kernel, rotate_white_pad, stroke_count,
    stroke_noise, thicken_lines, ELLIPTIC_3X3,
};

use crate::data::{DataError, DatasetManifest, Polarity, Provenance, SketchRecord};
use crate::fsutil;
use crate::nn::derive_seed;
use crate::raster;

#[derive(Debug, thiserror::Error)]
pub enum AugmentError {
    #[error("blur kernel size must be odd and >= 3, got {0}")]
    InvalidKernel(usize),
    #[error("sigma must be positive, got {0}")]
    InvalidSigma(f64),
    #[error("record {0} is already augmented; only originals can be augmented")]
    AlreadyAugmented(String),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// One operation from the augmentation menu with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Augmentation {
    /// Rotation about the center with white padding; degrees in {-15, +15}.
    Rotate { degrees: f64 },
    /// Gaussian blur; (k, sigma) in {(3, 0.8), (5, 1.6)}.
    Blur { kernel: usize, sigma: f64 },
    /// Zero-mean Gaussian noise on stroke pixels only; sigma in {8, 16}.
    StrokeNoise { sigma: f64 },
    /// Binarization followed by one dilation with the 3x3 elliptical kernel.
    Thicken,
}

/// Thresholds the menu shares. The midpoint 128 is used for both the stroke
/// mask and binarization; neither is specified upstream, so they stay
/// configurable.
#[derive(Debug, Clone, Copy)]
pub struct AugmentParams {
    pub stroke_threshold: u8,
    pub binarize_threshold: u8,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            stroke_threshold: 128,
            binarize_threshold: 128,
        }
    }
}

/// The menu applied to a record of the given polarity, as (tag, op) pairs.
pub fn menu(polarity: Polarity) -> Vec<(&'static str, Augmentation)> {
    let mut out = vec![
        ("rotate-15", Augmentation::Rotate { degrees: -15.0 }),
        ("rotate+15", Augmentation::Rotate { degrees: 15.0 }),
        ("blur-weak", Augmentation::Blur { kernel: 3, sigma: 0.8 }),
        ("blur-strong", Augmentation::Blur { kernel: 5, sigma: 1.6 }),
        ("noise-weak", Augmentation::StrokeNoise { sigma: 8.0 }),
        ("noise-strong", Augmentation::StrokeNoise { sigma: 16.0 }),
    ];
    if polarity == Polarity::Positive {
        out.push(("thicken", Augmentation::Thicken));
    }
    out
}

/// Applies one augmentation. Pure function of (op, image, seed, params).
pub fn apply(
    op: &Augmentation,
    img: &RgbImage,
    seed: u64,
    params: &AugmentParams,
) -> Result<RgbImage, AugmentError> {
    match op {
        Augmentation::Rotate { degrees } => Ok(rotate_white_pad(img, *degrees)),
        Augmentation::Blur { kernel, sigma } => gaussian_blur(img, *kernel, *sigma),
        Augmentation::StrokeNoise { sigma } => {
            stroke_noise(img, *sigma, params.stroke_threshold, seed)
        }
        Augmentation::Thicken => Ok(thicken_lines(img, params.binarize_threshold)),
    }
}

/// Augments one original record, returning the child records with their
/// rendered images. Seven children for positives, six for negatives.
pub fn augment_record(
    rec: &SketchRecord,
    img: &RgbImage,
    seed: u64,
    params: &AugmentParams,
) -> Result<Vec<(SketchRecord, RgbImage)>, AugmentError> {
    if !rec.provenance.is_original() {
        return Err(AugmentError::AlreadyAugmented(rec.id.clone()));
    }
    let mut out = Vec::new();
    for (tag, op) in menu(rec.polarity) {
        let child_seed = derive_seed(seed, &format!("augment/{}/{tag}", rec.id));
        let child_img = apply(&op, img, child_seed, params)?;
        let child_id = format!("{}__{tag}", rec.id);
        let mut child = rec.clone();
        child.id = child_id.clone();
        child.image_path = format!("images/{child_id}.png");
        child.provenance = Provenance::Augmented {
            parent: rec.id.clone(),
            tag: tag.to_string(),
        };
        out.push((child, child_img));
    }
    Ok(out)
}

/// Augments every original in `manifest`, writing child images under
/// `out_dir/images/` and returning the combined manifest (originals plus
/// children), based at `out_dir`.
pub fn augment_manifest(
    manifest: &DatasetManifest,
    out_dir: &Path,
    seed: u64,
    params: &AugmentParams,
) -> Result<DatasetManifest, AugmentError> {
    let images_dir = out_dir.join("images");
    std::fs::create_dir_all(&images_dir).map_err(|source| DataError::Io {
        path: images_dir.display().to_string(),
        source,
    })?;

    let families: Result<Vec<Vec<SketchRecord>>, AugmentError> = manifest
        .records
        .par_iter()
        .map(|rec| {
            if !rec.provenance.is_original() {
                return Err(AugmentError::AlreadyAugmented(rec.id.clone()));
            }
            let img = raster::load_png(manifest.resolve_image(rec))?;
            let children = augment_record(rec, &img, seed, params)?;
            let mut family = Vec::with_capacity(children.len() + 1);

            // Re-point the original's image relative to the output manifest.
            let mut original = rec.clone();
            let abs = manifest.resolve_image(rec);
            original.image_path = fsutil::relpath(out_dir, &abs).display().to_string();
            family.push(original);

            for (child, child_img) in children {
                let path = images_dir.join(format!("{}.png", child.id));
                raster::save_png(&child_img, &path)?;
                family.push(child);
            }
            Ok(family)
        })
        .collect();

    let mut records: Vec<SketchRecord> = families?.into_iter().flatten().collect();
    records.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(DatasetManifest::new(records).with_base_dir(out_dir))
}
