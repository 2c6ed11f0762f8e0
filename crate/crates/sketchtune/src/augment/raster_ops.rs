//! The four background-preserving raster operations, with bit-exact
//! parameter handling: rotation with white padding, separable Gaussian
//! blur, strokes-only Gaussian noise, and binarize-then-dilate thickening.

use image::{Rgb, RgbImage};
use ndarray::Array2;
use rand_distr::{Distribution, Normal};

use super::AugmentError;
use crate::raster::luma;

/// Rotates about the image center with bilinear resampling; regions exposed
/// by the rotation are filled with pure white.
pub fn rotate_white_pad(img: &RgbImage, degrees: f64) -> RgbImage {
    let (w, h) = img.dimensions();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let theta = degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    let mut out = RgbImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            // Inverse mapping: rotate the output coordinate by -theta.
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let sx = cx + cos * dx + sin * dy;
            let sy = cy - sin * dx + cos * dy;
            out.put_pixel(x, y, bilinear_white(img, sx, sy));
        }
    }
    out
}

fn bilinear_white(img: &RgbImage, x: f64, y: f64) -> Rgb<u8> {
    let (w, h) = img.dimensions();
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let sample = |xi: f64, yi: f64| -> [f64; 3] {
        if xi < 0.0 || yi < 0.0 || xi >= w as f64 || yi >= h as f64 {
            [255.0, 255.0, 255.0]
        } else {
            let p = img.get_pixel(xi as u32, yi as u32);
            [p.0[0] as f64, p.0[1] as f64, p.0[2] as f64]
        }
    };
    let p00 = sample(x0, y0);
    let p10 = sample(x0 + 1.0, y0);
    let p01 = sample(x0, y0 + 1.0);
    let p11 = sample(x0 + 1.0, y0 + 1.0);
    let mut out = [0u8; 3];
    for c in 0..3 {
        let top = p00[c] * (1.0 - fx) + p10[c] * fx;
        let bot = p01[c] * (1.0 - fx) + p11[c] * fx;
        let v = top * (1.0 - fy) + bot * fy;
        out[c] = v.round().clamp(0.0, 255.0) as u8;
    }
    Rgb(out)
}

/// Normalized 1-D Gaussian taps for an odd kernel size.
pub fn gaussian_kernel(k: usize, sigma: f64) -> Vec<f64> {
    let half = (k / 2) as isize;
    let mut taps: Vec<f64> = (-half..=half)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= s;
    }
    taps
}

/// Separable Gaussian blur of one float plane with reflected borders
/// (index -1 maps back to 0). Exact float path; the image wrapper rounds.
pub fn gaussian_blur_plane(plane: &Array2<f64>, k: usize, sigma: f64) -> Array2<f64> {
    let taps = gaussian_kernel(k, sigma);
    let half = (k / 2) as isize;
    let (h, w) = plane.dim();
    let reflect = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let mut i = i;
        while i < 0 || i >= n {
            if i < 0 {
                i = -i - 1;
            }
            if i >= n {
                i = 2 * n - 1 - i;
            }
        }
        i as usize
    };
    let mut tmp = Array2::<f64>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ti, t) in taps.iter().enumerate() {
                let sx = reflect(x as isize + ti as isize - half, w);
                acc += t * plane[(y, sx)];
            }
            tmp[(y, x)] = acc;
        }
    }
    let mut out = Array2::<f64>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ti, t) in taps.iter().enumerate() {
                let sy = reflect(y as isize + ti as isize - half, h);
                acc += t * tmp[(sy, x)];
            }
            out[(y, x)] = acc;
        }
    }
    out
}

/// Gaussian blur of all three channels; output clamped to [0, 255].
pub fn gaussian_blur(img: &RgbImage, k: usize, sigma: f64) -> Result<RgbImage, AugmentError> {
    if k % 2 == 0 || k < 3 {
        return Err(AugmentError::InvalidKernel(k));
    }
    if sigma <= 0.0 {
        return Err(AugmentError::InvalidSigma(sigma));
    }
    let (w, h) = img.dimensions();
    let mut out = RgbImage::new(w, h);
    for c in 0..3 {
        let plane = Array2::from_shape_fn((h as usize, w as usize), |(y, x)| {
            img.get_pixel(x as u32, y as u32).0[c] as f64
        });
        let blurred = gaussian_blur_plane(&plane, k, sigma);
        for y in 0..h {
            for x in 0..w {
                let px = out.get_pixel_mut(x, y);
                px.0[c] = blurred[(y as usize, x as usize)].round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Ok(out)
}

/// Adds zero-mean Gaussian noise only to stroke pixels (luma below
/// `stroke_threshold`); background pixels are bit-identical to the input.
/// One draw per stroke pixel, applied to all channels, then rounded and
/// clamped to [0, 255].
pub fn stroke_noise(
    img: &RgbImage,
    sigma: f64,
    stroke_threshold: u8,
    seed: u64,
) -> Result<RgbImage, AugmentError> {
    if sigma <= 0.0 {
        return Err(AugmentError::InvalidSigma(sigma));
    }
    let mut rng = crate::nn::seeded_rng(seed, "stroke-noise");
    let normal = Normal::new(0.0, sigma).unwrap();
    let mut out = img.clone();
    let (w, h) = img.dimensions();
    for y in 0..h {
        for x in 0..w {
            let px = img.get_pixel(x, y);
            if luma(px) < stroke_threshold as f64 {
                let d = normal.sample(&mut rng);
                let p = out.get_pixel_mut(x, y);
                for c in 0..3 {
                    p.0[c] = (px.0[c] as f64 + d).round().clamp(0.0, 255.0) as u8;
                }
            }
        }
    }
    Ok(out)
}

/// Offsets of the 3x3 elliptical structuring element (the cross).
pub const ELLIPTIC_3X3: [(i32, i32); 5] = [(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)];

/// Binarizes at `threshold` (luma), then dilates the dark stroke set by the
/// 3x3 elliptical element for one iteration. Output is binary black/white.
pub fn thicken_lines(img: &RgbImage, threshold: u8) -> RgbImage {
    let (w, h) = img.dimensions();
    let stroke = |x: i32, y: i32| -> bool {
        if x < 0 || y < 0 || x >= w as i32 || y >= h as i32 {
            return false;
        }
        luma(img.get_pixel(x as u32, y as u32)) < threshold as f64
    };
    let mut out = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
    for y in 0..h as i32 {
        for x in 0..w as i32 {
            let hit = ELLIPTIC_3X3
                .iter()
                .any(|(dx, dy)| stroke(x - dx, y - dy));
            if hit {
                out.put_pixel(x as u32, y as u32, Rgb([0, 0, 0]));
            }
        }
    }
    out
}

/// Number of stroke (luma < threshold) pixels; dilation never decreases it.
pub fn stroke_count(img: &RgbImage, threshold: u8) -> usize {
    img.pixels().filter(|p| luma(p) < threshold as f64).count()
}
