//! Shared raster helpers: RGB/array conversions, luma, PNG I/O, and the
//! few drawing primitives the synthetic corpus and plots need.

use std::path::Path;

use image::{Rgb, RgbImage};
use ndarray::{Array3, ArrayD};

/// ITU-R BT.601 luma of an RGB pixel, in [0, 255].
pub fn luma(px: &Rgb<u8>) -> f64 {
    0.299 * px.0[0] as f64 + 0.587 * px.0[1] as f64 + 0.114 * px.0[2] as f64
}

/// Grayscale plane in [0, 1] with shape `[1, H, W]`.
pub fn image_to_gray_array(img: &RgbImage) -> ArrayD<f64> {
    let (w, h) = img.dimensions();
    let mut out = Array3::<f64>::zeros((1, h as usize, w as usize));
    for (x, y, px) in img.enumerate_pixels() {
        out[(0, y as usize, x as usize)] = luma(px) / 255.0;
    }
    out.into_dyn()
}

/// Renders a `[1, H, W]` or `[C, H, W]` array in [0, 1] to grayscale RGB,
/// clamping out-of-range values.
pub fn gray_array_to_image(arr: &ArrayD<f64>) -> RgbImage {
    let sh = arr.shape();
    assert!(sh.len() == 3, "expected [C, H, W]");
    let (h, w) = (sh[1], sh[2]);
    let mut img = RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            // Channel 0 carries the grayscale plane.
            let v = (arr[[0, y, x]].clamp(0.0, 1.0) * 255.0).round() as u8;
            img.put_pixel(x as u32, y as u32, Rgb([v, v, v]));
        }
    }
    img
}

/// Maps a diffusion-space tensor in roughly [-1, 1] to an image via
/// `(x + 1) / 2`, clamped.
pub fn diffusion_array_to_image(arr: &ArrayD<f64>) -> RgbImage {
    let mapped = arr.mapv(|v| ((v + 1.0) / 2.0).clamp(0.0, 1.0));
    gray_array_to_image(&mapped)
}

/// Inverse of [`diffusion_array_to_image`]'s range mapping for gray images.
pub fn image_to_diffusion_array(img: &RgbImage) -> ArrayD<f64> {
    image_to_gray_array(img).mapv(|v| v * 2.0 - 1.0)
}

pub fn load_png(path: impl AsRef<Path>) -> Result<RgbImage, image::ImageError> {
    Ok(image::open(path)?.to_rgb8())
}

pub fn save_png(img: &RgbImage, path: impl AsRef<Path>) -> Result<(), image::ImageError> {
    img.save_with_format(path, image::ImageFormat::Png)
}

/// Encodes to PNG bytes in memory (backends receive PNG bytes).
pub fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)
        .expect("in-memory PNG encode");
    buf.into_inner()
}

pub fn decode_png(bytes: &[u8]) -> Result<RgbImage, image::ImageError> {
    Ok(image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?.to_rgb8())
}

/// Solid-color image.
pub fn filled(size: u32, color: Rgb<u8>) -> RgbImage {
    RgbImage::from_pixel(size, size, color)
}

/// Draws a line with a square brush of the given radius.
pub fn draw_line(img: &mut RgbImage, x0: i32, y0: i32, x1: i32, y1: i32, color: Rgb<u8>, radius: i32) {
    let (mut x, mut y) = (x0, y0);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        stamp(img, x, y, color, radius);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn stamp(img: &mut RgbImage, cx: i32, cy: i32, color: Rgb<u8>, radius: i32) {
    let (w, h) = img.dimensions();
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let (x, y) = (cx + dx, cy + dy);
            if x >= 0 && y >= 0 && (x as u32) < w && (y as u32) < h {
                img.put_pixel(x as u32, y as u32, color);
            }
        }
    }
}

/// Ellipse outline (parametric sweep) with a square brush.
pub fn draw_ellipse(
    img: &mut RgbImage,
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    color: Rgb<u8>,
    radius: i32,
) {
    let steps = (8.0 * (rx.max(ry))).ceil().max(16.0) as usize;
    for i in 0..steps {
        let t = i as f64 / steps as f64 * std::f64::consts::TAU;
        let x = (cx + rx * t.cos()).round() as i32;
        let y = (cy + ry * t.sin()).round() as i32;
        stamp(img, x, y, color, radius);
    }
}

/// Filled axis-aligned disc.
pub fn fill_circle(img: &mut RgbImage, cx: i32, cy: i32, r: i32, color: Rgb<u8>) {
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                stamp(img, cx + dx, cy + dy, color, 0);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_roundtrip_preserves_values() {
        let mut img = filled(8, Rgb([255, 255, 255]));
        img.put_pixel(3, 4, Rgb([0, 0, 0]));
        let arr = image_to_gray_array(&img);
        assert_eq!(arr[[0, 4, 3]], 0.0);
        assert_eq!(arr[[0, 0, 0]], 1.0);
        let back = gray_array_to_image(&arr);
        assert_eq!(back.get_pixel(3, 4), &Rgb([0, 0, 0]));
        assert_eq!(back.get_pixel(0, 0), &Rgb([255, 255, 255]));
    }

    #[test]
    fn png_encode_decode_roundtrip() {
        let mut img = filled(16, Rgb([250, 250, 250]));
        draw_line(&mut img, 2, 2, 13, 13, Rgb([0, 0, 0]), 1);
        let bytes = encode_png(&img);
        let back = decode_png(&bytes).unwrap();
        assert_eq!(img, back);
    }
}
