//! Deterministic PNG dumps of masks, densities, scalar maps and RGB images.

use std::path::Path;

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ExtendedColorType, ImageEncoder};

use crate::error::{PcfError, Result};
use crate::grid::{Grid, Mask};
use crate::io::write_atomic;
use crate::scalar::Real;

fn encode(width: usize, height: usize, data: &[u8], color: ExtendedColorType) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let enc =
        PngEncoder::new_with_quality(&mut out, CompressionType::Default, FilterType::Adaptive);
    enc.write_image(data, width as u32, height as u32, color)?;
    Ok(out)
}

/// Binary mask as 8-bit grayscale (`255` set, `0` clear).
pub fn write_mask(path: impl AsRef<Path>, mask: &Mask) -> Result<()> {
    let data: Vec<u8> = mask
        .as_slice()
        .iter()
        .map(|&b| if b { 255 } else { 0 })
        .collect();
    write_atomic(
        path.as_ref(),
        &encode(mask.width(), mask.height(), &data, ExtendedColorType::L8)?,
    )
}

/// Reads any PNG as a mask; non-zero luma means set.
pub fn read_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let img = image::open(path)?.into_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Mask::from_vec(w, h, img.into_raw().into_iter().map(|v| v != 0).collect())
}

/// Counts as 16-bit grayscale, clamped at 65535.
pub fn write_counts16(path: impl AsRef<Path>, counts: &Grid<u32>) -> Result<()> {
    let mut data = Vec::with_capacity(counts.len() * 2);
    for &c in counts.as_slice() {
        // PNG stores 16-bit samples big-endian; the encoder expects native u16 bytes.
        data.extend_from_slice(&(c.min(u16::MAX as u32) as u16).to_ne_bytes());
    }
    write_atomic(
        path.as_ref(),
        &encode(
            counts.width(),
            counts.height(),
            &data,
            ExtendedColorType::L16,
        )?,
    )
}

pub fn read_counts16(path: impl AsRef<Path>) -> Result<Grid<u32>> {
    let img = image::open(path)?.into_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Grid::from_vec(w, h, img.into_raw().into_iter().map(u32::from).collect())
}

/// Values in `[0, 1]` as 8-bit grayscale, `round(255 · v)`.
pub fn write_unit_gray(path: impl AsRef<Path>, values: &Grid<impl Real>) -> Result<()> {
    let data: Vec<u8> = values.as_slice().iter().map(|&v| unit_to_u8(v)).collect();
    write_atomic(
        path.as_ref(),
        &encode(
            values.width(),
            values.height(),
            &data,
            ExtendedColorType::L8,
        )?,
    )
}

pub fn write_rgb(path: impl AsRef<Path>, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    if rgb.len() != width * height * 3 {
        return Err(PcfError::LengthMismatch {
            expected: width * height * 3,
            actual: rgb.len(),
        });
    }
    write_atomic(
        path.as_ref(),
        &encode(width, height, rgb, ExtendedColorType::Rgb8)?,
    )
}

#[inline]
pub fn unit_to_u8<T: Real>(v: T) -> u8 {
    let v = v.to_f64_lossy();
    if v.is_nan() {
        0
    } else {
        (v.clamp(0.0, 1.0) * 255.0).round() as u8
    }
}

/// Fixed label palette; label `0` is black.
pub fn label_color(label: usize) -> [u8; 3] {
    const PALETTE: [[u8; 3]; 8] = [
        [230, 25, 75],
        [60, 180, 75],
        [0, 130, 200],
        [255, 225, 25],
        [245, 130, 48],
        [145, 30, 180],
        [70, 240, 240],
        [240, 50, 230],
    ];
    if label == 0 {
        [0, 0, 0]
    } else {
        PALETTE[(label - 1) % PALETTE.len()]
    }
}
