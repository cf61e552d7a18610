//! 8-bit grayscale PGM export with min-max normalization.

use std::path::Path;

use anyhow::{Context, Result};
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder};
use ndarray::ArrayView2;
use rte_core::grid::ScalarField;
use rte_core::rawio::{sidecar_path, write_json};
use serde::{Deserialize, Serialize};

/// Sidecar of a rendered image: `pixel = round(255 (v - min) / (max - min))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSidecar {
    pub width: usize,
    pub height: usize,
    pub min: f64,
    pub max: f64,
    /// True when the first image row is the largest `y`.
    pub flipped_y: bool,
}

pub fn to_gray(values: ArrayView2<'_, f64>, flip_y: bool) -> Result<(Vec<u8>, ImageSidecar)> {
    if values.iter().any(|v| !v.is_finite()) {
        anyhow::bail!("cannot render a field with non-finite values");
    }
    let (height, width) = values.dim();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (min, max) = if values.is_empty() { (0.0, 0.0) } else { (min, max) };
    let range = max - min;
    let mut pixels = Vec::with_capacity(width * height);
    for r in 0..height {
        let src = if flip_y { height - 1 - r } else { r };
        for c in 0..width {
            let v = values[[src, c]];
            let p = if range > 0.0 { (255.0 * (v - min) / range).round() } else { 0.0 };
            pixels.push(p as u8);
        }
    }
    Ok((pixels, ImageSidecar { width, height, min, max, flipped_y: flip_y }))
}

/// Writes any 2D array as a P5 image plus `<path>.json`.
pub fn render_array_pgm(values: ArrayView2<'_, f64>, path: &Path, flip_y: bool) -> Result<ImageSidecar> {
    let (pixels, meta) = to_gray(values, flip_y).with_context(|| path.display().to_string())?;
    let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let encoder =
        PnmEncoder::new(std::io::BufWriter::new(file)).with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary));
    encoder
        .write_image(&pixels, meta.width as u32, meta.height as u32, ExtendedColorType::L8)
        .with_context(|| format!("writing {}", path.display()))?;
    write_json(&sidecar_path(path), &meta)?;
    Ok(meta)
}

/// Renders a field with `y` pointing up.
pub fn render_pgm(field: &ScalarField, path: &Path) -> Result<ImageSidecar> {
    render_array_pgm(field.values.view(), path, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn constant_field_is_black() {
        let (px, meta) = to_gray(array![[3.0, 3.0], [3.0, 3.0]].view(), false).unwrap();
        assert!(px.iter().all(|&p| p == 0));
        assert_eq!((meta.min, meta.max), (3.0, 3.0));
    }

    #[test]
    fn unit_range_rounds() {
        let (px, _) = to_gray(array![[0.0, 0.5, 1.0, 0.2]].view(), false).unwrap();
        assert_eq!(px, vec![0, 128, 255, 51]);
    }

    #[test]
    fn flip_puts_last_row_first() {
        let (px, _) = to_gray(array![[0.0], [1.0]].view(), true).unwrap();
        assert_eq!(px, vec![255, 0]);
    }

    #[test]
    fn nan_is_rejected() {
        assert!(to_gray(array![[f64::NAN]].view(), false).is_err());
    }
}
