//! IDX image/label files (the MNIST distribution format).

use std::fs;
use std::path::Path;

use crate::data::Dataset;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn format_err<T>(detail: impl Into<String>) -> Result<T> {
    Err(Error::Format {
        format: "IDX",
        detail: detail.into(),
    })
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    match bytes.get(at..at + 4) {
        Some(b) => Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]])),
        None => format_err("truncated header"),
    }
}

/// Decoded image file: `count` images of `rows × cols` bytes.
pub fn parse_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return format_err(format!("bad image magic {magic:#010x}"));
    }
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let need = count * rows * cols;
    let body = &bytes[16..];
    if body.len() < need {
        return format_err(format!("image file truncated: {} of {need} pixel bytes", body.len()));
    }
    Ok((count, rows, cols, &body[..need]))
}

pub fn parse_labels(bytes: &[u8]) -> Result<&[u8]> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return format_err(format!("bad label magic {magic:#010x}"));
    }
    let count = be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return format_err(format!("label file truncated: {} of {count} labels", body.len()));
    }
    Ok(&body[..count])
}

/// Loads an image/label pair; pixels are flattened row-major and scaled to `[0, 1]`.
pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    let img_bytes = fs::read(images)?;
    let lbl_bytes = fs::read(labels)?;
    from_idx_bytes(&img_bytes, &lbl_bytes)
}

pub fn from_idx_bytes(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let (count, rows, cols, pixels) = parse_images(images)?;
    let labels = parse_labels(labels)?;
    if labels.len() != count {
        return format_err(format!("{count} images but {} labels", labels.len()));
    }
    let data = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let features = Tensor::matrix(count, rows * cols, data)?;
    let original: Vec<i64> = labels.iter().map(|&l| i64::from(l)).collect();
    Dataset::from_original(features, &original)
}

/// Serializes images/labels in IDX layout (used for fixtures and tooling).
pub fn encode_idx(rows: usize, cols: usize, pixels: &[u8], labels: &[u8]) -> (Vec<u8>, Vec<u8>) {
    let count = labels.len();
    let mut img = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, count as u32, rows as u32, cols as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    img.extend_from_slice(pixels);
    let mut lbl = Vec::with_capacity(8 + count);
    for v in [LABELS_MAGIC, count as u32] {
        lbl.extend_from_slice(&v.to_be_bytes());
    }
    lbl.extend_from_slice(labels);
    (img, lbl)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_dimensions_and_scales_pixels() {
        let pixels: Vec<u8> = (0..2 * 28 * 28).map(|i| (i % 256) as u8).collect();
        let (img, lbl) = encode_idx(28, 28, &pixels, &[3, 3]);
        let d = from_idx_bytes(&img, &lbl).unwrap();
        assert_eq!(d.dim(), 784);
        assert_eq!(d.len(), 2);
        assert_eq!(d.features().get(0, 255), 1.0);
        assert_eq!(d.features().get(0, 0), 0.0);
    }

    #[test]
    fn rejects_bad_magic_truncation_and_count_mismatch() {
        let (img, lbl) = encode_idx(2, 2, &[0; 8], &[0, 1]);
        let mut bad = img.clone();
        bad[3] = 0x01;
        assert!(from_idx_bytes(&bad, &lbl).is_err());
        assert!(from_idx_bytes(&img[..img.len() - 1], &lbl).is_err());
        let (_, lbl3) = encode_idx(2, 2, &[0; 12], &[0, 1, 2]);
        assert!(from_idx_bytes(&img, &lbl3).is_err());
        assert!(from_idx_bytes(&img[..10], &lbl).is_err());
    }
}
