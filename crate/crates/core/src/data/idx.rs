//! IDX decoding (the MNIST container format).
//!
//! Both files start with two zero bytes, a dtype byte (`0x08`, unsigned byte)
//! and a rank byte, followed by big-endian `u32` dimensions:
//!
//! ```text
//! images: 0x00000803  n  rows  cols  then n*rows*cols pixel bytes
//! labels: 0x00000801  n              then n label bytes
//! ```

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::LabeledDataset;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn format_err(file: &str, reason: impl Into<String>) -> Error {
    Error::Format {
        file: file.to_string(),
        reason: reason.into(),
    }
}

fn be_u32(bytes: &[u8], at: usize, file: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| format_err(file, "truncated header"))
}

fn expect_magic(bytes: &[u8], expected: u32, file: &str) -> Result<()> {
    let magic = be_u32(bytes, 0, file)?;
    if magic != expected {
        return Err(format_err(
            file,
            format!("magic 0x{magic:08X}, expected 0x{expected:08X}"),
        ));
    }
    Ok(())
}

/// Decoded image file: pixel rows scaled to `[0, 1]`.
pub fn parse_images(bytes: &[u8], file: &str) -> Result<Matrix> {
    expect_magic(bytes, IMAGES_MAGIC, file)?;
    let n = be_u32(bytes, 4, file)? as usize;
    let rows = be_u32(bytes, 8, file)? as usize;
    let cols = be_u32(bytes, 12, file)? as usize;
    let dim = rows
        .checked_mul(cols)
        .ok_or_else(|| format_err(file, "image size overflows"))?;
    let len = n
        .checked_mul(dim)
        .ok_or_else(|| format_err(file, "data size overflows"))?;
    let pixels = bytes.get(16..16 + len).ok_or_else(|| {
        format_err(
            file,
            format!("truncated: header declares {n} images of {rows}x{cols}"),
        )
    })?;
    let data: Vec<f64> = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    Matrix::from_vec(n, dim, data)
}

pub fn parse_labels(bytes: &[u8], file: &str) -> Result<Vec<usize>> {
    expect_magic(bytes, LABELS_MAGIC, file)?;
    let n = be_u32(bytes, 4, file)? as usize;
    let labels = bytes
        .get(8..8 + n)
        .ok_or_else(|| format_err(file, format!("truncated: header declares {n} labels")))?;
    Ok(labels.iter().map(|&y| usize::from(y)).collect())
}

/// Image/label pair as a dataset; `n_classes` is one past the largest label
/// (at least 2).
pub fn parse_pair(
    image_bytes: &[u8],
    images_name: &str,
    label_bytes: &[u8],
    labels_name: &str,
) -> Result<LabeledDataset> {
    let features = parse_images(image_bytes, images_name)?;
    let labels = parse_labels(label_bytes, labels_name)?;
    if features.rows() != labels.len() {
        return Err(format_err(
            labels_name,
            format!(
                "{} labels but {} has {} images",
                labels.len(),
                images_name,
                features.rows()
            ),
        ));
    }
    if labels.is_empty() {
        return Err(format_err(images_name, "no samples"));
    }
    let n_classes = labels.iter().copied().max().unwrap_or(0).max(1) + 1;
    LabeledDataset::new(features, labels, n_classes)
}

/// Encoders, used to build fixtures.
pub fn encode_images(n: usize, rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn decodes_and_scales() {
        let images = encode_images(2, 1, 2, &[0, 255, 51, 102]);
        let labels = encode_labels(&[3, 1]);
        let ds = parse_pair(&images, "img", &labels, "lbl").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.n_classes, 4);
        assert_eq!(ds.features.data(), &[0.0, 1.0, 0.2, 0.4]);
        assert_eq!(ds.labels, vec![3, 1]);
    }

    #[test]
    fn wrong_magic_names_the_file() {
        let images = encode_images(1, 1, 1, &[0]);
        let err = parse_pair(&images, "img", &images, "lbl").unwrap_err();
        match err {
            Error::Format { file, reason } => {
                assert_eq!(file, "lbl");
                assert!(reason.contains("0x00000803"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncation_and_count_mismatch() {
        let mut images = encode_images(2, 2, 2, &[1; 8]);
        images.truncate(20);
        assert!(matches!(
            parse_images(&images, "img"),
            Err(Error::Format { .. })
        ));
        assert!(matches!(
            parse_labels(&[0, 0, 8], "lbl"),
            Err(Error::Format { .. })
        ));
        let images = encode_images(2, 1, 1, &[1, 2]);
        let labels = encode_labels(&[0, 1, 1]);
        let err = parse_pair(&images, "img", &labels, "lbl").unwrap_err();
        assert!(matches!(err, Error::Format { ref file, .. } if file == "lbl"));
    }
}
