use std::fs;
use std::path::Path;

use fedah_core::data::idx::parse_pair;
use fedah_core::LabeledDataset;

use crate::error::{CliError, Result};

/// Reads an IDX image file and its label file (the MNIST layout).
pub fn load_idx(images: &Path, labels: &Path) -> Result<LabeledDataset> {
    let read = |p: &Path| fs::read(p).map_err(|e| CliError::read(p, e));
    let (img, lbl) = (read(images)?, read(labels)?);
    Ok(parse_pair(
        &img,
        &images.display().to_string(),
        &lbl,
        &labels.display().to_string(),
    )?)
}
