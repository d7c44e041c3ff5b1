//! Reader for the big-endian IDX format used by the MNIST family.

use std::path::Path;

use ndarray::Array2;

use super::{Dataset, Provenance};
use crate::error::{Error, Result};

/// Magic number of an unsigned-byte rank-3 tensor.
pub const IDX_IMAGES_MAGIC: u32 = 2051;
/// Magic number of an unsigned-byte vector.
pub const IDX_LABELS_MAGIC: u32 = 2049;

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::parse(offset as u64, "file truncated inside header"))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let magic = read_u32(bytes, 0)?;
    if magic != expected {
        return Err(Error::parse(
            0,
            format!("magic number {magic}, expected {expected}"),
        ));
    }
    Ok(())
}

/// Decodes an image file into an `n × (rows·cols)` matrix scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Array2<f64>> {
    check_magic(bytes, IDX_IMAGES_MAGIC)?;
    let n = read_u32(bytes, 4)? as usize;
    let d = read_u32(bytes, 8)? as usize * read_u32(bytes, 12)? as usize;
    let body = &bytes[16..];
    let expected = n * d;
    if body.len() < expected {
        return Err(Error::parse(
            16 + body.len() as u64,
            format!("image data truncated: {} of {expected} bytes", body.len()),
        ));
    }
    if body.len() > expected {
        return Err(Error::parse(
            16 + expected as u64,
            "trailing bytes after image data",
        ));
    }
    Ok(Array2::from_shape_fn((n, d), |(i, j)| {
        f64::from(body[i * d + j]) / 255.0
    }))
}

/// Decodes a label file.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    check_magic(bytes, IDX_LABELS_MAGIC)?;
    let n = read_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() < n {
        return Err(Error::parse(
            8 + body.len() as u64,
            format!("label data truncated: {} of {n} bytes", body.len()),
        ));
    }
    if body.len() > n {
        return Err(Error::parse(
            8 + n as u64,
            "trailing bytes after label data",
        ));
    }
    Ok(body.iter().map(|&b| usize::from(b)).collect())
}

/// Loads an image/label file pair. The class count is one more than the largest label
/// (at least 2).
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let features = parse_idx_images(&std::fs::read(images_path)?)?;
    let labels = parse_idx_labels(&std::fs::read(labels_path.as_ref())?)?;
    if labels.len() != features.nrows() {
        return Err(Error::parse(
            4,
            format!("{} labels for {} images", labels.len(), features.nrows()),
        ));
    }
    let classes = labels.iter().max().map_or(2, |m| (m + 1).max(2));
    Dataset::new(
        features,
        labels,
        classes,
        Provenance {
            source: images_path.display().to_string(),
            ..Provenance::default()
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn images(n: u32, r: u32, c: u32, pixels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        for x in [IDX_IMAGES_MAGIC, n, r, c] {
            v.extend_from_slice(&x.to_be_bytes());
        }
        v.extend_from_slice(pixels);
        v
    }

    pub(crate) fn labels(ls: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        v.extend_from_slice(&(ls.len() as u32).to_be_bytes());
        v.extend_from_slice(ls);
        v
    }

    #[test]
    fn decodes_and_scales() {
        let x = parse_idx_images(&images(2, 1, 2, &[0, 255, 51, 102])).unwrap();
        assert_eq!(x.dim(), (2, 2));
        assert_eq!(x[[0, 1]], 1.0);
        assert_eq!(x[[1, 0]], 0.2);
        assert_eq!(parse_idx_labels(&labels(&[3, 1])).unwrap(), vec![3, 1]);
    }

    #[test]
    fn empty_dimension_is_empty_dataset() {
        let x = parse_idx_images(&images(0, 28, 28, &[])).unwrap();
        assert_eq!(x.dim(), (0, 784));
        assert!(parse_idx_labels(&labels(&[])).unwrap().is_empty());
    }

    #[test]
    fn wrong_magic() {
        let err = parse_idx_images(&labels(&[1, 2])).unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 0, .. }));
    }

    #[test]
    fn truncation_names_offset() {
        let err = parse_idx_images(&images(2, 1, 2, &[0, 1, 2])).unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 19, .. }), "{err:?}");
        let err = parse_idx_labels(&IDX_LABELS_MAGIC.to_be_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 4, .. }), "{err:?}");
    }
}
