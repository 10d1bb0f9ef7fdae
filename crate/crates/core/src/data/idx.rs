//! IDX binary files: a big-endian magic `0x0000TTDD` (element type `TT`,
//! dimension count `DD`), one big-endian `u32` per dimension, then the
//! row-major payload.
//!
//! Besides MNIST's unsigned bytes (`0x08`), `f64` payloads (`0x0E`) are
//! accepted so corrupted images can be stored without quantization.

use std::path::Path;

use nalgebra::DMatrix;

use super::{ImageSet, Split};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IdxElement {
    U8,
    F64,
}

impl IdxElement {
    fn code(self) -> u8 {
        match self {
            IdxElement::U8 => 0x08,
            IdxElement::F64 => 0x0E,
        }
    }

    fn width(self) -> usize {
        match self {
            IdxElement::U8 => 1,
            IdxElement::F64 => 8,
        }
    }
}

fn idx_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Idx {
        offset,
        message: message.into(),
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| idx_err(offset, "truncated header"))
}

/// Returns the element type, the dimensions and the payload. Bytes are
/// returned unscaled.
pub fn parse_idx(bytes: &[u8]) -> Result<(IdxElement, Vec<usize>, Vec<f64>)> {
    let magic = read_u32(bytes, 0)?;
    if magic >> 16 != 0 {
        return Err(idx_err(0, format!("bad magic {magic:#010x}")));
    }
    let elem = match (magic >> 8) as u8 {
        0x08 => IdxElement::U8,
        0x0E => IdxElement::F64,
        other => return Err(idx_err(2, format!("unsupported element type {other:#04x}"))),
    };
    let ndims = (magic & 0xff) as usize;
    if ndims == 0 {
        return Err(idx_err(3, "zero dimensions"));
    }
    let dims = (0..ndims)
        .map(|d| read_u32(bytes, 4 + 4 * d).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let start = 4 + 4 * ndims;
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| idx_err(4, "dimension product overflows"))?;
    let expected = count * elem.width();
    let payload = &bytes[start..];
    if payload.len() != expected {
        return Err(idx_err(
            start + payload.len().min(expected),
            format!(
                "payload has {} bytes, dimensions {dims:?} need {expected}",
                payload.len()
            ),
        ));
    }
    let values = match elem {
        IdxElement::U8 => payload.iter().map(|&b| b as f64).collect(),
        IdxElement::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_be_bytes(c.try_into().unwrap()))
            .collect(),
    };
    Ok((elem, dims, values))
}

/// Loads a `count × rows × cols` image file. Bytes are scaled by `1/255`.
pub fn load_idx(path: &Path) -> Result<ImageSet> {
    let bytes = std::fs::read(path)?;
    let (elem, dims, values) = parse_idx(&bytes)?;
    if dims.len() != 3 {
        return Err(idx_err(
            3,
            format!("image files need 3 dimensions, found {}", dims.len()),
        ));
    }
    let (rows, cols) = (dims[1], dims[2]);
    let scale = if elem == IdxElement::U8 { 1.0 / 255.0 } else { 1.0 };
    let images = values
        .chunks(rows * cols)
        .take(dims[0])
        .map(|c| DMatrix::from_row_iterator(rows, cols, c.iter().map(|v| v * scale)))
        .collect();
    ImageSet::new(images, None, (rows, cols), Split::Unsplit)
}

pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = std::fs::read(path)?;
    let (elem, dims, values) = parse_idx(&bytes)?;
    if elem != IdxElement::U8 || dims.len() != 1 {
        return Err(idx_err(2, "label files hold a single dimension of bytes"));
    }
    Ok(values.into_iter().map(|v| v as u8).collect())
}

/// Loads the official training (`train = true`) or test files from `dir`.
pub fn load_mnist(dir: &Path, train: bool) -> Result<ImageSet> {
    let prefix = if train { "train" } else { "t10k" };
    let images = load_idx(&dir.join(format!("{prefix}-images-idx3-ubyte")))?;
    let labels = load_idx_labels(&dir.join(format!("{prefix}-labels-idx1-ubyte")))?;
    let dims = images.dims();
    ImageSet::new(images.images().to_vec(), Some(labels), dims, Split::Unsplit)
}

/// Writes an image file; `U8` rounds intensities to the nearest 1/255.
pub fn write_idx(path: &Path, set: &ImageSet, elem: IdxElement) -> Result<()> {
    let (rows, cols) = set.dims();
    let mut out = Vec::with_capacity(16 + set.len() * rows * cols * elem.width());
    out.extend_from_slice(&[0, 0, elem.code(), 3]);
    for d in [set.len(), rows, cols] {
        let d = u32::try_from(d).map_err(|_| Error::invalid("dimension exceeds u32"))?;
        out.extend_from_slice(&d.to_be_bytes());
    }
    for m in set.images() {
        for i in 0..rows {
            for j in 0..cols {
                match elem {
                    IdxElement::U8 => out.push((m[(i, j)] * 255.0).round() as u8),
                    IdxElement::F64 => out.extend_from_slice(&m[(i, j)].to_be_bytes()),
                }
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> Vec<u8> {
        let mut b = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0, 3];
        b.extend(0u8..18);
        b
    }

    #[test]
    fn hand_built_file_recovers_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.idx");
        std::fs::write(&path, fixture()).unwrap();
        let set = load_idx(&path).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.dims(), (3, 3));
        // Row-major payload: image 1, row 2, column 0 is byte 9 + 6.
        assert_eq!(set.images()[1][(2, 0)], 15.0 / 255.0);
        assert_eq!(set.images()[0][(0, 2)], 2.0 / 255.0);
    }

    #[test]
    fn empty_file_is_not_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.idx");
        std::fs::write(&path, [0, 0, 8, 3, 0, 0, 0, 0, 0, 0, 0, 28, 0, 0, 0, 28]).unwrap();
        let set = load_idx(&path).unwrap();
        assert!(set.is_empty());
        assert_eq!(set.dims(), (28, 28));
    }

    #[test]
    fn malformed_files_report_offsets() {
        let mut bad = fixture();
        bad[0] = 1;
        assert!(matches!(parse_idx(&bad), Err(Error::Idx { offset: 0, .. })));
        let mut bad = fixture();
        bad[2] = 0x0B;
        assert!(matches!(parse_idx(&bad), Err(Error::Idx { offset: 2, .. })));
        let truncated = &fixture()[..20];
        assert!(matches!(parse_idx(truncated), Err(Error::Idx { offset: 20, .. })));
        assert!(matches!(parse_idx(&fixture()[..6]), Err(Error::Idx { offset: 4, .. })));
        let mut long = fixture();
        long.push(0);
        assert!(parse_idx(&long).is_err());
    }

    #[test]
    fn write_then_load_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let set = crate::data::vertical_streaks(3, 5, 4, 2).unwrap();
        let path = dir.path().join("f64.idx");
        write_idx(&path, &set, IdxElement::F64).unwrap();
        assert_eq!(load_idx(&path).unwrap().images(), set.images());

        let quantized = set.map_images(|m| m.map(|v| (v * 255.0).round() / 255.0)).unwrap();
        let path = dir.path().join("u8.idx");
        write_idx(&path, &quantized, IdxElement::U8).unwrap();
        assert_eq!(load_idx(&path).unwrap().images(), quantized.images());
    }

    #[test]
    fn labels_parse() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.idx");
        std::fs::write(&path, [0, 0, 8, 1, 0, 0, 0, 3, 7, 2, 9]).unwrap();
        assert_eq!(load_idx_labels(&path).unwrap(), vec![7, 2, 9]);
    }
}
