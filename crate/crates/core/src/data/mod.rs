//! Image sets, MNIST ingestion, corruption operators and stacking into
//! three-way tensors.

mod corrupt;
mod idx;
mod synthetic;

pub use corrupt::{
    add_noise, corrupt, gaussian_blur, gaussian_filter, gaussian_kernel, CorruptionKind, CorruptionSpec,
};
pub use idx::{load_idx, load_idx_labels, load_mnist, parse_idx, write_idx, IdxElement};
pub use synthetic::vertical_streaks;

use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tt::DenseTensor3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Valid,
    Test,
    Unsplit,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
            Split::Unsplit => "all",
        }
    }
}

/// Grayscale images of a common shape. Loaded images lie in `[0, 1]`;
/// unclamped noise may leave that range.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSet {
    images: Vec<DMatrix<f64>>,
    labels: Option<Vec<u8>>,
    dims: (usize, usize),
    pub split: Split,
}

impl ImageSet {
    /// `dims` is only consulted when `images` is empty.
    pub fn new(images: Vec<DMatrix<f64>>, labels: Option<Vec<u8>>, dims: (usize, usize), split: Split) -> Result<Self> {
        let dims = images.first().map_or(dims, |m| m.shape());
        if let Some(i) = images.iter().position(|m| m.shape() != dims) {
            return Err(Error::shape(format!(
                "image {i} is {:?}, expected {dims:?}",
                images[i].shape()
            )));
        }
        if images.iter().flat_map(|m| m.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Data("pixel values must be finite".into()));
        }
        if let Some(l) = &labels {
            if l.len() != images.len() {
                return Err(Error::shape(format!("{} labels for {} images", l.len(), images.len())));
            }
        }
        Ok(Self {
            images,
            labels,
            dims,
            split,
        })
    }

    pub fn images(&self) -> &[DMatrix<f64>] {
        &self.images
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&i) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::invalid(format!(
                "index {i} out of range for {} images",
                self.len()
            )));
        }
        Ok(Self {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
            dims: self.dims,
            split: self.split,
        })
    }

    pub fn in_unit_range(&self) -> bool {
        self.images
            .iter()
            .flat_map(|m| m.iter())
            .all(|v| (0.0..=1.0).contains(v))
    }

    pub fn map_images(&self, f: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> Result<Self> {
        Self::new(
            self.images.iter().map(f).collect(),
            self.labels.clone(),
            self.dims,
            self.split,
        )
    }
}

/// Disjoint train/valid/test sets of one digit, drawn by a seeded shuffle.
pub fn filter_and_split(
    set: &ImageSet,
    digit: u8,
    n_train: usize,
    n_valid: usize,
    n_test: usize,
    seed: u64,
) -> Result<(ImageSet, ImageSet, ImageSet)> {
    if digit > 9 {
        return Err(Error::invalid(format!("digit must be 0..=9, got {digit}")));
    }
    let labels = set
        .labels()
        .ok_or_else(|| Error::Data("image set has no labels".into()))?;
    let mut pool: Vec<usize> = (0..set.len()).filter(|&i| labels[i] == digit).collect();
    let need = n_train + n_valid + n_test;
    if pool.len() < need {
        return Err(Error::Data(format!(
            "digit {digit} has {} images, {need} requested",
            pool.len()
        )));
    }
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, rest) = pool.split_at(n_train);
    let (valid, rest) = rest.split_at(n_valid);
    Ok((
        set.subset(train)?.with_split(Split::Train),
        set.subset(valid)?.with_split(Split::Valid),
        set.subset(&rest[..n_test])?.with_split(Split::Test),
    ))
}

/// Frontal slice `k` of the result is image `k`.
pub fn stack(set: &ImageSet) -> Result<DenseTensor3> {
    if set.is_empty() {
        return Err(Error::Data("cannot stack an empty image set".into()));
    }
    DenseTensor3::from_slices(set.images())
}

pub fn unstack(t: &DenseTensor3, split: Split) -> Result<ImageSet> {
    let [r, c, _] = t.dims();
    ImageSet::new(t.slices(), None, (r, c), split)
}

/// One image per line, row-major, comma separated.
pub fn write_csv(path: &Path, set: &ImageSet) -> Result<()> {
    let mut out = String::new();
    for m in set.images() {
        let row: Vec<String> = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| format!("{}", m[(i, j)]))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_csv(path: &Path, rows: usize, cols: usize, split: Split) -> Result<ImageSet> {
    let text = std::fs::read_to_string(path)?;
    let mut images = Vec::new();
    for (line_no, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let values = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Data(format!("line {}: {e}", line_no + 1)))?;
        if values.len() != rows * cols {
            return Err(Error::Data(format!(
                "line {}: {} values, expected {}",
                line_no + 1,
                values.len(),
                rows * cols
            )));
        }
        images.push(DMatrix::from_row_slice(rows, cols, &values));
    }
    ImageSet::new(images, None, (rows, cols), split)
}
