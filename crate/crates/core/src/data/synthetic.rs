//! Small synthetic image sets for tests and desk-scale experiments.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ImageSet, Split};
use crate::error::{Error, Result};

/// Dark images crossed by one to three full-height bright columns.
pub fn vertical_streaks(n: usize, rows: usize, cols: usize, seed: u64) -> Result<ImageSet> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("image dimensions must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let images = (0..n)
        .map(|_| {
            let mut m = DMatrix::from_element(rows, cols, 0.1);
            for _ in 0..rng.random_range(1..=3usize.min(cols)) {
                let j = rng.random_range(0..cols);
                let level = rng.random_range(0.5..1.0);
                m.column_mut(j).fill(level);
            }
            m
        })
        .collect();
    ImageSet::new(images, None, (rows, cols), Split::Unsplit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streaks_are_columnwise_constant() {
        let set = vertical_streaks(5, 6, 6, 3).unwrap();
        assert_eq!(set.len(), 5);
        for m in set.images() {
            assert!(m.column_iter().all(|c| c.iter().all(|&v| v == c[0])));
            assert!(m.iter().any(|&v| v >= 0.5));
        }
        assert!(set.in_unit_range());
        assert_eq!(vertical_streaks(5, 6, 6, 3).unwrap(), set);
    }
}
