//! Storage of TT trajectories against their dense equivalents.

use serde::{Deserialize, Serialize};

use crate::autoencoder::ForwardPass;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryRow {
    pub layer: usize,
    pub tt_bytes: usize,
    pub dense_bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryReport {
    pub rows: Vec<MemoryRow>,
}

impl MemoryReport {
    pub fn total_tt(&self) -> usize {
        self.rows.iter().map(|r| r.tt_bytes).sum()
    }

    pub fn total_dense(&self) -> usize {
        self.rows.iter().map(|r| r.dense_bytes).sum()
    }

    /// `1 − Σ tt / Σ dense`; negative when the TT format costs more.
    pub fn savings(&self) -> f64 {
        1.0 - self.total_tt() as f64 / self.total_dense() as f64
    }
}

/// One row per layer state, given its full rank vector `[1, r1, r2, 1]`.
pub fn memory_report(ranks: &[[usize; 4]], dims: [usize; 3], bytes_per_element: usize) -> Result<MemoryReport> {
    if ranks.is_empty() || dims.contains(&0) {
        return Err(Error::invalid(
            "memory report needs at least one layer and positive dims",
        ));
    }
    let dense = dims.iter().product::<usize>() * bytes_per_element;
    let rows = ranks
        .iter()
        .enumerate()
        .map(|(layer, r)| MemoryRow {
            layer,
            tt_bytes: (0..3).map(|k| r[k] * dims[k] * r[k + 1]).sum::<usize>() * bytes_per_element,
            dense_bytes: dense,
        })
        .collect();
    Ok(MemoryReport { rows })
}

/// Report over `f_0..f_{N_e} = g_{N_e}..g_N` of a forward pass.
pub fn pass_memory(pass: &ForwardPass) -> Result<MemoryReport> {
    let states: Vec<_> = pass.layer_states().collect();
    let ranks: Vec<[usize; 4]> = states.iter().map(|s| s.rank_vector()).collect();
    memory_report(&ranks, states[0].dims(), 8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tt::{tt_storage_bytes, TtTensor};

    #[test]
    fn rank_one_savings_closed_form() {
        let dims = [28, 28, 20];
        let r = memory_report(&[[1, 1, 1, 1]; 3], dims, 8).unwrap();
        assert_eq!(r.rows[0].tt_bytes, (28 + 28 + 20) * 8);
        assert!((r.savings() - (1.0 - 76.0 / 15680.0)).abs() < 1e-15);
        let ones = TtTensor::ones(dims).unwrap();
        assert_eq!(r.rows[2].tt_bytes, tt_storage_bytes(&ones, 8));
    }

    #[test]
    fn full_rank_can_cost_more() {
        let r = memory_report(&[[1, 28, 20, 1]], [28, 28, 20], 8).unwrap();
        assert_eq!(r.rows[0].tt_bytes, (28 * 28 + 28 * 28 * 20 + 20 * 20) * 8);
        assert!(r.savings() < 0.0);
    }
}
