//! Grid study over the layer count `N` and final time `T`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::run::{test, train, PairedSet};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct SweepData {
    pub train: PairedSet,
    pub valid: PairedSet,
    pub test: PairedSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_layers: usize,
    pub final_time: f64,
    pub tau: f64,
    /// Objective on the full training set after training.
    pub alpha_train: f64,
    pub alpha_valid: f64,
    pub alpha_test: f64,
    /// Test-split image metrics.
    pub psnr_db: f64,
    pub ssim: f64,
}

fn run_cell(data: &SweepData, base: &TrainConfig, n_layers: usize, final_time: f64) -> Result<SweepRow> {
    let cfg = TrainConfig {
        n_layers,
        final_time,
        ..base.clone()
    };
    let model = train(&data.train, &cfg)?.model;
    let batch = cfg.test_batch_size;
    let on_train = test(&model, &data.train, batch)?;
    let on_valid = test(&model, &data.valid, batch)?;
    let on_test = test(&model, &data.test, batch)?;
    Ok(SweepRow {
        n_layers,
        final_time,
        tau: cfg.tau(),
        alpha_train: on_train.metrics.alpha,
        alpha_valid: on_valid.metrics.alpha,
        alpha_test: on_test.metrics.alpha,
        psnr_db: on_test.metrics.psnr_db,
        ssim: on_test.metrics.ssim,
    })
}

/// One independent train and test per `(N, T)` cell, run on `jobs` worker
/// threads. Rows are ordered by `T`, then `N`, whatever the completion order.
pub fn sweep(
    data: &SweepData,
    n_list: &[usize],
    t_list: &[f64],
    base: &TrainConfig,
    jobs: usize,
) -> Result<Vec<SweepRow>> {
    if n_list.is_empty() || t_list.is_empty() {
        return Err(Error::invalid("sweep needs at least one N and one T"));
    }
    let mut cells = Vec::with_capacity(n_list.len() * t_list.len());
    for &t in t_list {
        for &n in n_list {
            let cfg = TrainConfig {
                n_layers: n,
                final_time: t,
                ..base.clone()
            };
            cfg.validate()?;
            cells.push((n, t));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot build worker pool: {e}")))?;
    let mut rows = pool.install(|| {
        cells
            .par_iter()
            .map(|&(n, t)| run_cell(data, base, n, t))
            .collect::<Result<Vec<_>>>()
    })?;
    rows.sort_by(|a, b| a.final_time.total_cmp(&b.final_time).then(a.n_layers.cmp(&b.n_layers)));
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{corrupt, vertical_streaks, CorruptionSpec};

    fn streak_data(n: usize, seed: u64) -> PairedSet {
        let clean = vertical_streaks(n, 6, 6, seed).unwrap();
        PairedSet::new(corrupt(&clean, &CorruptionSpec::noise(seed)).unwrap(), clean).unwrap()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            rounds: 1,
            iterations: 2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn rows_are_ordered_and_tau_matches() {
        let data = SweepData {
            train: streak_data(4, 1),
            valid: streak_data(2, 2),
            test: streak_data(2, 3),
        };
        let rows = sweep(&data, &[4, 2], &[2.0, 1.0], &small_cfg(), 2).unwrap();
        let keys: Vec<(f64, usize)> = rows.iter().map(|r| (r.final_time, r.n_layers)).collect();
        assert_eq!(keys, vec![(1.0, 2), (1.0, 4), (2.0, 2), (2.0, 4)]);
        assert!(rows.iter().all(|r| r.tau == r.final_time / r.n_layers as f64));
        // A singleton grid is one train call with the same result.
        let single = sweep(&data, &[4], &[2.0], &small_cfg(), 1).unwrap();
        assert_eq!(single, vec![rows[3].clone()]);
    }

    #[test]
    fn rejects_empty_and_odd_grids() {
        let data = SweepData {
            train: streak_data(2, 1),
            valid: streak_data(2, 2),
            test: streak_data(2, 3),
        };
        assert!(sweep(&data, &[], &[1.0], &small_cfg(), 1).is_err());
        assert!(sweep(&data, &[3], &[1.0], &small_cfg(), 1).is_err());
    }
}
