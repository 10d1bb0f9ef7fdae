//! Mini-batch training and batched testing.

use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::memory::{pass_memory, MemoryReport};
use super::metrics::{mean_ssim, mse, psnr_from_mse};
use crate::autoencoder::{evaluate, forward, pass_objective, ForwardPass, NetworkParams, RankProfile};
use crate::data::{stack, unstack, ImageSet, Split};
use crate::error::{Error, Result};
use crate::optimizer::{bfgs_minimize, flatten, init_network, unflatten, FlatParams, Termination};
use crate::tt::DenseTensor3;

const INIT_STREAM: u64 = 1;
const BATCH_STREAM: u64 = 2;

/// Independent generator for one purpose derived from a master seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Inputs `x̂` paired with targets `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedSet {
    pub input: ImageSet,
    pub target: ImageSet,
}

impl PairedSet {
    pub fn new(input: ImageSet, target: ImageSet) -> Result<Self> {
        if input.len() != target.len() || input.dims() != target.dims() {
            return Err(Error::shape(format!(
                "{} inputs of {:?} vs {} targets of {:?}",
                input.len(),
                input.dims(),
                target.len(),
                target.dims()
            )));
        }
        Ok(Self { input, target })
    }

    pub fn len(&self) -> usize {
        self.input.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.input.dims()
    }

    /// Stacked `(x̂, x)` for the given images.
    pub fn stack(&self, indices: &[usize]) -> Result<(DenseTensor3, DenseTensor3)> {
        Ok((
            stack(&self.input.subset(indices)?)?,
            stack(&self.target.subset(indices)?)?,
        ))
    }
}

/// Sorted indices of `⌈fraction·n⌉` distinct samples.
pub fn minibatch_sample<R: Rng + ?Sized>(n: usize, fraction: f64, rng: &mut R) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::Data("cannot sample from an empty dataset".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    let k = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut idx = sample(rng, n, k).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub params: NetworkParams,
    /// `r^{fe}` from the last training round; prescribed at test time.
    pub encoder_ranks: Vec<usize>,
    pub image_dims: (usize, usize),
    pub config: TrainConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub batch: Vec<usize>,
    pub alpha_initial: f64,
    /// Objective on this round's mini-batch after the solve.
    pub alpha_train: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    /// Truncation-bound violations in the final evaluation.
    pub violations: usize,
    pub profile: RankProfile,
    pub encoder_caps: Vec<usize>,
    pub decoder_caps: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub rounds: Vec<RoundRecord>,
    /// Forward pass of the final evaluation.
    pub final_pass: ForwardPass,
    pub wall_time_s: f64,
}

impl TrainOutcome {
    pub fn memory(&self) -> Result<MemoryReport> {
        pass_memory(&self.final_pass)
    }
}

/// `m1` rounds of: draw a mini-batch, then minimize the objective on it
/// with BFGS from the current weights.
pub fn train(data: &PairedSet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let start = Instant::now();
    let opts = cfg.model_options()?;
    let solver = cfg.solver();
    let mut init_rng = stream_rng(cfg.seed, INIT_STREAM);
    let mut batch_rng = stream_rng(cfg.seed, BATCH_STREAM);
    let mut params = init_network(cfg.n_layers, data.dims().0, &mut init_rng)?;

    let mut rounds = Vec::with_capacity(cfg.rounds);
    let mut final_pass = None;
    for round in 0..cfg.rounds {
        let batch = minibatch_sample(data.len(), cfg.batch_fraction, &mut batch_rng)?;
        let (x_hat, x) = data.stack(&batch)?;
        let initial = evaluate(&x_hat, &x, &params, &cfg.reg, &opts)?;
        let flat = flatten(&params)?;
        let layout = flat.layout;
        let eval = |v: &[f64]| {
            let result = unflatten(&FlatParams {
                values: v.to_vec(),
                layout,
            })
            .and_then(|p| evaluate(&x_hat, &x, &p, &cfg.reg, &opts));
            match result.and_then(|e| Ok((e.alpha, flatten(&e.gradient)?.values))) {
                Ok(pair) => pair,
                Err(_) => (f64::NAN, vec![f64::NAN; v.len()]),
            }
        };
        let sol = bfgs_minimize(eval, flat.values, &solver)?;
        params = unflatten(&FlatParams { values: sol.x, layout })?;
        let fin = evaluate(&x_hat, &x, &params, &cfg.reg, &opts)?;
        rounds.push(RoundRecord {
            round,
            batch,
            alpha_initial: initial.alpha,
            alpha_train: fin.alpha,
            iterations: sol.iterations,
            evaluations: sol.evaluations,
            termination: sol.termination,
            violations: fin.violations(),
            profile: fin.profile(),
            encoder_caps: fin.forward.encoder_caps.clone(),
            decoder_caps: fin.forward.decoder_caps.clone(),
        });
        final_pass = Some(fin.forward);
    }
    let final_pass = final_pass.expect("at least one round");
    Ok(TrainOutcome {
        model: TrainedModel {
            encoder_ranks: final_pass.encoder.ranks(),
            params,
            image_dims: data.dims(),
            config: cfg.clone(),
        },
        rounds,
        final_pass,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub size: usize,
    pub alpha: f64,
    pub encoder_ranks: Vec<usize>,
    pub decoder_ranks: Vec<usize>,
    pub encoder_caps: Vec<usize>,
    pub decoder_caps: Vec<usize>,
    pub violations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean of the per-batch objectives.
    pub alpha: f64,
    /// Over all pixels of all images; `psnr_db` is derived from it.
    pub mse: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub tt_bytes_per_layer: Vec<usize>,
    pub dense_bytes_per_layer: Vec<usize>,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug)]
pub struct TestOutcome {
    pub metrics: Metrics,
    pub batches: Vec<BatchResult>,
    /// `σ̂(g_N)` for every input, in order.
    pub reconstructions: ImageSet,
    /// Memory of the last batch's forward pass.
    pub memory: MemoryReport,
}

/// Forward-only evaluation in consecutive batches with the trained encoder
/// ranks prescribed.
pub fn test(model: &TrainedModel, data: &PairedSet, batch_size: usize) -> Result<TestOutcome> {
    if data.dims() != model.image_dims {
        return Err(Error::shape(format!(
            "images are {:?}, the model was trained on {:?}",
            data.dims(),
            model.image_dims
        )));
    }
    if data.is_empty() || batch_size == 0 {
        return Err(Error::invalid("testing needs images and a positive batch size"));
    }
    let start = Instant::now();
    let cfg = &model.config;
    let opts = cfg.model_options()?;
    let mut batches = Vec::new();
    let mut recon = Vec::with_capacity(data.len());
    let mut last = None;
    let all: Vec<usize> = (0..data.len()).collect();
    for chunk in all.chunks(batch_size) {
        let (x_hat, x) = data.stack(chunk)?;
        let pass = forward(&x_hat, &model.params, &opts, Some(&model.encoder_ranks))?;
        let alpha = pass_objective(&pass, &x, &model.params, &cfg.reg, &opts)?;
        recon.extend(opts.output.apply(&pass.output()).slices());
        batches.push(BatchResult {
            size: chunk.len(),
            alpha,
            encoder_ranks: pass.encoder.ranks(),
            decoder_ranks: pass.decoder.ranks(),
            encoder_caps: pass.encoder_caps.clone(),
            decoder_caps: pass.decoder_caps.clone(),
            violations: pass.violations(),
        });
        last = Some(pass);
    }
    let memory = pass_memory(&last.expect("at least one batch"))?;
    let reconstructions = unstack(&DenseTensor3::from_slices(&recon)?, Split::Unsplit)?.with_split(data.input.split);
    let mse = mse(reconstructions.images(), data.target.images())?;
    let ssim = mean_ssim(reconstructions.images(), data.target.images(), &cfg.ssim, 1.0)?;
    Ok(TestOutcome {
        metrics: Metrics {
            alpha: batches.iter().map(|b| b.alpha).sum::<f64>() / batches.len() as f64,
            mse,
            psnr_db: psnr_from_mse(mse, 1.0),
            ssim,
            tt_bytes_per_layer: memory.rows.iter().map(|r| r.tt_bytes).collect(),
            dense_bytes_per_layer: memory.rows.iter().map(|r| r.dense_bytes).collect(),
            wall_time_s: start.elapsed().as_secs_f64(),
        },
        batches,
        reconstructions,
        memory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::NetworkParams;
    use crate::data::{corrupt, vertical_streaks, CorruptionSpec};
    use crate::optimizer::init_network;

    fn streaks(n: usize, seed: u64) -> PairedSet {
        let clean = vertical_streaks(n, 6, 6, seed).unwrap();
        PairedSet::new(corrupt(&clean, &CorruptionSpec::noise(seed)).unwrap(), clean).unwrap()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            n_layers: 4,
            final_time: 2.0,
            rounds: 2,
            iterations: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn minibatch_size_and_validity() {
        let mut rng = stream_rng(0, BATCH_STREAM);
        let idx = minibatch_sample(20, 0.5, &mut rng).unwrap();
        assert_eq!(idx.len(), 10);
        assert!(idx.windows(2).all(|w| w[0] < w[1]) && idx[9] < 20);
        assert_eq!(minibatch_sample(20, 0.01, &mut rng).unwrap().len(), 1);
        assert_eq!(minibatch_sample(3, 1.0, &mut rng).unwrap(), vec![0, 1, 2]);
        assert!(minibatch_sample(0, 0.5, &mut rng).is_err());
        assert!(minibatch_sample(5, 0.0, &mut rng).is_err());
        assert!(minibatch_sample(5, 1.5, &mut rng).is_err());
    }

    #[test]
    fn zero_iterations_keep_the_initial_weights() {
        let data = streaks(4, 1);
        let cfg = TrainConfig {
            iterations: 0,
            rounds: 1,
            ..small_cfg()
        };
        let out = train(&data, &cfg).unwrap();
        let r = &out.rounds[0];
        assert_eq!(r.iterations, 0);
        assert_eq!(r.alpha_train, r.alpha_initial);
        let init = init_network(cfg.n_layers, 6, &mut stream_rng(cfg.seed, INIT_STREAM)).unwrap();
        assert_eq!(out.model.params, init);
    }

    #[test]
    fn training_is_bit_reproducible() {
        let data = streaks(6, 2);
        let a = train(&data, &small_cfg()).unwrap();
        let b = train(&data, &small_cfg()).unwrap();
        assert_eq!(a.model, b.model);
        let alphas = |o: &TrainOutcome| o.rounds.iter().map(|r| r.alpha_train.to_bits()).collect::<Vec<_>>();
        assert_eq!(alphas(&a), alphas(&b));
        let c = train(&data, &TrainConfig { seed: 1, ..small_cfg() }).unwrap();
        assert_ne!(a.model.params, c.model.params);
    }

    #[test]
    fn training_lowers_the_batch_objective() {
        let out = train(&streaks(6, 3), &small_cfg()).unwrap();
        for r in &out.rounds {
            assert!(
                r.alpha_train <= r.alpha_initial,
                "{} > {}",
                r.alpha_train,
                r.alpha_initial
            );
        }
        assert_eq!(out.model.encoder_ranks.len(), small_cfg().n_layers / 2 + 1);
    }

    fn zero_model(cfg: TrainConfig) -> TrainedModel {
        TrainedModel {
            params: NetworkParams::zeros(cfg.n_layers, 6).unwrap(),
            encoder_ranks: vec![6; cfg.n_layers / 2 + 1],
            image_dims: (6, 6),
            config: cfg,
        }
    }

    #[test]
    fn zero_model_reconstructs_smoothed_input() {
        let data = streaks(5, 4);
        let cfg = small_cfg();
        let delta = cfg.relu_delta;
        let out = test(&zero_model(cfg), &data, 2).unwrap();
        // Smoothed ReLU written out independently of the library.
        let relu = |x: f64| {
            if x <= 0.0 {
                0.0
            } else if x < delta {
                0.5 * x * x / delta
            } else {
                x - 0.5 * delta
            }
        };
        let mut worst: f64 = 0.0;
        for (r, x) in out.reconstructions.images().iter().zip(data.input.images()) {
            worst = worst.max((r - x.map(relu)).amax());
        }
        assert!(worst < 1e-12, "{worst}");
        assert_eq!(out.batches.iter().map(|b| b.size).collect::<Vec<_>>(), vec![2, 2, 1]);
    }

    #[test]
    fn batch_size_does_not_change_zero_model_output() {
        let data = streaks(5, 5);
        let model = zero_model(small_cfg());
        let one = test(&model, &data, 1).unwrap();
        let all = test(&model, &data, 5).unwrap();
        for (a, b) in one.reconstructions.images().iter().zip(all.reconstructions.images()) {
            assert!((a - b).amax() < 1e-13);
        }
        assert!((one.metrics.mse - all.metrics.mse).abs() < 1e-15);
    }

    #[test]
    fn test_rejects_mismatched_inputs() {
        let model = zero_model(small_cfg());
        let wrong = {
            let clean = vertical_streaks(2, 5, 6, 0).unwrap();
            PairedSet::new(clean.clone(), clean).unwrap()
        };
        assert!(test(&model, &wrong, 1).is_err());
        assert!(test(&model, &streaks(2, 0), 0).is_err());
        let odd_layers = train(
            &streaks(2, 0),
            &TrainConfig {
                n_layers: 3,
                ..small_cfg()
            },
        );
        assert!(odd_layers.is_err());
    }
}
