//! Training configuration and its flat `key = value` text form.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::SsimConfig;
use crate::autoencoder::{Activation, AdjointIndexing, AdjointScale, LossMeasure, ModelOptions, RegWeights};
use crate::dynamics::{BoundPolicy, TruncationBudget};
use crate::error::{Error, Result};
use crate::optimizer::SolverConfig;

/// A truncation constant, either fixed or tied to the step size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum BoundRule {
    /// `τ⁻¹`
    InverseTau,
    /// `τ⁻²`
    InverseTauSquared,
    Fixed(f64),
}

impl BoundRule {
    pub fn value(self, tau: f64) -> f64 {
        match self {
            BoundRule::InverseTau => 1.0 / tau,
            BoundRule::InverseTauSquared => 1.0 / (tau * tau),
            BoundRule::Fixed(v) => v,
        }
    }
}

impl fmt::Display for BoundRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundRule::InverseTau => f.write_str("tau^-1"),
            BoundRule::InverseTauSquared => f.write_str("tau^-2"),
            BoundRule::Fixed(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for BoundRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.replace(' ', "").as_str() {
            "tau^-1" | "1/tau" => Ok(BoundRule::InverseTau),
            "tau^-2" | "1/tau^2" => Ok(BoundRule::InverseTauSquared),
            other => match other.parse::<f64>() {
                Ok(v) if v > 0.0 && v.is_finite() => Ok(BoundRule::Fixed(v)),
                _ => Err(format!("expected tau^-1, tau^-2 or a positive number, got {s:?}")),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Total layer count `N`, split evenly between encoder and decoder.
    pub n_layers: usize,
    /// Final time `T`; the step is `τ = T/N`.
    pub final_time: f64,
    /// Mini-batch rounds `m1`.
    pub rounds: usize,
    /// Optimizer iterations per round `m2`.
    pub iterations: usize,
    pub reg: RegWeights,
    pub m_s: BoundRule,
    pub m_r: BoundRule,
    pub seed: u64,
    /// Knee width of the smoothed-ReLU output activation.
    pub relu_delta: f64,
    pub batch_fraction: f64,
    pub grad_tol: f64,
    pub measure: LossMeasure,
    pub adjoint_indexing: AdjointIndexing,
    pub adjoint_scale: AdjointScale,
    pub bound_policy: BoundPolicy,
    pub test_batch_size: usize,
    pub ssim: SsimConfig,
}

impl Default for TrainConfig {
    /// The denoising setup with twelve layers.
    fn default() -> Self {
        Self {
            n_layers: 12,
            final_time: 10.0,
            rounds: 3,
            iterations: 30,
            reg: RegWeights {
                lambda1: 1e-5,
                lambda2: 1e-5,
                lambda3: 1.0,
                lambda4: 1.0,
            },
            m_s: BoundRule::InverseTau,
            m_r: BoundRule::InverseTauSquared,
            seed: 0,
            relu_delta: crate::autoencoder::activation::DEFAULT_RELU_DELTA,
            batch_fraction: 0.5,
            grad_tol: 1e-5,
            measure: LossMeasure::Area,
            adjoint_indexing: AdjointIndexing::Consistent,
            adjoint_scale: AdjointScale::StateMatched,
            bound_policy: BoundPolicy::Record,
            test_batch_size: 20,
            ssim: SsimConfig::default(),
        }
    }
}

impl TrainConfig {
    /// The deblurring setup: no weight decay, lighter bias penalty.
    pub fn deblurring() -> Self {
        Self {
            reg: RegWeights {
                lambda1: 0.0,
                lambda2: 0.0,
                lambda3: 0.1,
                lambda4: 0.1,
            },
            ..Self::default()
        }
    }

    pub fn tau(&self) -> f64 {
        self.final_time / self.n_layers as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers < 2 || self.n_layers % 2 != 0 {
            return Err(Error::invalid(format!(
                "N must be even and at least 2, got {}",
                self.n_layers
            )));
        }
        if !(self.final_time > 0.0 && self.final_time.is_finite()) {
            return Err(Error::invalid(format!("T must be positive, got {}", self.final_time)));
        }
        if self.rounds == 0 {
            return Err(Error::invalid("m1 must be at least 1"));
        }
        if !(self.batch_fraction > 0.0 && self.batch_fraction <= 1.0) {
            return Err(Error::invalid(format!(
                "batch_fraction must lie in (0, 1], got {}",
                self.batch_fraction
            )));
        }
        if !(self.relu_delta > 0.0) {
            return Err(Error::invalid(format!(
                "delta must be positive, got {}",
                self.relu_delta
            )));
        }
        if self.test_batch_size == 0 {
            return Err(Error::invalid("test_batch_size must be positive"));
        }
        self.reg.validate()?;
        self.ssim.validate()?;
        self.budget()?;
        self.solver().validate()
    }

    pub fn budget(&self) -> Result<TruncationBudget> {
        let tau = self.tau();
        TruncationBudget::new(tau, self.m_s.value(tau), self.m_r.value(tau))
    }

    pub fn model_options(&self) -> Result<ModelOptions> {
        Ok(ModelOptions {
            budget: self.budget()?,
            hidden: Activation::Tanh,
            output: Activation::SmoothRelu { delta: self.relu_delta },
            measure: self.measure,
            adjoint_indexing: self.adjoint_indexing,
            adjoint_scale: self.adjoint_scale,
            policy: self.bound_policy,
            rank_cap: None,
        })
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            max_iters: self.iterations,
            grad_tol: self.grad_tol,
            ..SolverConfig::default()
        }
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Config { line: i + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
            cfg.set(key.trim(), value.trim()).map_err(err)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("bad value {v:?} for {key}"))
        }
        match key {
            "N" => self.n_layers = num(key, value)?,
            "T" => self.final_time = num(key, value)?,
            "m1" => self.rounds = num(key, value)?,
            "m2" => self.iterations = num(key, value)?,
            "lambda1" => self.reg.lambda1 = num(key, value)?,
            "lambda2" => self.reg.lambda2 = num(key, value)?,
            "lambda3" => self.reg.lambda3 = num(key, value)?,
            "lambda4" => self.reg.lambda4 = num(key, value)?,
            "M_s" => self.m_s = value.parse()?,
            "M_r" => self.m_r = value.parse()?,
            "seed" => self.seed = num(key, value)?,
            "delta" => self.relu_delta = num(key, value)?,
            "batch_fraction" => self.batch_fraction = num(key, value)?,
            "grad_tol" => self.grad_tol = num(key, value)?,
            "test_batch_size" => self.test_batch_size = num(key, value)?,
            "ssim_window" => self.ssim.window = num(key, value)?,
            "ssim_sigma" => self.ssim.sigma = num(key, value)?,
            "ssim_k1" => self.ssim.k1 = num(key, value)?,
            "ssim_k2" => self.ssim.k2 = num(key, value)?,
            "measure" => {
                self.measure = match value {
                    "area" => LossMeasure::Area,
                    "counting" => LossMeasure::Counting,
                    _ => return Err(format!("measure must be area or counting, got {value:?}")),
                }
            }
            "adjoint" => {
                self.adjoint_indexing = match value {
                    "consistent" => AdjointIndexing::Consistent,
                    "verbatim" => AdjointIndexing::Verbatim,
                    _ => return Err(format!("adjoint must be consistent or verbatim, got {value:?}")),
                }
            }
            "adjoint_scale" => {
                self.adjoint_scale = match value {
                    "absolute" => AdjointScale::Absolute,
                    "state" => AdjointScale::StateMatched,
                    "lossless" => AdjointScale::Lossless,
                    _ => {
                        return Err(format!(
                            "adjoint_scale must be absolute, state or lossless, got {value:?}"
                        ))
                    }
                }
            }
            "bound_policy" => {
                self.bound_policy = match value {
                    "record" => BoundPolicy::Record,
                    "abort" => BoundPolicy::Abort,
                    _ => return Err(format!("bound_policy must be record or abort, got {value:?}")),
                }
            }
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Text form accepted by [`TrainConfig::parse`], one key per line.
    pub fn to_text(&self) -> String {
        let measure = match self.measure {
            LossMeasure::Area => "area",
            LossMeasure::Counting => "counting",
        };
        let adjoint = match self.adjoint_indexing {
            AdjointIndexing::Consistent => "consistent",
            AdjointIndexing::Verbatim => "verbatim",
        };
        let scale = match self.adjoint_scale {
            AdjointScale::Absolute => "absolute",
            AdjointScale::StateMatched => "state",
            AdjointScale::Lossless => "lossless",
        };
        let policy = match self.bound_policy {
            BoundPolicy::Record => "record",
            BoundPolicy::Abort => "abort",
        };
        let r = &self.reg;
        let s = &self.ssim;
        format!(
            "N = {}\nT = {}\nm1 = {}\nm2 = {}\nlambda1 = {}\nlambda2 = {}\nlambda3 = {}\nlambda4 = {}\n\
             M_s = {}\nM_r = {}\nseed = {}\ndelta = {}\nbatch_fraction = {}\ngrad_tol = {}\n\
             measure = {measure}\nadjoint = {adjoint}\nadjoint_scale = {scale}\nbound_policy = {policy}\ntest_batch_size = {}\n\
             ssim_window = {}\nssim_sigma = {}\nssim_k1 = {}\nssim_k2 = {}\n",
            self.n_layers,
            self.final_time,
            self.rounds,
            self.iterations,
            r.lambda1,
            r.lambda2,
            r.lambda3,
            r.lambda4,
            self.m_s,
            self.m_r,
            self.seed,
            self.relu_delta,
            self.batch_fraction,
            self.grad_tol,
            self.test_batch_size,
            s.window,
            s.sigma,
            s.k1,
            s.k2,
        )
    }
}
