//! Design variables, regularization weights and rank profiles.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weight matrix `K` (square, side `n_fr`) and scalar bias `b` of one layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub k: DMatrix<f64>,
    pub b: f64,
}

impl LayerParams {
    pub fn zeros(n_fr: usize) -> Self {
        Self {
            k: DMatrix::zeros(n_fr, n_fr),
            b: 0.0,
        }
    }

    pub fn n_fr(&self) -> usize {
        self.k.nrows()
    }

    pub fn is_finite(&self) -> bool {
        self.b.is_finite() && self.k.iter().all(|x| x.is_finite())
    }
}

/// All design variables: `N_e` encoder layers followed by `N_d = N_e`
/// decoder layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub encoder: Vec<LayerParams>,
    pub decoder: Vec<LayerParams>,
}

impl NetworkParams {
    pub fn new(encoder: Vec<LayerParams>, decoder: Vec<LayerParams>) -> Result<Self> {
        let p = Self { encoder, decoder };
        p.validate()?;
        Ok(p)
    }

    pub fn zeros(n_layers: usize, n_fr: usize) -> Result<Self> {
        check_layer_count(n_layers)?;
        let half = n_layers / 2;
        Self::new(
            vec![LayerParams::zeros(n_fr); half],
            vec![LayerParams::zeros(n_fr); half],
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder.is_empty() || self.decoder.is_empty() {
            return Err(Error::invalid("encoder and decoder must each have at least one layer"));
        }
        if self.encoder.len() != self.decoder.len() {
            return Err(Error::invalid(format!(
                "asymmetric network: {} encoder vs {} decoder layers",
                self.encoder.len(),
                self.decoder.len()
            )));
        }
        let n = self.n_fr();
        for (i, layer) in self.layers().enumerate() {
            if layer.k.nrows() != n || layer.k.ncols() != n {
                return Err(Error::shape(format!(
                    "layer {i} has a {}x{} weight, expected {n}x{n}",
                    layer.k.nrows(),
                    layer.k.ncols()
                )));
            }
            if !layer.is_finite() {
                return Err(Error::invalid(format!("layer {i} has non-finite entries")));
            }
        }
        Ok(())
    }

    pub fn n_layers(&self) -> usize {
        self.encoder.len() + self.decoder.len()
    }

    pub fn n_encoder(&self) -> usize {
        self.encoder.len()
    }

    pub fn n_decoder(&self) -> usize {
        self.decoder.len()
    }

    pub fn n_fr(&self) -> usize {
        self.encoder.first().map_or(0, LayerParams::n_fr)
    }

    /// Encoder layers then decoder layers.
    pub fn layers(&self) -> impl Iterator<Item = &LayerParams> {
        self.encoder.iter().chain(&self.decoder)
    }
}

pub(crate) fn check_layer_count(n_layers: usize) -> Result<()> {
    if n_layers < 2 || n_layers % 2 != 0 {
        return Err(Error::invalid(format!(
            "layer count must be even and >= 2, got {n_layers}"
        )));
    }
    Ok(())
}

/// Regularization weights: `λ1` encoder weights, `λ2` decoder weights,
/// `λ3` encoder biases, `λ4` decoder biases.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
}

impl RegWeights {
    pub fn new(lambda1: f64, lambda2: f64, lambda3: f64, lambda4: f64) -> Result<Self> {
        let w = Self {
            lambda1,
            lambda2,
            lambda3,
            lambda4,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, l) in [self.lambda1, self.lambda2, self.lambda3, self.lambda4]
            .into_iter()
            .enumerate()
        {
            if !(l.is_finite() && l >= 0.0) {
                return Err(Error::invalid(format!(
                    "lambda{} must be finite and >= 0, got {l}",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

/// Recorded layer ranks (largest interior TT rank per state).
///
/// `forward_encoder[j]` is the rank of `f_j` and `backward_encoder[j]` of
/// `P_j` for `j = 0..=N_e`; `forward_decoder[q]` and `backward_decoder[q]`
/// belong to `g_{N_e+q}` and `P̃_{N_e+q}` for `q = 0..=N_d`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankProfile {
    pub forward_encoder: Vec<usize>,
    pub forward_decoder: Vec<usize>,
    pub backward_decoder: Vec<usize>,
    pub backward_encoder: Vec<usize>,
}

/// Reverses encoder ranks into decoder rank caps.
pub fn flip(ranks: &[usize]) -> Vec<usize> {
    ranks.iter().rev().copied().collect()
}
