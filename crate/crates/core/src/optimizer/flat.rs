//! Flat parameter vectors for the optimizer.
//!
//! Layout: encoder layers `0..N_e`, then decoder layers; each layer stores
//! its weight column-major followed by its bias.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{LayerParams, NetworkParams};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Encoder,
    Decoder,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    Weight,
    Bias,
}

/// One contiguous block of the flat vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub stage: Stage,
    pub layer: usize,
    pub kind: ParamKind,
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlatLayout {
    pub n_fr: usize,
    pub n_encoder: usize,
    pub n_decoder: usize,
}

impl FlatLayout {
    fn layer_len(&self) -> usize {
        self.n_fr * self.n_fr + 1
    }

    pub fn len(&self) -> usize {
        (self.n_encoder + self.n_decoder) * self.layer_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn segments(&self) -> Vec<Segment> {
        let w = self.n_fr * self.n_fr;
        let stages = [(Stage::Encoder, self.n_encoder), (Stage::Decoder, self.n_decoder)];
        let mut out = Vec::new();
        let mut offset = 0;
        for (stage, count) in stages {
            for layer in 0..count {
                out.push(Segment {
                    stage,
                    layer,
                    kind: ParamKind::Weight,
                    offset,
                    len: w,
                });
                out.push(Segment {
                    stage,
                    layer,
                    kind: ParamKind::Bias,
                    offset: offset + w,
                    len: 1,
                });
                offset += w + 1;
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlatParams {
    pub values: Vec<f64>,
    pub layout: FlatLayout,
}

pub fn flatten(params: &NetworkParams) -> Result<FlatParams> {
    params.validate()?;
    let layout = FlatLayout {
        n_fr: params.n_fr(),
        n_encoder: params.n_encoder(),
        n_decoder: params.n_decoder(),
    };
    let mut values = Vec::with_capacity(layout.len());
    for layer in params.layers() {
        values.extend_from_slice(layer.k.as_slice());
        values.push(layer.b);
    }
    Ok(FlatParams { values, layout })
}

pub fn unflatten(flat: &FlatParams) -> Result<NetworkParams> {
    let l = flat.layout;
    if flat.values.len() != l.len() {
        return Err(Error::shape(format!(
            "flat vector has {} entries, layout needs {}",
            flat.values.len(),
            l.len()
        )));
    }
    let w = l.n_fr * l.n_fr;
    let mut layers = flat.values.chunks_exact(l.layer_len()).map(|c| LayerParams {
        k: DMatrix::from_column_slice(l.n_fr, l.n_fr, &c[..w]),
        b: c[w],
    });
    let encoder = layers.by_ref().take(l.n_encoder).collect();
    let decoder = layers.collect();
    NetworkParams::new(encoder, decoder)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::init_network;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_and_length() {
        let p = init_network(6, 5, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let f = flatten(&p).unwrap();
        assert_eq!(f.values.len(), 3 * 26 + 3 * 26);
        assert_eq!(unflatten(&f).unwrap(), p);
        let segs = f.layout.segments();
        assert_eq!(segs.len(), 12);
        assert_eq!(segs[1].offset, 25);
        assert_eq!(f.values[segs[7].offset], p.decoder[0].b);
    }

    #[test]
    fn rejects_bad_inputs() {
        let empty = NetworkParams {
            encoder: vec![LayerParams::zeros(3)],
            decoder: vec![],
        };
        assert!(flatten(&empty).is_err());
        let mut f = flatten(&NetworkParams::zeros(2, 3).unwrap()).unwrap();
        f.values.pop();
        assert!(unflatten(&f).is_err());
    }
}
