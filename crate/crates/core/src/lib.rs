//! Continuous-time autoencoders on tensor-train manifolds.
//!
//! States and adjoints of the encoder/decoder ODEs are carried as three-way
//! TT tensors ([`tt`]) and integrated with a rank-adaptive explicit Euler
//! scheme ([`dynamics`]).

pub mod autoencoder;
pub mod data;
pub mod dynamics;
pub mod error;
pub mod optimizer;
pub mod training;
pub mod tt;

pub use error::{Error, Result};
pub use nalgebra;
