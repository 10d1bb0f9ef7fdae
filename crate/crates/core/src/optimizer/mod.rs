//! Parameter initialization, flattening and the BFGS solver.

pub mod bfgs;
pub mod flat;
pub mod init;

pub use bfgs::{bfgs_minimize, SolveResult, SolverConfig, Termination};
pub use flat::{flatten, unflatten, FlatLayout, FlatParams, ParamKind, Segment, Stage};
pub use init::{init_network, xavier_init, xavier_init_with};
