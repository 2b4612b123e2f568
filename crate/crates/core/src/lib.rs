//! Matrix Dyson equation solver for Kronecker random matrices.
//!
//! The crate builds Kronecker models, hermitizes them, solves the vector Dyson
//! equation for the K×K blocks of the resolvent and derives densities of states,
//! support estimates and self-consistent pseudospectra. A sampler draws random
//! realizations for comparison against the deterministic predictions.

pub mod error;
pub mod linalg;
pub mod model;
pub mod modelfile;
pub mod presets;
pub mod sampler;
pub mod mde;
pub mod spectrum;
pub mod superop;

pub use error::{Error, Result};
pub use linalg::{CMat, C64};
pub use model::{HermitianDysonData, KroneckerModel};
pub use superop::BlockVector;
