//! Semantically interpretable filter sets.
//!
//! An autoencoder with a sigmoid encoder and linear decoder is trained on
//! ZCA-whitened natural-image patches under an l1, l2 or elastic-net weight
//! penalty. Its encoder filters are grouped into color and edge concepts by
//! kurtosis, and concept-weighted responses drive two applications:
//! decolorization-robust recognition and full-reference quality scoring.

pub mod applications;
pub mod autoencoder;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod evalstats;
pub mod imageio;
pub mod patches;
pub mod semantics;
pub mod textblock;
pub mod trainer;

pub use error::{Error, Result};
