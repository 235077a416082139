//! Multi-resolution surrogate modeling for mesh-discretized dynamics.
//!
//! The pipeline: coarsen a mesh into a hierarchy of levels by quadric-error
//! simplification ([`sampling`]), train a graph-convolutional autoencoder
//! surrogate on the coarsest level ([`surrogate`]), then refine level by level
//! with the coarse networks frozen ([`transfer`]). Predictions at any level
//! can be lifted back to the full mesh through the precomposed static
//! upsampling operators.

pub mod datagen;
pub mod error;
pub mod eval;
pub mod field;
pub mod linalg;
pub mod mesh;
pub mod nn;
pub mod sampling;
pub mod sparse;
pub mod surrogate;
pub mod transfer;

pub use error::{Error, Result};
