//! Reverse-mode differentiation and graph-convolutional building blocks.

mod check;
mod gemm;
mod layers;
mod params;
mod tape;
mod tensor;

pub use check::{chebyshev_series, grad_check, spectral_oracle, GradCheck, GRAD_CHECK_FLOOR, SPECTRAL_ORACLE_MAX_NODES};
pub use layers::{count_params, Activation, ChebConvLayer, Dense, LayerSpec};
pub use params::{glorot_uniform, ParamStore};
pub use tape::{chebyshev_basis, elu, Gradients, NodeMap, Tape, Var};
pub use tensor::Tensor;
