//! Dense tensors, the truncated Fourier transform, and a small reverse-mode
//! tape over the primitives the neural operator and the residual baseline need.

mod dense;
pub mod spectral;
mod tape;

use thiserror::Error;

pub use dense::{
    complex_as_real, complex_as_real_mut, dot, matmul_nt_bias, ComplexTensor, RealTensor,
};
pub use spectral::{dft_forward, dft_inverse, max_modes, Fft, SpectralPlan, SpectralScratch};
pub use tape::{Gradients, Tape, Value, Var};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{k_max} retained modes do not fit a grid of {n} points")]
    Modes { k_max: usize, n: usize },
    #[error("non-finite value")]
    NonFinite,
}
