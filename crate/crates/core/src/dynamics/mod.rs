//! Two-scale Lorenz96 dynamics, the large-scale filter, subgrid targets, and
//! the fixed-step RK4 integrator.

mod lorenz96;
mod rk4;

pub use lorenz96::{
    coarse_tendency, coarse_tendency_into, filter, full_tendency, full_tendency_into,
    subgrid_target, subgrid_target_closed_form, CoarseState, FullState, ScaleParams,
};
pub use rk4::{rk4_step, OdeState, Rk4};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("invalid scale parameters: {0}")]
    InvalidParams(String),
    #[error("state shape mismatch: expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("state contains non-finite values")]
    NonFinite,
}
