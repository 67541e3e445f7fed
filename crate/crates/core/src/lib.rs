//! Multiscale neural-operator workbench: a two-scale Lorenz96 simulator,
//! subgrid-target datasets, a Fourier neural operator with its own
//! reverse-mode tape, linear and residual-network baselines, coupled
//! rollouts with forecast-skill metrics, and a one-step runtime benchmark.
//!
//! Numerical code is generic over [`scalar::Scalar`] (`f32` or `f64`); the
//! aliases below fix the common instantiations.

pub mod baselines;
pub mod bench;
pub mod container;
pub mod dataset;
pub mod dynamics;
pub mod fno;
pub mod optim;
pub mod plot;
pub mod rng;
pub mod rollout;
pub mod scalar;
pub mod tensor;

pub type ScaleParams64 = dynamics::ScaleParams<f64>;
pub type ScaleParams32 = dynamics::ScaleParams<f32>;
pub type FullState64 = dynamics::FullState<f64>;
pub type FullState32 = dynamics::FullState<f32>;
pub type CoarseState64 = dynamics::CoarseState<f64>;
pub type CoarseState32 = dynamics::CoarseState<f32>;
pub type RealTensor64 = tensor::RealTensor<f64>;
pub type RealTensor32 = tensor::RealTensor<f32>;
pub type ComplexTensor64 = tensor::ComplexTensor<f64>;
pub type ComplexTensor32 = tensor::ComplexTensor<f32>;
pub type Tape64 = tensor::Tape<f64>;
pub type Tape32 = tensor::Tape<f32>;
pub type FnoParams64 = fno::FnoParams<f64>;
pub type FnoParams32 = fno::FnoParams<f32>;
pub type ResNetParams64 = baselines::ResNetParams<f64>;
pub type ResNetParams32 = baselines::ResNetParams<f32>;
pub type Adam64 = optim::Adam<f64>;
pub type Adam32 = optim::Adam<f32>;
