//! Recurrent-network training laboratory.
//!
//! Sum-of-products backpropagation through time, norm clipping, the
//! norm-preserving vanishing-gradient regularizer, the classic pathological
//! long-term-dependency tasks, and dynamical-systems diagnostics for small
//! recurrent maps.
//!
//! Numeric code is generic over [`Scalar`] (`f32`/`f64`); the aliases at the
//! crate root fix the scalar to `f64`, which every default tolerance assumes.

pub mod analysis;
pub mod error;
pub mod grad;
pub mod linalg;
pub mod model;
pub mod optim;
pub mod regularizer;
pub mod scalar;
pub mod serialize;
pub mod tasks;

pub use error::{Error, Result};
pub use model::Activation;
pub use scalar::Scalar;

pub type Vector = linalg::Vector<f64>;
pub type Matrix = linalg::Matrix<f64>;
pub type RnnParams = model::RnnParams<f64>;
pub type ParamGrads = model::ParamGrads<f64>;
pub type Trajectory = model::Trajectory<f64>;
pub type LossSpec = model::LossSpec<f64>;
pub type GradientReport = grad::GradientReport<f64>;
pub type TrainOutcome = optim::TrainOutcome<f64>;
pub type OmegaReport = regularizer::OmegaReport<f64>;
pub type OmegaGradient = regularizer::OmegaGradient<f64>;
