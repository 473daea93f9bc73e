//! Fourier controller networks: a causal spectral convolution (CSC) mixer
//! with three equivalent execution paths, a stacked sequence model built on
//! it, and the data, training and benchmark tooling around them.
//!
//! Everything is generic over [`Scalar`]; the aliases below fix it to `f64`.

pub mod bench;
pub mod config;
pub mod csc;
pub mod data;
pub mod error;
pub mod model;
pub mod pipeline;
pub mod scalar;
pub mod spectral;
pub mod training;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Fcnet64 = model::Fcnet<f64>;
pub type Fcnet32 = model::Fcnet<f32>;
pub type StreamState64 = model::StreamState<f64>;
pub type CscWeights64 = csc::CscWeights<f64>;
