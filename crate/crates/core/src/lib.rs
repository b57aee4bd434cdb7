//! Graph neural layers, multi-scale convolutional fusion and the training,
//! evaluation and data plumbing around them.
//!
//! The numeric core ([`linalg`], [`graph`], [`nn`], [`gnn`]) is generic over
//! [`Scalar`] (`f32` or `f64`). Models, training and checkpoints run in
//! `f64`, for which the aliases below exist.

pub mod audit;
pub mod data;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod params;
mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use params::ParamRegistry;
pub use scalar::Scalar;

pub type Matrix = linalg::Matrix<f64>;
pub type Matrix32 = linalg::Matrix<f32>;
pub type FeatureMap = nn::FeatureMap<f64>;
pub type FeatureMap32 = nn::FeatureMap<f32>;
pub type Graph = graph::Graph<f64>;
