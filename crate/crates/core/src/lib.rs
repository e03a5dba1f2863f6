//! Multi-horizon forecasting of dynamic toll prices and travel-time
//! differences on a 6-minute grid.
//!
//! The pipeline runs feed ingestion ([`ingest`]) into fusion of route travel
//! times and volumes ([`fusion`]), then trains per-horizon predictors
//! ([`models`]) and scores them against the persistence baseline ([`eval`]).
//! [`synth`] generates a seeded synthetic corridor for end-to-end runs.

pub mod num;
pub mod numkit;
pub mod seed;
pub mod fusion;
pub mod ingest;
pub mod eval;
pub mod models;
pub mod study;
pub mod synth;

pub use num::Real;

/// Double-precision instantiations of the generic numeric types.
pub type Tensor = numkit::Tensor<f64>;
pub type ModelArtifact = models::ModelArtifact<f64>;
pub type Mlp = models::Mlp<f64>;
pub type Lstm = models::Lstm<f64>;
pub type Forest = models::Forest<f64>;
pub type Standardizer = models::Standardizer<f64>;
