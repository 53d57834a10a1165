//! Gaussian approximation diagnostics for constant-step SGD on linear least squares.
//!
//! The core types are [`ProblemInstance`] (a data distribution with its second
//! moments), [`StepConfig`] (step size, horizon, starting point) and the
//! experiment driver in [`experiments`].

pub mod bounds;
pub mod covariance;
pub mod distance;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod trajectory;

pub use error::{Error, Result};
pub use linalg::{Mat, Vector};
pub use model::{
    make_instance, presets, validate_assumptions, FeatureDistribution, InstanceSpec, ProblemInstance, ResponseNoise,
    SecondMoments, ValidationReport,
};
pub use trajectory::{DecompositionLadder, SamplePath, StepConfig};
