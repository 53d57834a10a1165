//! Monte Carlo engine, verification suite, rate sweep and output.

pub mod config;
pub mod emit;
pub mod montecarlo;
pub mod sweep;
pub mod verify;

pub use config::{DistanceConfig, DistanceTarget, ExperimentConfig, Grid, GridPoint, OutputConfig, OutputFormat};
pub use montecarlo::{run_replicas, CheckResult, Verdict};
pub use sweep::{fit_log_slope, rate_sweep, SweepResult, SweepRow};
pub use verify::{verify_suite, VerifyOptions, VerifyReport};
