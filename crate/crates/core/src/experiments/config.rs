//! Experiment configuration: one JSON document, unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::step_size_for_instance;
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::model::{make_instance, InstanceSpec, ProblemInstance};

/// Environment variable that overrides `master_seed`.
pub const SEED_ENV: &str = "LSA_GAUSS_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Grid {
    /// Explicit `(α, n)` pairs.
    Pairs { points: Vec<(f64, usize)> },
    /// `α_n = c log(n)/n` for each `n`; `c` defaults to `3/a`.
    Schedule {
        #[serde(default)]
        c: Option<f64>,
        n: Vec<usize>,
    },
    /// Each `α` with `n = ceil(n_factor · log(1/α)/(αa))`.
    Alphas {
        alphas: Vec<f64>,
        #[serde(default = "default_n_factor")]
        n_factor: f64,
    },
}

fn default_n_factor() -> f64 {
    3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceTarget {
    /// `N(0, Σ)` with `Σ` the Lyapunov solution.
    Lyapunov,
    /// `N(0, Σ^α_n)`.
    FiniteHorizon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceConfig {
    #[serde(default = "default_directions")]
    pub directions: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    #[serde(default = "default_target")]
    pub target: DistanceTarget,
}

fn default_directions() -> usize {
    crate::distance::DEFAULT_DIRECTIONS
}
fn default_delta() -> f64 {
    0.01
}
fn default_bootstrap() -> usize {
    100
}
fn default_target() -> DistanceTarget {
    DistanceTarget::Lyapunov
}

impl Default for DistanceConfig {
    fn default() -> Self {
        DistanceConfig {
            directions: default_directions(),
            delta: default_delta(),
            bootstrap: default_bootstrap(),
            target: default_target(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub path: PathBuf,
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceSpec,
    pub grid: Grid,
    pub replicas: usize,
    #[serde(default = "default_depth")]
    pub ladder_depth: usize,
    #[serde(default)]
    pub distance: DistanceConfig,
    pub master_seed: u64,
    #[serde(default)]
    pub output: Option<OutputConfig>,
    /// Defaults to `θ* + e₁`.
    #[serde(default)]
    pub theta0: Option<Vec<f64>>,
}

fn default_depth() -> usize {
    1
}

/// One resolved grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub alpha: f64,
    pub n: usize,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Applies `LSA_GAUSS_SEED` when set.
    pub fn with_env_seed(mut self) -> Result<Self> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.master_seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned 64-bit integer, got {v:?}")))?;
        }
        Ok(self)
    }

    pub fn build_instance(&self) -> Result<ProblemInstance> {
        make_instance(self.instance.clone()).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn theta0(&self, instance: &ProblemInstance) -> Result<Vector> {
        match &self.theta0 {
            Some(v) if v.len() == instance.dim => Ok(Vector::from_column_slice(v)),
            Some(v) => Err(Error::Config(format!("theta0 has {} entries, dimension is {}", v.len(), instance.dim))),
            None => {
                let mut t = instance.theta_star.clone();
                t[0] += 1.0;
                Ok(t)
            }
        }
    }

    /// Resolves the grid and checks A3 at every point.
    pub fn grid_points(&self, instance: &ProblemInstance) -> Result<Vec<GridPoint>> {
        let a = instance.a();
        let pts: Vec<GridPoint> = match &self.grid {
            Grid::Pairs { points } => points.iter().map(|&(alpha, n)| GridPoint { alpha, n }).collect(),
            Grid::Schedule { c, n } => n
                .iter()
                .map(|&n| Ok(GridPoint { alpha: step_size_for_instance(instance, n, *c)?, n }))
                .collect::<Result<_>>()
                .map_err(|e| Error::Config(e.to_string()))?,
            Grid::Alphas { alphas, n_factor } => alphas
                .iter()
                .map(|&alpha| GridPoint { alpha, n: horizon_for_alpha(alpha, a, *n_factor) })
                .collect(),
        };
        if pts.is_empty() {
            return Err(Error::Config("grid is empty".into()));
        }
        for p in &pts {
            if p.n == 0 {
                return Err(Error::Config("grid horizon must be >= 1".into()));
            }
            instance.check_step(p.alpha).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(pts)
    }

    /// Basic shape checks shared by every subcommand.
    pub fn validate(&self) -> Result<ProblemInstance> {
        let inst = self.build_instance()?;
        if self.replicas == 0 {
            return Err(Error::Config("replicas must be >= 1".into()));
        }
        if !(self.distance.delta > 0.0 && self.distance.delta < 1.0) {
            return Err(Error::Config(format!("distance.delta must lie in (0, 1), got {}", self.distance.delta)));
        }
        if self.distance.directions == 0 {
            return Err(Error::Config("distance.directions must be >= 1".into()));
        }
        self.theta0(&inst)?;
        self.grid_points(&inst)?;
        Ok(inst)
    }

    /// Theorem-level quantities also need `α‖Φ‖n ≥ 1/2`, non-degenerate noise and `R ≥ 100`.
    pub fn validate_for_theorem(&self) -> Result<(ProblemInstance, Vec<GridPoint>)> {
        let inst = self.validate()?;
        if self.replicas < crate::distance::MIN_SAMPLES {
            return Err(Error::Config(format!("replicas = {} < {}", self.replicas, crate::distance::MIN_SAMPLES)));
        }
        inst.moments.require_non_degenerate().map_err(|e| Error::Config(e.to_string()))?;
        let pts = self.grid_points(&inst)?;
        for p in &pts {
            let v = p.alpha * inst.moments.phi_norm * p.n as f64;
            if v < 0.5 {
                return Err(Error::Config(format!("alpha*|Phi|*n = {v} < 1/2 at alpha = {}, n = {}", p.alpha, p.n)));
            }
        }
        Ok((inst, pts))
    }
}

/// `ceil(factor · log(1/α)/(αa))`.
pub fn horizon_for_alpha(alpha: f64, a: f64, factor: f64) -> usize {
    (factor * (1.0 / alpha).ln() / (alpha * a)).ceil().max(1.0) as usize
}
