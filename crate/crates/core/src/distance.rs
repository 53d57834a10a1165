//! Computable lower bounds on the convex distance between an empirical law and a centred Gaussian.
//!
//! Two convex classes are used: halfspaces (through random one-dimensional projections) and
//! centred ellipsoids `{x : ‖Σ^{-1/2}x‖ ≤ r}`. Both are sub-families of all convex sets, so the
//! estimates here never exceed the convex distance itself, up to sampling error.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_lr;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};

/// Minimum sample count for the multivariate estimators.
pub const MIN_SAMPLES: usize = 100;
pub const DEFAULT_DIRECTIONS: usize = 64;
/// Cap for [`convex_surrogate_adaptive`].
pub const MAX_DIRECTIONS: usize = 4096;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Chi-square CDF with `d` degrees of freedom.
pub fn chi2_cdf(x: f64, d: usize) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x.is_infinite() {
        1.0
    } else {
        gamma_lr(d as f64 / 2.0, x / 2.0)
    }
}

/// DKW half-width `√(ln(2/δ)/(2R))`.
pub fn dkw_halfwidth(r: usize, delta: f64) -> f64 {
    ((2.0 / delta).ln() / (2.0 * r as f64)).sqrt()
}

/// Maps each row `x` to `Σ^{-1/2}x`.
pub fn whiten(samples: &Mat, sigma: &Mat) -> Result<Mat> {
    if samples.ncols() != sigma.nrows() {
        return Err(Error::Dimension { expected: sigma.nrows(), got: samples.ncols() });
    }
    let w = linalg::inv_sqrt_spd(sigma, "target covariance")?;
    Ok(samples * w)
}

/// `R` draws from `N(0, Σ)` as rows, using the symmetric square root.
pub fn sample_gaussian<R: Rng + ?Sized>(sigma: &Mat, r: usize, rng: &mut R) -> Result<Mat> {
    let root = linalg::sqrt_spd(sigma, "target covariance")?;
    let d = sigma.nrows();
    let z = Mat::from_fn(r, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(z * root)
}

/// `sup_t |F_R(t) - F(t)|` for a continuous target `F`, exact at the jump points (ties included).
pub fn ks_1d<F: Fn(f64) -> f64>(samples: &[f64], target_cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    ks_sorted(&mut xs, target_cdf)
}

fn ks_sorted<F: Fn(f64) -> f64>(xs: &mut [f64], target_cdf: F) -> f64 {
    let r = xs.len();
    if r == 0 {
        return 0.0;
    }
    xs.sort_unstable_by(f64::total_cmp);
    let rf = r as f64;
    let mut best = 0.0f64;
    let mut i = 0;
    while i < r {
        let v = xs[i];
        let mut j = i + 1;
        while j < r && xs[j] == v {
            j += 1;
        }
        let f = target_cdf(v);
        best = best.max((j as f64 / rf - f).abs()).max((f - i as f64 / rf).abs());
        i = j;
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceClass {
    HalfspaceProjected,
    CenteredBall,
    CombinedMax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceEstimate {
    pub value: f64,
    pub ci_halfwidth: f64,
    pub class: DistanceClass,
    #[serde(rename = "R")]
    pub num_samples: usize,
    #[serde(rename = "M")]
    pub num_directions: usize,
    /// Caller-supplied stream identifier; not interpreted here.
    pub seed: Option<u64>,
}

impl DistanceEstimate {
    /// Sampling noise dominates: `ci > value/2`.
    pub fn is_inconclusive(&self) -> bool {
        self.ci_halfwidth > self.value / 2.0
    }
}

fn check_samples(samples: &Mat, sigma: &Mat) -> Result<()> {
    if samples.nrows() < MIN_SAMPLES {
        return Err(Error::Precondition(format!("{} samples < {MIN_SAMPLES}", samples.nrows())));
    }
    if samples.ncols() != sigma.nrows() || !sigma.is_square() {
        return Err(Error::Dimension { expected: sigma.nrows(), got: samples.ncols() });
    }
    Ok(())
}

/// `M` uniform unit directions; `d = 1` always gives the single direction `+1`.
pub fn draw_directions<R: Rng + ?Sized>(d: usize, m: usize, rng: &mut R) -> Vec<Vector> {
    if d == 1 {
        return vec![Vector::from_element(1, 1.0)];
    }
    (0..m)
        .map(|_| loop {
            let v = Vector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let n = v.norm();
            if n > 1e-12 {
                break v / n;
            }
        })
        .collect()
}

fn projection_ks(samples: &Mat, sigma: &Mat, u: &Vector) -> f64 {
    let var = (u.transpose() * sigma * u)[(0, 0)];
    assert!(var > 0.0, "projected variance must be positive for SPD covariance");
    let sd = var.sqrt();
    let mut proj: Vec<f64> = (samples * u).iter().map(|p| p / sd).collect();
    ks_sorted(&mut proj, normal_cdf)
}

fn max_over(samples: &Mat, sigma: &Mat, dirs: &[Vector]) -> f64 {
    // max is order independent, so the parallel reduction is deterministic
    dirs.par_iter().map(|u| projection_ks(samples, sigma, u)).reduce(|| 0.0, f64::max)
}

/// Largest KS statistic of `x·u` against `N(0, uᵀΣu)` over `M` random directions.
pub fn projected_ks<R: Rng + ?Sized>(
    samples: &Mat,
    sigma: &Mat,
    directions: usize,
    delta: f64,
    rng: &mut R,
) -> Result<DistanceEstimate> {
    check_samples(samples, sigma)?;
    linalg::check_spd(sigma, "target covariance")?;
    if directions == 0 {
        return Err(Error::Precondition("direction count must be >= 1".into()));
    }
    let dirs = draw_directions(samples.ncols(), directions, rng);
    Ok(DistanceEstimate {
        value: max_over(samples, sigma, &dirs),
        ci_halfwidth: dkw_halfwidth(samples.nrows(), delta),
        class: DistanceClass::HalfspaceProjected,
        num_samples: samples.nrows(),
        num_directions: dirs.len(),
        seed: None,
    })
}

/// KS statistic of the whitened squared radius against chi-square with `d` degrees of freedom.
pub fn ball_distance(samples: &Mat, sigma: &Mat, delta: f64) -> Result<DistanceEstimate> {
    check_samples(samples, sigma)?;
    let w = whiten(samples, sigma)?;
    let d = samples.ncols();
    let r2: Vec<f64> = w.row_iter().map(|row| row.norm_squared()).collect();
    Ok(DistanceEstimate {
        value: ks_1d(&r2, |t| chi2_cdf(t, d)),
        ci_halfwidth: dkw_halfwidth(samples.nrows(), delta),
        class: DistanceClass::CenteredBall,
        num_samples: samples.nrows(),
        num_directions: 0,
        seed: None,
    })
}

fn combine(proj: DistanceEstimate, ball: DistanceEstimate) -> DistanceEstimate {
    DistanceEstimate {
        value: proj.value.max(ball.value),
        ci_halfwidth: proj.ci_halfwidth,
        class: DistanceClass::CombinedMax,
        num_samples: proj.num_samples,
        num_directions: proj.num_directions,
        seed: None,
    }
}

/// `max(projected_ks, ball_distance)`; a lower bound on the convex distance.
pub fn convex_surrogate<R: Rng + ?Sized>(
    samples: &Mat,
    sigma: &Mat,
    directions: usize,
    delta: f64,
    rng: &mut R,
) -> Result<DistanceEstimate> {
    let proj = projected_ks(samples, sigma, directions, delta, rng)?;
    let ball = ball_distance(samples, sigma, delta)?;
    Ok(combine(proj, ball))
}

/// [`convex_surrogate`] over a caller-supplied direction set (unit vectors).
pub fn convex_surrogate_with_directions(
    samples: &Mat,
    sigma: &Mat,
    directions: &[Vector],
    delta: f64,
) -> Result<DistanceEstimate> {
    check_samples(samples, sigma)?;
    if directions.is_empty() {
        return Err(Error::Precondition("direction count must be >= 1".into()));
    }
    let proj = DistanceEstimate {
        value: max_over(samples, sigma, directions),
        ci_halfwidth: dkw_halfwidth(samples.nrows(), delta),
        class: DistanceClass::HalfspaceProjected,
        num_samples: samples.nrows(),
        num_directions: directions.len(),
        seed: None,
    };
    Ok(combine(proj, ball_distance(samples, sigma, delta)?))
}

/// [`convex_surrogate`] starting at 64 directions and doubling (keeping earlier directions)
/// until the projected statistic grows by less than 10%, or [`MAX_DIRECTIONS`] is reached.
pub fn convex_surrogate_adaptive<R: Rng + ?Sized>(
    samples: &Mat,
    sigma: &Mat,
    delta: f64,
    rng: &mut R,
) -> Result<DistanceEstimate> {
    check_samples(samples, sigma)?;
    linalg::check_spd(sigma, "target covariance")?;
    let d = samples.ncols();
    let mut dirs = draw_directions(d, DEFAULT_DIRECTIONS, rng);
    let mut value = max_over(samples, sigma, &dirs);
    while d > 1 && dirs.len() < MAX_DIRECTIONS {
        let extra = draw_directions(d, dirs.len(), rng);
        let more = max_over(samples, sigma, &extra).max(value);
        dirs.extend(extra);
        let grew = more - value;
        value = more;
        if grew < 0.1 * value {
            break;
        }
    }
    let proj = DistanceEstimate {
        value,
        ci_halfwidth: dkw_halfwidth(samples.nrows(), delta),
        class: DistanceClass::HalfspaceProjected,
        num_samples: samples.nrows(),
        num_directions: dirs.len(),
        seed: None,
    };
    Ok(combine(proj, ball_distance(samples, sigma, delta)?))
}
