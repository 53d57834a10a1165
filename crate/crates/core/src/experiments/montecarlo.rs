//! Replicated simulation and Monte Carlo checks of the moment bounds.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{j1_h1_rhs, last_iter_moment_rhs, remainder_rhs};
use crate::covariance::sigma_alpha_n;
use crate::error::Result;
use crate::linalg::{self, Mat, Vector};
use crate::model::{ProblemInstance, SecondMoments};
use crate::rng::{stream, Purpose};
use crate::trajectory::{self, coupled_on_path, ladder_on_path, SamplePath, StepConfig};

/// Below this replica count every Monte Carlo verdict is inconclusive.
pub const MIN_CONCLUSIVE_REPLICAS: usize = 100;
/// One-sided slack, in standard errors, for bound checks.
pub const BOUND_SLACK_SE: f64 = 4.0;
/// Two-sided tolerance, in standard errors, for entrywise covariance checks.
pub const COVARIANCE_TOL_SE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// One named check with the numbers that decided it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub verdict: Verdict,
    pub measured: f64,
    pub bound: f64,
    pub std_error: Option<f64>,
    pub detail: String,
}

impl CheckResult {
    pub fn exact(name: impl Into<String>, pass: bool, measured: f64, bound: f64, detail: impl Into<String>) -> Self {
        CheckResult {
            name: name.into(),
            verdict: if pass { Verdict::Pass } else { Verdict::Fail },
            measured,
            bound,
            std_error: None,
            detail: detail.into(),
        }
    }
}

/// Order-preserving parallel map over replica indices.
pub fn replicate<T: Send, F: Fn(usize) -> T + Sync + Send>(r: usize, f: F) -> Vec<T> {
    (0..r).into_par_iter().map(f).collect()
}

/// `R × d` matrix of rescaled final errors `(θ_n - θ*)/√α`; replica `r` uses stream `(master, point, r)`.
pub fn run_replicas(
    instance: &ProblemInstance,
    config: &StepConfig,
    replicas: usize,
    master: u64,
    point: usize,
) -> Result<Mat> {
    config.validate(instance)?;
    let scale = 1.0 / config.alpha.sqrt();
    let rows = replicate(replicas, |r| {
        let mut rng = stream(master, point, r, Purpose::Trajectory);
        trajectory::final_error_unchecked(instance, config, &mut rng) * scale
    });
    Ok(stack_rows(&rows, instance.dim))
}

pub fn stack_rows(rows: &[Vector], d: usize) -> Mat {
    Mat::from_fn(rows.len(), d, |i, j| rows[i][j])
}

/// `J⁽⁰⁾_n` on a fresh path.
pub fn draw_linear_proxy<R: Rng + ?Sized>(instance: &ProblemInstance, alpha: f64, n: usize, rng: &mut R) -> Vector {
    let g = trajectory::contraction_matrix(instance.phi(), alpha);
    let d = instance.dim;
    let (mut j, mut tmp) = (Vector::zeros(d), Vector::zeros(d));
    let (mut x, mut eps) = (Vector::zeros(d), Vector::zeros(d));
    for _ in 0..n {
        let y = instance.sample_into(rng, &mut x);
        instance.noise_at_optimum_into(&x, y, &mut eps);
        tmp.gemv(1.0, &g, &j, 0.0);
        std::mem::swap(&mut j, &mut tmp);
        j.axpy(-alpha, &eps, 1.0);
    }
    j
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var)
}

/// `E^{1/2}‖V‖²` from samples of `‖V‖²`, with a delta-method standard error, against `rhs`.
pub fn rms_bound_check(name: impl Into<String>, squared_norms: &[f64], rhs: f64) -> CheckResult {
    let r = squared_norms.len();
    let (m, v) = mean_var(squared_norms);
    let est = m.sqrt();
    let se_m = (v / r as f64).sqrt();
    let se = if est > 0.0 { se_m / (2.0 * est) } else { se_m.sqrt() };
    let verdict = if r < MIN_CONCLUSIVE_REPLICAS {
        Verdict::Inconclusive
    } else if est <= rhs + BOUND_SLACK_SE * se {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    CheckResult {
        name: name.into(),
        verdict,
        measured: est,
        bound: rhs,
        std_error: Some(se),
        detail: format!("R = {r}, slack = {BOUND_SLACK_SE} se"),
    }
}

/// Entrywise `|E[vvᵀ]_ij - target_ij| ≤ 5 se_ij` for mean-zero samples; `measured` is the largest z-score.
pub fn second_moment_check(name: impl Into<String>, samples: &[Vector], target: &Mat) -> CheckResult {
    let r = samples.len();
    let d = target.nrows();
    let mut worst = 0.0f64;
    let mut worst_se = 0.0;
    for i in 0..d {
        for j in i..d {
            let prods: Vec<f64> = samples.iter().map(|v| v[i] * v[j]).collect();
            let (m, var) = mean_var(&prods);
            let se = (var / r as f64).sqrt();
            let diff = (m - target[(i, j)]).abs();
            let z = if se > 0.0 {
                diff / se
            } else if diff <= 1e-12 * (1.0 + target[(i, j)].abs()) {
                0.0
            } else {
                f64::INFINITY
            };
            if z > worst {
                worst = z;
                worst_se = se;
            }
        }
    }
    let verdict = if r < MIN_CONCLUSIVE_REPLICAS {
        Verdict::Inconclusive
    } else if worst <= COVARIANCE_TOL_SE {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    CheckResult {
        name: name.into(),
        verdict,
        measured: worst,
        bound: COVARIANCE_TOL_SE,
        std_error: Some(worst_se),
        detail: format!("R = {r}, max entrywise z-score"),
    }
}

/// `E^{1/2}‖θ_k - θ*‖²` against the last-iterate bound (bounded noise only).
pub fn last_iterate_check(
    instance: &ProblemInstance,
    alpha: f64,
    k: usize,
    theta0: &Vector,
    replicas: usize,
    master: u64,
    point: usize,
) -> Result<CheckResult> {
    let rhs = last_iter_moment_rhs(instance, alpha, k, theta0)?;
    let cfg = StepConfig::new(alpha, k, theta0.clone());
    let z = run_replicas(instance, &cfg, replicas, master, point)?;
    let sq: Vec<f64> = z.row_iter().map(|row| row.norm_squared() * alpha).collect();
    Ok(rms_bound_check(format!("last_iterate[alpha={alpha},k={k}]"), &sq, rhs))
}

/// `J⁽¹⁾`, `H⁽¹⁾` and `D_n` second moments against their bounds, from one set of depth-1 ladders.
pub fn ladder_checks(
    instance: &ProblemInstance,
    config: &StepConfig,
    replicas: usize,
    master: u64,
    point: usize,
) -> Result<Vec<CheckResult>> {
    config.validate(instance)?;
    let lad = replicate(replicas, |r| {
        let mut rng = stream(master, point, r, Purpose::Trajectory);
        let path = SamplePath::draw(instance, config.n, &mut rng);
        let l = ladder_on_path(instance, config, 1, &path);
        let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        (sq(&l.j[1]), sq(&l.h_tail), sq(&l.d))
    });
    let (j_rhs, h_rhs) = j1_h1_rhs(instance, config.alpha);
    let d_rhs = remainder_rhs(instance, config.alpha, config.n, &config.theta0, None)?.value;
    let tag = format!("alpha={},n={}", config.alpha, config.n);
    let col = |f: fn(&(f64, f64, f64)) -> f64| lad.iter().map(f).collect::<Vec<_>>();
    Ok(vec![
        rms_bound_check(format!("j1[{tag}]"), &col(|t| t.0), j_rhs),
        rms_bound_check(format!("h1[{tag}]"), &col(|t| t.1), h_rhs),
        rms_bound_check(format!("remainder[{tag}]"), &col(|t| t.2), d_rhs),
    ])
}

/// `E^{1/2}‖D_n - D⁽ⁱ⁾_n‖²` against its bound.
pub fn coupled_check(
    instance: &ProblemInstance,
    config: &StepConfig,
    i: usize,
    replicas: usize,
    master: u64,
    point: usize,
) -> Result<CheckResult> {
    let rhs = remainder_rhs(instance, config.alpha, config.n, &config.theta0, Some(i))?;
    let sq = replicate(replicas, |r| {
        let mut rng = stream(master, point, r, Purpose::Trajectory);
        let mut crng = stream(master, point, r, Purpose::Coupling);
        let path = SamplePath::draw(instance, config.n, &mut rng);
        let (x, y) = instance.sample_pair(&mut crng);
        let c = coupled_on_path(instance, config, &path, i, x, y);
        c.d_diff.iter().map(|v| v * v).sum::<f64>()
    });
    let mut out = rms_bound_check(format!("remainder_diff[alpha={},n={},i={i}]", config.alpha, config.n), &sq, rhs.value);
    if rhs.exponent_clamped {
        out.detail.push_str(", exponent clamped at 0");
    }
    Ok(out)
}

/// `E‖(I - αXXᵀ)u‖² ≤ (1 - aα)‖u‖²` for a unit `u`.
pub fn contraction_check(
    instance: &ProblemInstance,
    alpha: f64,
    u: &Vector,
    replicas: usize,
    master: u64,
    point: usize,
) -> CheckResult {
    let vals = replicate(replicas, |r| {
        let mut rng = stream(master, point, r, Purpose::Auxiliary);
        let mut x = Vector::zeros(instance.dim);
        instance.sample_into(&mut rng, &mut x);
        let v = u - &x * (alpha * x.dot(u));
        v.norm_squared()
    });
    let (m, var) = mean_var(&vals);
    let se = (var / replicas as f64).sqrt();
    let rhs = (1.0 - instance.a() * alpha) * u.norm_squared();
    let verdict = if replicas < MIN_CONCLUSIVE_REPLICAS {
        Verdict::Inconclusive
    } else if m <= rhs + BOUND_SLACK_SE * se {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    CheckResult {
        name: format!("contraction[alpha={alpha}]"),
        verdict,
        measured: m,
        bound: rhs,
        std_error: Some(se),
        detail: format!("R = {replicas}"),
    }
}

/// Draws `J⁽⁰⁾_n/√α` for `R` replicas.
pub fn linear_proxy_samples(
    instance: &ProblemInstance,
    alpha: f64,
    n: usize,
    replicas: usize,
    master: u64,
    point: usize,
) -> Vec<Vector> {
    let s = 1.0 / alpha.sqrt();
    replicate(replicas, |r| {
        let mut rng = stream(master, point, r, Purpose::Trajectory);
        draw_linear_proxy(instance, alpha, n, &mut rng) * s
    })
}

/// Second moment of `{Σ^α_n}^{-1/2} J⁽⁰⁾_n/√α` against `I_d`, whitening with the covariance
/// computed from `moments` (the instance's own, or a tampered copy for negative controls).
pub fn whitening_check(
    instance: &ProblemInstance,
    moments: &SecondMoments,
    alpha: f64,
    n: usize,
    replicas: usize,
    master: u64,
    point: usize,
) -> Result<CheckResult> {
    let s_n = sigma_alpha_n(moments, alpha, n)?;
    let w = linalg::inv_sqrt_spd(&s_n, "finite-horizon covariance")?;
    let samples: Vec<Vector> = linear_proxy_samples(instance, alpha, n, replicas, master, point)
        .iter()
        .map(|v| &w * v)
        .collect();
    let d = instance.dim;
    Ok(second_moment_check(format!("whitening[alpha={alpha},n={n}]"), &samples, &Mat::identity(d, d)))
}

/// Second moment of `J⁽⁰⁾_n/√α` against `Σ^α_n`.
pub fn finite_horizon_covariance_check(
    instance: &ProblemInstance,
    alpha: f64,
    n: usize,
    replicas: usize,
    master: u64,
    point: usize,
) -> Result<CheckResult> {
    let s_n = sigma_alpha_n(&instance.moments, alpha, n)?;
    let samples = linear_proxy_samples(instance, alpha, n, replicas, master, point);
    Ok(second_moment_check(format!("sigma_alpha_n_mc[alpha={alpha},n={n}]"), &samples, &s_n))
}
