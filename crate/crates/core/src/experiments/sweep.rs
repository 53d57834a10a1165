//! Rate sweep: convex-distance surrogate of `(θ_n - θ*)/√α` across step sizes and its log-log slope.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{DistanceTarget, ExperimentConfig, GridPoint};
use super::montecarlo::{replicate, rms_bound_check, run_replicas, CheckResult};
use crate::bounds::{compute_constants, last_iter_moment_rhs};
use crate::covariance::{covariance_lower_bound, prop1_gap, prop2_gap, sigma_alpha_n, solve_lyapunov};
use crate::distance::{convex_surrogate_with_directions, draw_directions};
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::model::ProblemInstance;
use crate::rng::{stream, Purpose};
use crate::trajectory::StepConfig;

/// One grid point of a sweep. The first fifteen fields are the CSV columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub n: usize,
    pub distance: f64,
    pub distance_ci: f64,
    pub theorem1_rhs: f64,
    pub prop1_measured: f64,
    pub prop1_paper: f64,
    pub prop1_corrected: f64,
    pub prop2_measured: f64,
    pub prop2_bound: f64,
    pub lb_measured: f64,
    pub lb_paper: f64,
    pub lb_corrected: f64,
    /// This row's share of the fitted slope; the column sums to the slope.
    pub slope_contrib: f64,
    pub wall_time_s: f64,
    /// `distance_ci > distance/2`.
    pub inconclusive: bool,
    /// `√α C₂ (1-αa/2)^{(n-1)/2}/α ‖θ₀-θ*‖ + C_{Δ,6}(1-αa)^{2(n+1)}`.
    pub geometric_terms: f64,
    /// `geometric_terms ≤ 0.1 √α C₁`.
    pub n_sufficient: bool,
    pub moment_checks: Vec<CheckResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub slope: f64,
    /// Percentile bootstrap interval over replicas, 95%.
    pub slope_ci: (f64, f64),
    pub bootstrap_samples: usize,
    pub any_inconclusive: bool,
    pub all_n_sufficient: bool,
}

/// Least-squares slope of `log y` on `log x`, and each point's additive share of it.
pub fn fit_log_slope(x: &[f64], y: &[f64]) -> (f64, Vec<f64>) {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|v| (v - mx).powi(2)).sum();
    let contrib: Vec<f64> = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my) / sxx).collect();
    (contrib.iter().sum(), contrib)
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn resample_rows<R: Rng + ?Sized>(z: &Mat, rng: &mut R) -> Mat {
    let r = z.nrows();
    let idx: Vec<usize> = (0..r).map(|_| rng.random_range(0..r)).collect();
    Mat::from_fn(r, z.ncols(), |i, j| z[(idx[i], j)])
}

fn check_sweep_grid(points: &[GridPoint]) -> Result<()> {
    if points.len() < 4 {
        return Err(Error::Config(format!("rate sweep needs >= 4 grid points, got {}", points.len())));
    }
    let hi = points.iter().map(|p| p.alpha).fold(f64::MIN, f64::max);
    let lo = points.iter().map(|p| p.alpha).fold(f64::MAX, f64::min);
    if hi < 8.0 * lo {
        return Err(Error::Config(format!("rate sweep needs an 8x range in alpha, got {}", hi / lo)));
    }
    Ok(())
}

struct PointOutcome {
    row: SweepRow,
    boot: Vec<f64>,
}

fn sweep_point(
    cfg: &ExperimentConfig,
    inst: &ProblemInstance,
    theta0: &Vector,
    index: usize,
    p: GridPoint,
) -> Result<PointOutcome> {
    let start = Instant::now();
    let m = &inst.moments;
    let step = StepConfig::new(p.alpha, p.n, theta0.clone());
    let z = run_replicas(inst, &step, cfg.replicas, cfg.master_seed, index)?;
    let target = match cfg.distance.target {
        DistanceTarget::Lyapunov => solve_lyapunov(&m.phi, &m.sigma_eps)?,
        DistanceTarget::FiniteHorizon => sigma_alpha_n(m, p.alpha, p.n)?,
    };
    let dirs = draw_directions(inst.dim, cfg.distance.directions, &mut stream(cfg.master_seed, index, 0, Purpose::Directions));
    let est = convex_surrogate_with_directions(&z, &target, &dirs, cfg.distance.delta)?;
    let boot = replicate(cfg.distance.bootstrap, |b| {
        let mut rng = stream(cfg.master_seed, index, b, Purpose::Bootstrap);
        let zb = resample_rows(&z, &mut rng);
        convex_surrogate_with_directions(&zb, &target, &dirs, cfg.distance.delta).map(|e| e.value)
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;

    let gap = (theta0 - &inst.theta_star).norm();
    let report = compute_constants(inst, p.alpha, p.n, gap)?;
    let a = m.a;
    let (alpha, n) = (p.alpha, p.n as f64);
    let geometric_terms = alpha.sqrt() * report.c2 * (1.0 - alpha * a / 2.0).powf((n - 1.0) / 2.0) / alpha * gap
        + report.c_delta[6] * (1.0 - alpha * a).powf(2.0 * (n + 1.0));
    let p1 = prop1_gap(m, alpha, p.n)?;
    let p2 = prop2_gap(m, alpha)?;
    let lb = covariance_lower_bound(m, alpha, p.n)?;

    let mut moment_checks = Vec::new();
    if inst.eps_ess_sup.is_some() {
        let rhs = last_iter_moment_rhs(inst, alpha, p.n, theta0)?;
        let sq: Vec<f64> = z.row_iter().map(|r| r.norm_squared() * alpha).collect();
        moment_checks.push(rms_bound_check(format!("last_iterate[alpha={alpha},k={}]", p.n), &sq, rhs));
    }

    let row = SweepRow {
        alpha,
        n: p.n,
        distance: est.value,
        distance_ci: est.ci_halfwidth,
        theorem1_rhs: report.theorem1_rhs,
        prop1_measured: p1.measured,
        prop1_paper: p1.paper_bound,
        prop1_corrected: p1.corrected_bound,
        prop2_measured: p2.measured,
        prop2_bound: p2.bound,
        lb_measured: lb.measured_min_eig,
        lb_paper: lb.paper_const,
        lb_corrected: lb.corrected_const,
        slope_contrib: 0.0,
        wall_time_s: start.elapsed().as_secs_f64(),
        inconclusive: est.is_inconclusive(),
        geometric_terms,
        n_sufficient: geometric_terms <= 0.1 * alpha.sqrt() * report.c1,
        moment_checks,
    };
    Ok(PointOutcome { row, boot })
}

/// Runs every grid point, fits the slope of `log distance` on `log α` and bootstraps it over replicas.
pub fn rate_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    let (inst, points) = cfg.validate_for_theorem()?;
    check_sweep_grid(&points)?;
    let theta0 = cfg.theta0(&inst)?;
    let outcomes = points
        .iter()
        .enumerate()
        .map(|(i, p)| sweep_point(cfg, &inst, &theta0, i, *p))
        .collect::<Result<Vec<_>>>()?;

    let alphas: Vec<f64> = outcomes.iter().map(|o| o.row.alpha).collect();
    let dists: Vec<f64> = outcomes.iter().map(|o| o.row.distance).collect();
    let (slope, contrib) = fit_log_slope(&alphas, &dists);

    let b = cfg.distance.bootstrap;
    let mut boot_slopes: Vec<f64> = (0..b)
        .map(|k| fit_log_slope(&alphas, &outcomes.iter().map(|o| o.boot[k]).collect::<Vec<_>>()).0)
        .filter(|s| s.is_finite())
        .collect();
    boot_slopes.sort_unstable_by(f64::total_cmp);
    let slope_ci = if boot_slopes.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (percentile(&boot_slopes, 0.025), percentile(&boot_slopes, 0.975))
    };

    let rows: Vec<SweepRow> = outcomes
        .into_iter()
        .zip(contrib)
        .map(|(o, c)| SweepRow { slope_contrib: c, ..o.row })
        .collect();
    Ok(SweepResult {
        any_inconclusive: rows.iter().any(|r| r.inconclusive),
        all_n_sufficient: rows.iter().all(|r| r.n_sufficient),
        rows,
        slope,
        slope_ci,
        bootstrap_samples: boot_slopes.len(),
    })
}
