//! Verification suite: exact identities, oracle agreement, corrected bounds, Monte Carlo bound
//! checks, the two scalar counterexample pins and a tampered-noise negative control.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, GridPoint};
use super::montecarlo::{
    contraction_check, coupled_check, finite_horizon_covariance_check, last_iterate_check, ladder_checks,
    whitening_check, CheckResult, Verdict,
};
use crate::bounds::step_a_check;
use crate::covariance::{
    covariance_lower_bound, lyapunov_residual, prop1_gap, prop2_gap, riccati_residual, sigma_alpha_limit,
    sigma_alpha_n, solve_lyapunov,
};
use crate::error::Result;
use crate::linalg::{self, Mat, Vector};
use crate::model::{presets, ProblemInstance, SecondMoments};
use crate::rng::{stream, Purpose};
use crate::trajectory::{contraction_matrix, coupled_on_path, ladder_on_path, SamplePath, StepConfig};

/// Replica cap in quick mode.
pub const QUICK_REPLICAS: usize = 1000;
/// Seed slots per grid point.
const SLOTS: usize = 32;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub quick: bool,
    /// Whitens with `Σ_ε` scaled by this factor in the main whitening check (self-test).
    pub tamper_noise: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub pass: usize,
    pub fail: usize,
    pub inconclusive: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub master_seed: u64,
    pub replicas: usize,
    pub quick: bool,
    pub checks: Vec<CheckResult>,
    pub summary: Summary,
    pub wall_time_s: f64,
}

impl VerifyReport {
    /// 0 all pass, 1 any failure, 3 no failure but something inconclusive.
    pub fn exit_code(&self) -> i32 {
        if self.summary.fail > 0 {
            1
        } else if self.summary.inconclusive > 0 {
            3
        } else {
            0
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| c.verdict == Verdict::Fail)
    }
}

fn scalar_moments() -> SecondMoments {
    SecondMoments::new(Mat::from_element(1, 1, 1.0), Mat::from_element(1, 1, 1.0)).expect("unit scalar moments")
}

/// The scalar counterexamples: each passes when the printed bound is violated and the corrected one holds.
pub fn scalar_pins() -> Result<Vec<CheckResult>> {
    let m = scalar_moments();
    let p1 = prop1_gap(&m, 0.5, 2)?;
    let lb = covariance_lower_bound(&m, 0.5, 2)?;
    let sa = step_a_check(&presets::s1(), 0.1, 10)?;
    let pin = |name: &str, violated: bool, corrected: bool, measured: f64, paper: f64, fixed: f64| {
        let verdict = if violated && corrected { Verdict::Pass } else { Verdict::Fail };
        CheckResult {
            name: name.into(),
            verdict,
            measured,
            bound: fixed,
            std_error: None,
            detail: format!(
                "printed bound {paper:e}: {}; corrected bound {fixed:e}: {}",
                if violated { "violation reproduced" } else { "not violated" },
                if corrected { "holds" } else { "violated" }
            ),
        }
    };
    Ok(vec![
        pin(
            "pin/prop1_scalar[alpha=0.5,n=2]",
            p1.measured > p1.paper_bound,
            p1.measured <= p1.corrected_bound,
            p1.measured,
            p1.paper_bound,
            p1.corrected_bound,
        ),
        pin(
            "pin/lower_bound_scalar[alpha=0.5,n=2]",
            lb.measured_min_eig < lb.paper_const,
            lb.measured_min_eig >= lb.corrected_const,
            lb.measured_min_eig,
            lb.paper_const,
            lb.corrected_const,
        ),
        pin(
            "pin/step_a_scalar[alpha=0.1,n=10]",
            sa.lhs > sa.paper_rhs,
            sa.lhs <= sa.corrected_rhs,
            sa.lhs,
            sa.paper_rhs,
            sa.corrected_rhs,
        ),
    ])
}

/// Fixed-point iteration `Σ ← (I-αΦ)Σ(I-αΦ) + αΣ_ε` from zero, until the update stalls.
pub fn riccati_fixed_point(m: &SecondMoments, alpha: f64) -> Mat {
    let g = contraction_matrix(&m.phi, alpha);
    let d = m.dim();
    let step = &m.sigma_eps * alpha;
    let mut s = Mat::zeros(d, d);
    let cap = ((40.0 / (alpha * m.a)).ceil() as usize).clamp(100, 2_000_000);
    for _ in 0..cap {
        let next = &g * &s * &g + &step;
        let delta = (&next - &s).norm();
        s = next;
        if delta <= f64::EPSILON * s.norm() {
            break;
        }
    }
    s
}

fn covariance_checks(m: &SecondMoments, p: GridPoint, tag: &str) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let alpha = p.alpha;
    let se_norm = m.sigma_eps_norm;
    let sa = sigma_alpha_limit(m, alpha)?;
    let lyap = solve_lyapunov(&m.phi, &m.sigma_eps)?;
    let rr = riccati_residual(m, alpha, &sa);
    let lr = lyapunov_residual(&m.phi, &m.sigma_eps, &lyap);
    out.push(CheckResult::exact(format!("covariance/riccati_residual[{tag}]"), rr <= 1e-10 * se_norm, rr, 1e-10 * se_norm, "relative to |Sigma_eps|"));
    out.push(CheckResult::exact(format!("covariance/lyapunov_residual[{tag}]"), lr <= 1e-10 * se_norm, lr, 1e-10 * se_norm, "relative to |Sigma_eps|"));
    let sym = linalg::asymmetry(&sa).max(linalg::asymmetry(&lyap));
    out.push(CheckResult::exact(format!("covariance/symmetry[{tag}]"), sym <= 1e-12, sym, 1e-12, "max asymmetry"));

    let fp = riccati_fixed_point(m, alpha);
    let scale = linalg::op_norm(&sa).max(f64::MIN_POSITIVE);
    let fp_gap = linalg::op_norm(&(&fp - &sa)) / scale;
    out.push(CheckResult::exact(format!("covariance/fixed_point_oracle[{tag}]"), fp_gap <= 1e-9, fp_gap, 1e-9, "relative"));
    let bound = se_norm / m.a;
    let sa_norm = linalg::op_norm(&sa);
    out.push(CheckResult::exact(format!("covariance/limit_norm[{tag}]"), sa_norm <= bound * (1.0 + 1e-12), sa_norm, bound, "|Sigma^alpha| <= |Sigma_eps|/a"));

    let big_n = (20.0 / (alpha * m.a)).ceil() as usize;
    let tail = linalg::op_norm(&(sigma_alpha_n(m, alpha, big_n)? - &sa));
    let tol = 1e-8 * sa_norm.max(1.0);
    out.push(CheckResult::exact(format!("covariance/limit_reached[{tag},N={big_n}]"), tail <= tol, tail, tol, ""));

    // rounding floor: the bound can underflow below the accuracy of Σ^α itself
    let floor = 64.0 * f64::EPSILON * sa_norm;
    for n in [10, 100, 1000, p.n] {
        let g = prop1_gap(m, alpha, n)?;
        let b = g.corrected_bound + floor;
        out.push(CheckResult::exact(format!("prop1/corrected[alpha={alpha},n={n}]"), g.measured <= b, g.measured, b, format!("printed bound {:e}", g.paper_bound)));
        if alpha * m.phi_norm * n as f64 >= 0.5 {
            let lb = covariance_lower_bound(m, alpha, n)?;
            out.push(CheckResult::exact(
                format!("lower_bound/corrected[alpha={alpha},n={n}]"),
                lb.measured_min_eig >= lb.corrected_const,
                lb.measured_min_eig,
                lb.corrected_const,
                format!("printed constant {:e}", lb.paper_const),
            ));
        }
    }
    let p2 = prop2_gap(m, alpha)?;
    out.push(CheckResult::exact(format!("prop2/bound[{tag}]"), p2.measured <= p2.bound * (1.0 + 1e-12) + floor, p2.measured, p2.bound, ""));
    Ok(out)
}

fn identity_checks(
    inst: &ProblemInstance,
    p: GridPoint,
    theta0: &Vector,
    paths: usize,
    master: u64,
    point: usize,
    tag: &str,
) -> Vec<CheckResult> {
    let cfg = StepConfig::new(p.alpha, p.n, theta0.clone());
    let mut worst_ladder = 0.0f64;
    let mut worst_split = 0.0f64;
    let mut worst_coupled = 0.0f64;
    let mut prefix_agree = true;
    for r in 0..paths {
        let path = SamplePath::draw(inst, p.n, &mut stream(master, point, r, Purpose::Trajectory));
        let ladders: Vec<_> = (0..=2).map(|l| ladder_on_path(inst, &cfg, l, &path)).collect();
        for l in &ladders {
            worst_ladder = worst_ladder.max(l.identity_residual());
        }
        let h0 = Vector::from_column_slice(&ladders[0].h_tail);
        let split = (&h0 - ladders[1].h0()).norm() / (1.0 + ladders[1].h0().norm());
        worst_split = worst_split.max(split);
        let i = p.n / 2 + 1;
        let (x, y) = inst.sample_pair(&mut stream(master, point, r, Purpose::Coupling));
        let c = coupled_on_path(inst, &cfg, &path, i.min(p.n), x, y);
        worst_coupled = worst_coupled.max(c.step_identity_residual / (1.0 + c.step_gap));
        let swapped = path.with_replacement(inst, i.min(p.n), path.xs[0].clone(), path.ys[0]);
        let a = crate::trajectory::sgd_on_path(inst, &cfg, &path);
        let b = crate::trajectory::sgd_on_path(inst, &cfg, &swapped);
        prefix_agree &= a[..i.min(p.n)] == b[..i.min(p.n)];
    }
    vec![
        CheckResult::exact(format!("trajectory/ladder_identity[{tag}]"), worst_ladder <= 1e-10, worst_ladder, 1e-10, format!("{paths} paths, L in 0..=2")),
        CheckResult::exact(format!("trajectory/h0_split[{tag}]"), worst_split <= 1e-10, worst_split, 1e-10, format!("{paths} paths")),
        CheckResult::exact(format!("trajectory/coupled_step_identity[{tag}]"), worst_coupled <= 1e-12, worst_coupled, 1e-12, format!("{paths} paths")),
        CheckResult::exact(format!("trajectory/coupled_prefix_agreement[{tag}]"), prefix_agree, 0.0, 0.0, "theta_k equal for k < i"),
    ]
}

fn inconclusive(name: String, why: &str) -> CheckResult {
    CheckResult { name, verdict: Verdict::Inconclusive, measured: f64::NAN, bound: f64::NAN, std_error: None, detail: why.into() }
}

fn monte_carlo_checks(
    inst: &ProblemInstance,
    p: GridPoint,
    theta0: &Vector,
    replicas: usize,
    master: u64,
    base: usize,
    opts: &VerifyOptions,
) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let cfg = StepConfig::new(p.alpha, p.n, theta0.clone());
    let mut urng = stream(master, base, 0, Purpose::Directions);
    let u = crate::distance::draw_directions(inst.dim, 1, &mut urng).remove(0);
    out.push(contraction_check(inst, p.alpha, &u, replicas, master, base + 1));
    if inst.eps_ess_sup.is_some() {
        for (j, k) in [10usize, 100, 1000].into_iter().enumerate() {
            out.push(last_iterate_check(inst, p.alpha, k, theta0, replicas, master, base + 2 + j)?);
        }
    }
    out.extend(ladder_checks(inst, &cfg, replicas, master, base + 5)?);
    let mut idx = vec![1, (p.n / 2).max(1), p.n.saturating_sub(1).max(1)];
    idx.dedup();
    for (j, i) in idx.into_iter().enumerate() {
        out.push(coupled_check(inst, &cfg, i, replicas, master, base + 6 + j)?);
    }
    let tag = format!("alpha={},n={}", p.alpha, p.n);
    if inst.moments.is_non_degenerate() {
        let target = match opts.tamper_noise {
            Some(f) => inst.moments.with_scaled_noise(f)?,
            None => inst.moments.clone(),
        };
        out.push(whitening_check(inst, &target, p.alpha, p.n, replicas, master, base + 9)?);
        out.push(finite_horizon_covariance_check(inst, p.alpha, p.n, replicas, master, base + 10)?);
        let tampered = whitening_check(inst, &inst.moments.with_scaled_noise(2.0)?, p.alpha, p.n, replicas, master, base + 9)?;
        let verdict = match tampered.verdict {
            Verdict::Fail => Verdict::Pass,
            Verdict::Pass => Verdict::Fail,
            Verdict::Inconclusive => Verdict::Inconclusive,
        };
        out.push(CheckResult {
            name: format!("negative_control/tampered_noise_x2[{tag}]"),
            verdict,
            measured: tampered.measured,
            bound: tampered.bound,
            std_error: tampered.std_error,
            detail: "whitening with 2x noise covariance must be detected".into(),
        });
    } else {
        out.push(inconclusive(format!("whitening[{tag}]"), "degenerate noise covariance"));
    }
    Ok(out)
}

/// Runs every check on the configured instance and grid, plus the scalar pins.
pub fn verify_suite(cfg: &ExperimentConfig, opts: &VerifyOptions) -> Result<VerifyReport> {
    let start = Instant::now();
    let inst = cfg.validate()?;
    let points = cfg.grid_points(&inst)?;
    let theta0 = cfg.theta0(&inst)?;
    let replicas = if opts.quick { cfg.replicas.min(QUICK_REPLICAS) } else { cfg.replicas };
    let paths = if opts.quick { 20 } else { 100 };

    let mut checks = scalar_pins()?;
    for (gi, p) in points.iter().enumerate() {
        let tag = format!("alpha={},n={}", p.alpha, p.n);
        let base = gi * SLOTS;
        checks.extend(covariance_checks(&inst.moments, *p, &tag)?);
        checks.extend(identity_checks(&inst, *p, &theta0, paths, cfg.master_seed, base, &tag));
        checks.extend(monte_carlo_checks(&inst, *p, &theta0, replicas, cfg.master_seed, base + 1, opts)?);
    }
    let mut summary = Summary::default();
    for c in &checks {
        match c.verdict {
            Verdict::Pass => summary.pass += 1,
            Verdict::Fail => summary.fail += 1,
            Verdict::Inconclusive => summary.inconclusive += 1,
        }
    }
    Ok(VerifyReport {
        master_seed: cfg.master_seed,
        replicas,
        quick: opts.quick,
        checks,
        summary,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
