//! Explicit constants and right-hand sides of the convex-distance bound and the moment bounds.

use serde::{Deserialize, Serialize};

use crate::covariance::{sigma_alpha_n, solve_lyapunov};
use crate::error::{Error, Result};
use crate::linalg::{self, Vector};
use crate::model::ProblemInstance;

/// `Γ(3/2)`.
pub const GAMMA_THREE_HALVES: f64 = 0.886_226_925_452_758;

fn one_minus_inv_e() -> f64 {
    1.0 - (-1.0f64).exp()
}

/// Scalar inputs every constant is built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub alpha: f64,
    pub n: usize,
    /// `‖θ₀ - θ*‖`.
    pub theta0_gap: f64,
    pub d: usize,
    pub phi_norm: f64,
    pub a: f64,
    pub lambda_min: f64,
    pub trace_sigma_eps: f64,
    pub sigma_eps_norm: f64,
    pub eps_third_moment: f64,
    pub c_phi: f64,
    /// `‖Σ‖` for the Lyapunov solution.
    pub sigma_lyap_norm: f64,
    /// `‖{Σ^α_n}^{-1/2}‖`.
    pub sigma_n_inv_sqrt_norm: f64,
}

impl BoundInputs {
    /// Checks non-degenerate noise, A3 and `α‖Φ‖n ≥ 1/2`.
    pub fn from_instance(instance: &ProblemInstance, alpha: f64, n: usize, theta0_gap: f64) -> Result<Self> {
        let m = &instance.moments;
        m.require_non_degenerate()?;
        instance.check_step(alpha)?;
        check_horizon(m.phi_norm, alpha, n)?;
        let s_n = sigma_alpha_n(m, alpha, n)?;
        let inv_sqrt = linalg::inv_sqrt_spd(&s_n, "finite-horizon covariance")?;
        let lyap = solve_lyapunov(&m.phi, &m.sigma_eps)?;
        Ok(BoundInputs {
            alpha,
            n,
            theta0_gap,
            d: instance.dim,
            phi_norm: m.phi_norm,
            a: m.a,
            lambda_min: m.lambda_min,
            trace_sigma_eps: m.trace_sigma_eps,
            sigma_eps_norm: m.sigma_eps_norm,
            eps_third_moment: instance.eps_third_moment,
            c_phi: instance.c_phi,
            sigma_lyap_norm: linalg::op_norm(&lyap),
            sigma_n_inv_sqrt_norm: linalg::op_norm(&inv_sqrt),
        })
    }
}

fn check_horizon(phi_norm: f64, alpha: f64, n: usize) -> Result<()> {
    let v = alpha * phi_norm * n as f64;
    if v < 0.5 {
        return Err(Error::Precondition(format!("alpha*|Phi|*n = {v} < 1/2")));
    }
    Ok(())
}

/// `C_{Δ,0..6}`, `C₁`, `C₂`, `C_D`, `C_{D,2}` and the assembled right-hand side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub c_delta: [f64; 7],
    pub c1: f64,
    pub c2: f64,
    pub c_d: f64,
    pub c_d2: f64,
    pub theorem1_rhs: f64,
    pub inputs: BoundInputs,
}

/// `C_D = (2c⁶ trΣ_ε/a² + 4c⁴ trΣ_ε/a)^{1/2}`.
pub fn c_d(c_phi: f64, trace: f64, a: f64) -> f64 {
    (2.0 * c_phi.powi(6) * trace / (a * a) + 4.0 * c_phi.powi(4) * trace / a).sqrt()
}

/// `C_{D,2} = c_φ √(2‖Φ‖ trΣ_ε)`.
pub fn c_d2(c_phi: f64, phi_norm: f64, trace: f64) -> f64 {
    c_phi * (2.0 * phi_norm * trace).sqrt()
}

pub fn constants_from_inputs(p: &BoundInputs) -> BoundReport {
    let sd = (p.d as f64).sqrt();
    let e = one_minus_inv_e();
    let lam = p.lambda_min;
    let sqrt_tr = p.trace_sigma_eps.sqrt();
    let sqrt_phi = p.phi_norm.sqrt();

    let c0 = 259.0 * sd * p.phi_norm.powf(1.5) * p.eps_third_moment / (p.a * lam.powf(1.5) * e.powf(1.5));
    let c1d = 2.0 * sd * p.phi_norm / (e.sqrt() * lam.sqrt());
    let inner = p.c_phi * sqrt_phi * sqrt_tr / p.a;
    let c2d = c1d * inner * (1.0 + p.c_phi * sqrt_phi / p.a);
    let c3 = 2.0 * std::f64::consts::SQRT_2 * p.c_phi * sqrt_tr * p.sigma_n_inv_sqrt_norm / p.a;
    let cd = c_d(p.c_phi, p.trace_sigma_eps, p.a);
    let cd2 = c_d2(p.c_phi, p.phi_norm, p.trace_sigma_eps);
    let c4 = 2.0 * cd * sqrt_phi * sqrt_tr / (e.sqrt() * lam.sqrt() * p.a)
        + 4.0 * cd2 * GAMMA_THREE_HALVES * sqrt_tr * sqrt_phi / (e.sqrt() * lam.sqrt() * p.a.powf(1.5));
    let c5 = 3.0 * sd * p.phi_norm * p.sigma_eps_norm / (2.0 * p.a * lam);
    let c6 = 3.0 * sd * p.phi_norm.powi(3) * p.sigma_lyap_norm / (2.0 * p.a * lam);

    let c_delta = [c0, c1d, c2d, c3, c4, c5, c6];
    let c1 = c0 + c2d + c4;
    let c2 = c1d + c3;
    let alpha = p.alpha;
    let n = p.n as f64;
    let rhs = alpha.sqrt() * (c1 + c2 * (1.0 - alpha * p.a / 2.0).powf((n - 1.0) / 2.0) / alpha * p.theta0_gap)
        + c5 * alpha
        + c6 * (1.0 - alpha * p.a).powf(2.0 * (n + 1.0));
    BoundReport { c_delta, c1, c2, c_d: cd, c_d2: cd2, theorem1_rhs: rhs, inputs: *p }
}

/// All constants at `(α, n)` with `‖θ₀ - θ*‖ = theta0_gap`.
pub fn compute_constants(instance: &ProblemInstance, alpha: f64, n: usize, theta0_gap: f64) -> Result<BoundReport> {
    Ok(constants_from_inputs(&BoundInputs::from_instance(instance, alpha, n, theta0_gap)?))
}

pub fn theorem1_rhs(instance: &ProblemInstance, alpha: f64, n: usize, theta0: &Vector) -> Result<f64> {
    let gap = (theta0 - &instance.theta_star).norm();
    Ok(compute_constants(instance, alpha, n, gap)?.theorem1_rhs)
}

/// `Υ_n` and the largest third-moment scale of a single summand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiStatistics {
    /// `Σ_k E‖ξ_k‖³`.
    pub upsilon: f64,
    /// `max_k E^{1/3}‖ξ_k‖³ = √α‖{Σ^α_n}^{-1/2}‖ E^{1/3}‖ε‖³`.
    pub xi_norm_bound: f64,
}

/// `Υ_n = α^{3/2}‖{Σ^α_n}^{-1/2}‖³ E‖ε‖³ Σ_{k=1}^n (1-αa)^{n-k}`; zero for noiseless instances.
pub fn upsilon(instance: &ProblemInstance, alpha: f64, n: usize) -> Result<XiStatistics> {
    instance.check_step(alpha)?;
    let m3 = instance.eps_third_moment;
    if m3 == 0.0 {
        return Ok(XiStatistics { upsilon: 0.0, xi_norm_bound: 0.0 });
    }
    let s_n = sigma_alpha_n(&instance.moments, alpha, n)?;
    let r = linalg::op_norm(&linalg::inv_sqrt_spd(&s_n, "finite-horizon covariance")?);
    let q = 1.0 - alpha * instance.a();
    let geo = if q == 0.0 { 1.0 } else { (1.0 - q.powf(n as f64)) / (1.0 - q) };
    Ok(XiStatistics {
        upsilon: alpha.powf(1.5) * r.powi(3) * m3 * geo,
        xi_norm_bound: alpha.sqrt() * r * m3.cbrt(),
    })
}

/// `259√d Υ_n` against `C_{Δ,0}√α` and against the value obtained from the halved
/// eigenvalue lower bound, `2^{3/2} C_{Δ,0}√α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepACheck {
    pub lhs: f64,
    pub paper_rhs: f64,
    pub corrected_rhs: f64,
}

pub fn step_a_check(instance: &ProblemInstance, alpha: f64, n: usize) -> Result<StepACheck> {
    let report = compute_constants(instance, alpha, n, 0.0)?;
    let u = upsilon(instance, alpha, n)?.upsilon;
    let paper_rhs = report.c_delta[0] * alpha.sqrt();
    Ok(StepACheck {
        lhs: 259.0 * (instance.dim as f64).sqrt() * u,
        paper_rhs,
        corrected_rhs: paper_rhs * 2f64.powf(1.5),
    })
}

/// `exp(-aαk/2)‖θ₀ - θ*‖ + ‖ε‖_∞ √(α/a)`; needs bounded noise.
pub fn last_iter_moment_rhs(instance: &ProblemInstance, alpha: f64, k: usize, theta0: &Vector) -> Result<f64> {
    let sup = instance.eps_ess_sup.ok_or(Error::UnboundedNoise)?;
    let a = instance.a();
    let gap = (theta0 - &instance.theta_star).norm();
    Ok((-a * alpha * k as f64 / 2.0).exp() * gap + sup * (alpha / a).sqrt())
}

/// Bounds on `E^{1/2}‖J⁽¹⁾_n‖²` and `E^{1/2}‖H⁽¹⁾_n‖²`.
pub fn j1_h1_rhs(instance: &ProblemInstance, alpha: f64) -> (f64, f64) {
    let m = &instance.moments;
    let c = instance.c_phi;
    let sqrt_tr = m.trace_sigma_eps.sqrt();
    (
        c * m.phi_norm.sqrt() * sqrt_tr / m.a * alpha,
        2.0 * c * c * m.phi_norm * sqrt_tr / (m.a * m.a) * alpha,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemainderRhs {
    pub value: f64,
    /// The `(n-i-1)/2` exponent was negative and evaluated at 0.
    pub exponent_clamped: bool,
}

/// Bound on `E^{1/2}‖D_n‖²`, or on `E^{1/2}‖D_n - D⁽ⁱ⁾_n‖²` when `i` is given.
pub fn remainder_rhs(
    instance: &ProblemInstance,
    alpha: f64,
    n: usize,
    theta0: &Vector,
    i: Option<usize>,
) -> Result<RemainderRhs> {
    let m = &instance.moments;
    let c = instance.c_phi;
    let a = m.a;
    let gap = (theta0 - &instance.theta_star).norm();
    let sqrt_phi = m.phi_norm.sqrt();
    let sqrt_tr = m.trace_sigma_eps.sqrt();
    match i {
        None => {
            let value = c * sqrt_phi * sqrt_tr / a * (1.0 + 2.0 * c * sqrt_phi / a) * alpha
                + (1.0 - alpha * a / 2.0).powf(n as f64) * gap;
            Ok(RemainderRhs { value, exponent_clamped: false })
        }
        Some(i) => {
            if i < 1 || i > n {
                return Err(Error::Precondition(format!("index {i} outside [1, {n}]")));
            }
            let raw = n as i64 - i as i64 - 1;
            let geo = (1.0 - alpha * a).powf(raw.max(0) as f64 / 2.0);
            let value = 2.0 * c * c * alpha * (1.0 - alpha * a / 2.0).powf(n as f64 - 1.0) * gap
                + c_d(c, m.trace_sigma_eps, a) * alpha.powf(1.5) * geo
                + c_d2(c, m.phi_norm, m.trace_sigma_eps) * alpha * alpha * ((n - i) as f64).sqrt() * geo;
            Ok(RemainderRhs { value, exponent_clamped: raw < 0 })
        }
    }
}

/// `α = c log(n)/n`; `c` defaults to `3/a`.
pub fn step_size_for_horizon(n: usize, c: Option<f64>, a: f64) -> Result<f64> {
    if n < 3 {
        return Err(Error::Precondition(format!("horizon {n} < 3")));
    }
    let c = match c {
        Some(c) if c > 0.0 && c.is_finite() => c,
        Some(c) => return Err(Error::Precondition(format!("schedule constant must be positive, got {c}"))),
        None if a > 0.0 => 3.0 / a,
        None => return Err(Error::SingularDesign { min_eig: a }),
    };
    Ok(log_schedule(n as f64, c))
}

/// `c log(n)/n` for real `n`.
pub fn log_schedule(n: f64, c: f64) -> f64 {
    c * n.ln() / n
}

/// [`step_size_for_horizon`] clipped to `(0, 1/c_φ²]`.
pub fn step_size_for_instance(instance: &ProblemInstance, n: usize, c: Option<f64>) -> Result<f64> {
    Ok(step_size_for_horizon(n, c, instance.a())?.min(instance.max_step()))
}
