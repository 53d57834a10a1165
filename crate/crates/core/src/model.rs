//! Synthetic regression problems `(X, Y) ~ D` with closed-form second moments.
//!
//! Every generator is well specified: `Y = Xᵀθ* + ζ` with `ζ` independent of
//! `X` and centred. Hence `ε = -Xζ`, `Σ_ε = var(ζ)·Φ` and
//! `E‖ε‖³ = E‖X‖³·E|ζ|³`, all available without estimation.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadialParams {
    pub c_phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteSupportParams {
    pub points: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
    /// Declared feature bound. Defaults to the largest support-point norm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_phi: Option<f64>,
}

/// Law of the feature vector `X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum FeatureDistribution {
    /// Independent components `±c_φ/√d`.
    ScaledRademacher(RadialParams),
    /// Uniform on the sphere of radius `c_φ`.
    SphereUniform(RadialParams),
    /// Explicit atoms with probabilities summing to one.
    FiniteSupport(FiniteSupportParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianParams {
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformParams {
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteParams {
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
}

/// Law of the additive response noise `ζ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum ResponseNoise {
    Gaussian(GaussianParams),
    /// Uniform on `[-b, b]`.
    Uniform(UniformParams),
    /// Centred finite-support law.
    Discrete(DiscreteParams),
    None,
}

impl ResponseNoise {
    pub fn variance(&self) -> f64 {
        match self {
            ResponseNoise::Gaussian(p) => p.sigma * p.sigma,
            ResponseNoise::Uniform(p) => p.half_width * p.half_width / 3.0,
            ResponseNoise::Discrete(p) => p.values.iter().zip(&p.probs).map(|(v, q)| q * v * v).sum(),
            ResponseNoise::None => 0.0,
        }
    }

    /// `E|ζ|³`.
    pub fn abs_third_moment(&self) -> f64 {
        match self {
            ResponseNoise::Gaussian(p) => 2.0 * (2.0 / std::f64::consts::PI).sqrt() * p.sigma.powi(3),
            ResponseNoise::Uniform(p) => p.half_width.powi(3) / 4.0,
            ResponseNoise::Discrete(p) => p.values.iter().zip(&p.probs).map(|(v, q)| q * v.abs().powi(3)).sum(),
            ResponseNoise::None => 0.0,
        }
    }

    /// `ess sup |ζ|`, or `None` when unbounded.
    pub fn ess_sup(&self) -> Option<f64> {
        match self {
            ResponseNoise::Gaussian(p) if p.sigma > 0.0 => None,
            ResponseNoise::Gaussian(_) => Some(0.0),
            ResponseNoise::Uniform(p) => Some(p.half_width),
            ResponseNoise::Discrete(p) => Some(
                p.values
                    .iter()
                    .zip(&p.probs)
                    .filter(|(_, q)| **q > 0.0)
                    .fold(0.0_f64, |m, (v, _)| m.max(v.abs())),
            ),
            ResponseNoise::None => Some(0.0),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ResponseNoise::Gaussian(p) if !(p.sigma >= 0.0 && p.sigma.is_finite()) => {
                Err(Error::InvalidInstance(format!("gaussian sigma must be finite and >= 0, got {}", p.sigma)))
            }
            ResponseNoise::Uniform(p) if !(p.half_width >= 0.0 && p.half_width.is_finite()) => Err(
                Error::InvalidInstance(format!("uniform half_width must be finite and >= 0, got {}", p.half_width)),
            ),
            ResponseNoise::Discrete(p) => {
                check_probs(&p.probs, p.values.len())?;
                if p.values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidInstance("discrete noise values must be finite".into()));
                }
                let mean: f64 = p.values.iter().zip(&p.probs).map(|(v, q)| v * q).sum();
                let scale = p.values.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
                if mean.abs() > 1e-12 * scale {
                    return Err(Error::InvalidInstance(format!("discrete noise must be centred, mean = {mean:e}")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ResponseNoise::Gaussian(p) => p.sigma * { let z: f64 = StandardNormal.sample(rng); z },
            ResponseNoise::Uniform(p) => p.half_width * (2.0 * rng.random::<f64>() - 1.0),
            ResponseNoise::Discrete(p) => p.values[pick(&p.probs, rng)],
            ResponseNoise::None => 0.0,
        }
    }
}

fn check_probs(probs: &[f64], len: usize) -> Result<()> {
    if probs.len() != len || len == 0 {
        return Err(Error::InvalidInstance(format!("expected {len} probabilities, got {}", probs.len())));
    }
    if probs.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::InvalidInstance("probabilities must be non-negative".into()));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInstance(format!("probabilities sum to {total}, not 1")));
    }
    Ok(())
}

/// Inverse-CDF draw from a probability vector.
fn pick<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap above the cumulative sum
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

/// JSON description of an instance:
/// `{dim, feature_dist:{kind, params}, response_noise:{kind, params}, theta_star}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub dim: usize,
    pub feature_dist: FeatureDistribution,
    pub response_noise: ResponseNoise,
    pub theta_star: Vec<f64>,
}

/// The two second-moment matrices every covariance computation needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondMoments {
    pub phi: Mat,
    pub sigma_eps: Mat,
    /// `λ_min(Φ)`.
    pub a: f64,
    /// `‖Φ‖`.
    pub phi_norm: f64,
    /// `λ_min(Σ_ε)`.
    pub lambda_min: f64,
    pub sigma_eps_norm: f64,
    pub trace_sigma_eps: f64,
}

impl SecondMoments {
    /// Validates `Φ` SPD and `Σ_ε` symmetric PSD.
    pub fn new(phi: Mat, sigma_eps: Mat) -> Result<Self> {
        let d = phi.nrows();
        if phi.ncols() != d {
            return Err(Error::Dimension { expected: d, got: phi.ncols() });
        }
        if sigma_eps.nrows() != d || sigma_eps.ncols() != d {
            return Err(Error::Dimension { expected: d, got: sigma_eps.nrows() });
        }
        let evs = linalg::sym_eigenvalues(&phi);
        let a = evs[0];
        let phi_norm = evs[d - 1].abs().max(a.abs());
        if !(a > 1e-12 * phi_norm) {
            return Err(Error::SingularDesign { min_eig: a });
        }
        if linalg::asymmetry(&phi) > 1e-10 * phi_norm {
            return Err(Error::NotSpd { what: "design matrix", min_eig: a });
        }
        let sevs = linalg::sym_eigenvalues(&sigma_eps);
        let sigma_eps_norm = sevs.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let lambda_min = sevs[0];
        if lambda_min < -1e-12 * sigma_eps_norm.max(phi_norm)
            || linalg::asymmetry(&sigma_eps) > 1e-10 * sigma_eps_norm.max(1e-300)
        {
            return Err(Error::NotSpd { what: "noise covariance", min_eig: lambda_min });
        }
        Ok(SecondMoments {
            trace_sigma_eps: sigma_eps.trace(),
            phi,
            sigma_eps,
            a,
            phi_norm,
            lambda_min: lambda_min.max(0.0),
            sigma_eps_norm,
        })
    }

    pub fn dim(&self) -> usize {
        self.phi.nrows()
    }

    /// `λ_min(Σ_ε) > 0`, measured relative to `‖Σ_ε‖`.
    pub fn is_non_degenerate(&self) -> bool {
        self.sigma_eps_norm > 0.0 && self.lambda_min > 1e-12 * self.sigma_eps_norm
    }

    pub fn require_non_degenerate(&self) -> Result<()> {
        if self.is_non_degenerate() {
            Ok(())
        } else {
            Err(Error::DegenerateNoise { min_eig: self.lambda_min })
        }
    }

    /// The same moments with `Σ_ε` multiplied by `factor` (negative-control hook).
    pub fn with_scaled_noise(&self, factor: f64) -> Result<Self> {
        SecondMoments::new(self.phi.clone(), &self.sigma_eps * factor)
    }
}

#[derive(Debug, Clone)]
enum FeatureSampler {
    /// Components `±s`, with `s ≤ c_φ/√d` rounded so `‖x‖ ≤ c_φ` holds in floating point.
    Rademacher { s: f64 },
    Sphere { radius: f64 },
    Atoms { points: Vec<Vector>, probs: Vec<f64> },
}

/// A validated regression problem. Immutable after construction.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub spec: InstanceSpec,
    pub dim: usize,
    pub theta_star: Vector,
    pub b_bar: Vector,
    /// Feature bound `c_φ`.
    pub c_phi: f64,
    pub moments: SecondMoments,
    /// `E‖ε‖³`, exact.
    pub eps_third_moment: f64,
    /// `ess sup ‖ε‖`, when finite.
    pub eps_ess_sup: Option<f64>,
    /// `Φθ* - b̄`, zero up to rounding; kept so `ε` follows its literal definition.
    normal_residual: Vector,
    sampler: FeatureSampler,
}

impl ProblemInstance {
    pub fn new(spec: InstanceSpec) -> Result<Self> {
        make_instance(spec)
    }

    pub fn phi(&self) -> &Mat {
        &self.moments.phi
    }

    pub fn sigma_eps(&self) -> &Mat {
        &self.moments.sigma_eps
    }

    /// `λ_min(Φ)`.
    pub fn a(&self) -> f64 {
        self.moments.a
    }

    pub fn max_step(&self) -> f64 {
        1.0 / (self.c_phi * self.c_phi)
    }

    /// A3: `α ∈ (0, 1/c_φ²]`.
    pub fn check_step(&self, alpha: f64) -> Result<()> {
        let max = self.max_step();
        if alpha > 0.0 && alpha <= max {
            Ok(())
        } else {
            Err(Error::StepSize { alpha, max })
        }
    }

    /// Draws one `(X, Y)` pair.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vector, f64) {
        let mut x = Vector::zeros(self.dim);
        let y = self.sample_into(rng, &mut x);
        (x, y)
    }

    /// Draws `X` into `x` and returns `Y`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, x: &mut Vector) -> f64 {
        match &self.sampler {
            FeatureSampler::Rademacher { s } => {
                for xi in x.iter_mut() {
                    *xi = if rng.random::<bool>() { *s } else { -*s };
                }
            }
            FeatureSampler::Sphere { radius } => {
                let mut norm = 0.0;
                while norm == 0.0 {
                    for xi in x.iter_mut() {
                        *xi = StandardNormal.sample(rng);
                    }
                    norm = x.norm();
                }
                *x *= *radius / norm;
                while x.norm() > *radius {
                    *x *= 1.0 - f64::EPSILON;
                }
            }
            FeatureSampler::Atoms { points, probs } => {
                x.copy_from(&points[pick(probs, rng)]);
            }
        }
        x.dot(&self.theta_star) + self.spec.response_noise.sample(rng)
    }

    /// `ε = (XXᵀ - Φ)θ* - (XY - b̄)`.
    pub fn noise_at_optimum(&self, x: &Vector, y: f64) -> Vector {
        let mut out = Vector::zeros(self.dim);
        self.noise_at_optimum_into(x, y, &mut out);
        out
    }

    /// Allocation-free form of [`noise_at_optimum`](Self::noise_at_optimum).
    pub fn noise_at_optimum_into(&self, x: &Vector, y: f64, out: &mut Vector) {
        // XXᵀθ* - XY = X(Xᵀθ* - Y); the Φθ* - b̄ part is precomputed
        let r = x.dot(&self.theta_star) - y;
        out.copy_from(x);
        *out *= r;
        *out -= &self.normal_residual;
    }
}

/// Builds a [`ProblemInstance`] with closed-form `Φ`, `b̄ = Φθ*` and `Σ_ε`.
pub fn make_instance(spec: InstanceSpec) -> Result<ProblemInstance> {
    let d = spec.dim;
    if d == 0 {
        return Err(Error::InvalidInstance("dim must be >= 1".into()));
    }
    if spec.theta_star.len() != d {
        return Err(Error::Dimension { expected: d, got: spec.theta_star.len() });
    }
    if spec.theta_star.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInstance("theta_star must be finite".into()));
    }
    spec.response_noise.validate()?;

    let (phi, c_phi, x_third, x_sup, sampler) = match &spec.feature_dist {
        FeatureDistribution::ScaledRademacher(p) => {
            check_radius(p.c_phi)?;
            let mut s = p.c_phi / (d as f64).sqrt();
            while (d as f64 * s * s).sqrt() > p.c_phi {
                s = s.next_down();
            }
            let phi = Mat::identity(d, d) * (s * s);
            (phi, p.c_phi, p.c_phi.powi(3), p.c_phi, FeatureSampler::Rademacher { s })
        }
        FeatureDistribution::SphereUniform(p) => {
            check_radius(p.c_phi)?;
            let phi = Mat::identity(d, d) * (p.c_phi * p.c_phi / d as f64);
            (phi, p.c_phi, p.c_phi.powi(3), p.c_phi, FeatureSampler::Sphere { radius: p.c_phi })
        }
        FeatureDistribution::FiniteSupport(p) => {
            check_probs(&p.probs, p.points.len())?;
            let mut points = Vec::with_capacity(p.points.len());
            for pt in &p.points {
                if pt.len() != d {
                    return Err(Error::Dimension { expected: d, got: pt.len() });
                }
                if pt.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidInstance("support points must be finite".into()));
                }
                points.push(Vector::from_column_slice(pt));
            }
            let max_norm = points
                .iter()
                .zip(&p.probs)
                .filter(|(_, q)| **q > 0.0)
                .fold(0.0_f64, |m, (x, _)| m.max(x.norm()));
            let c_phi = match p.c_phi {
                Some(c) => {
                    check_radius(c)?;
                    if max_norm > c {
                        return Err(Error::FeatureBound { norm: max_norm, bound: c });
                    }
                    c
                }
                None => max_norm,
            };
            let mut phi = Mat::zeros(d, d);
            let mut third = 0.0;
            for (x, q) in points.iter().zip(&p.probs) {
                phi += linalg::outer(x) * *q;
                third += q * x.norm().powi(3);
            }
            let phi = linalg::symmetrize(&phi);
            (phi, c_phi, third, max_norm, FeatureSampler::Atoms { points, probs: p.probs.clone() })
        }
    };

    let sigma_eps = &phi * spec.response_noise.variance();
    let moments = SecondMoments::new(phi, sigma_eps)?;
    let theta_star = Vector::from_column_slice(&spec.theta_star);
    let b_bar = &moments.phi * &theta_star;
    let normal_residual = &moments.phi * &theta_star - &b_bar;
    let eps_third_moment = x_third * spec.response_noise.abs_third_moment();
    let eps_ess_sup = spec.response_noise.ess_sup().map(|z| z * x_sup);

    Ok(ProblemInstance {
        dim: d,
        theta_star,
        b_bar,
        c_phi,
        moments,
        eps_third_moment,
        eps_ess_sup,
        normal_residual,
        sampler,
        spec,
    })
}

fn check_radius(c: f64) -> Result<()> {
    if c > 0.0 && c.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInstance(format!("feature bound must be positive and finite, got {c}")))
    }
}

/// One assumption check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<AssumptionCheck>,
    /// `λ_min(Σ_ε) = 0`: allowed for trajectories, rejected by distance/bounds code.
    pub degenerate: bool,
    pub eps_third_moment: f64,
    pub eps_ess_sup: Option<f64>,
}

impl ValidationReport {
    pub fn check(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Step size and design assumptions, which trajectories require.
    pub fn trajectory_ok(&self) -> bool {
        ["step_size", "design_positive_definite"].iter().all(|n| self.check(n).is_some_and(|c| c.pass))
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Reports each assumption separately; never fails.
pub fn validate_assumptions(instance: &ProblemInstance, alpha: f64) -> ValidationReport {
    let m = &instance.moments;
    let max = instance.max_step();
    let checks = vec![
        AssumptionCheck {
            name: "step_size".into(),
            pass: alpha > 0.0 && alpha <= max,
            detail: format!("alpha = {alpha}, 1/c_phi^2 = {max}"),
        },
        AssumptionCheck {
            name: "design_positive_definite".into(),
            pass: m.a > 0.0,
            detail: format!("lambda_min(Phi) = {}", m.a),
        },
        AssumptionCheck {
            name: "noise_non_degenerate".into(),
            pass: m.is_non_degenerate(),
            detail: format!("lambda_min(Sigma_eps) = {}", m.lambda_min),
        },
        AssumptionCheck {
            name: "third_moment_finite".into(),
            pass: instance.eps_third_moment.is_finite(),
            detail: format!("E|eps|^3 = {} (closed form)", instance.eps_third_moment),
        },
    ];
    ValidationReport {
        checks,
        degenerate: !m.is_non_degenerate(),
        eps_third_moment: instance.eps_third_moment,
        eps_ess_sup: instance.eps_ess_sup,
    }
}

/// Instances used throughout the tests, the verification suite and the README.
pub mod presets {
    use super::*;

    /// Scalar unit instance: `X ≡ 1`, `ζ = ±1`, so `Φ = Σ_ε = 1` and `‖ε‖_∞ = 1`.
    pub fn s1_spec() -> InstanceSpec {
        InstanceSpec {
            dim: 1,
            feature_dist: FeatureDistribution::FiniteSupport(FiniteSupportParams {
                points: vec![vec![1.0]],
                probs: vec![1.0],
                c_phi: Some(1.0),
            }),
            response_noise: rademacher_noise(1.0),
            theta_star: vec![0.0],
        }
    }

    pub fn s1() -> ProblemInstance {
        make_instance(s1_spec()).expect("s1 preset")
    }

    /// `ScaledRademacher(c_φ = 1)` in dimension `d` with bounded uniform noise of unit variance.
    pub fn rademacher_spec(d: usize) -> InstanceSpec {
        InstanceSpec {
            dim: d,
            feature_dist: FeatureDistribution::ScaledRademacher(RadialParams { c_phi: 1.0 }),
            response_noise: ResponseNoise::Uniform(UniformParams { half_width: 3f64.sqrt() }),
            theta_star: (0..d).map(|i| 1.0 / (i + 1) as f64).collect(),
        }
    }

    pub fn rademacher(d: usize) -> ProblemInstance {
        make_instance(rademacher_spec(d)).expect("rademacher preset")
    }

    /// `±s` with equal probability.
    pub fn rademacher_noise(s: f64) -> ResponseNoise {
        ResponseNoise::Discrete(DiscreteParams { values: vec![-s, s], probs: vec![0.5, 0.5] })
    }

    /// Centred two-point law with unit variance: `√((1-p)/p)` w.p. `p`, `-√(p/(1-p))` otherwise.
    /// Skewness is `(1 - 2p)/√(p(1-p))`.
    pub fn two_point_noise(p: f64) -> ResponseNoise {
        ResponseNoise::Discrete(DiscreteParams {
            values: vec![((1.0 - p) / p).sqrt(), -(p / (1.0 - p)).sqrt()],
            probs: vec![p, 1.0 - p],
        })
    }

    /// Features on the coordinate axes (`X = e_j` w.p. `1/d`) with skewed two-point noise.
    ///
    /// Neither `X` nor `ζ` is symmetric, so `ε` has a non-zero third moment and
    /// the rescaled error keeps a skewness of order `√α`.
    pub fn skewed_spec(d: usize, p: f64) -> InstanceSpec {
        let points = (0..d).map(|j| (0..d).map(|i| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        InstanceSpec {
            dim: d,
            feature_dist: FeatureDistribution::FiniteSupport(FiniteSupportParams {
                points,
                probs: vec![1.0 / d as f64; d],
                c_phi: Some(1.0),
            }),
            response_noise: two_point_noise(p),
            theta_star: vec![0.5; d],
        }
    }

    pub fn skewed(d: usize, p: f64) -> ProblemInstance {
        make_instance(skewed_spec(d, p)).expect("skewed preset")
    }

    /// Anisotropic finite-support design `Φ = Q diag(λ) Qᵀ` with atoms `±√(dλ_i) q_i`.
    pub fn anisotropic_spec<R: Rng + ?Sized>(d: usize, rng: &mut R, noise: ResponseNoise) -> InstanceSpec {
        let q = random_orthogonal(d, rng);
        let lambdas: Vec<f64> = (0..d).map(|_| 0.2 + 0.8 * rng.random::<f64>()).collect();
        let mut points = Vec::with_capacity(2 * d);
        for (i, l) in lambdas.iter().enumerate() {
            let col = q.column(i) * (d as f64 * l).sqrt();
            points.push(col.iter().copied().collect::<Vec<_>>());
            points.push(col.iter().map(|v| -v).collect::<Vec<_>>());
        }
        InstanceSpec {
            dim: d,
            feature_dist: FeatureDistribution::FiniteSupport(FiniteSupportParams {
                probs: vec![1.0 / (2 * d) as f64; 2 * d],
                points,
                c_phi: None,
            }),
            response_noise: noise,
            theta_star: (0..d).map(|_| rng.random::<f64>() - 0.5).collect(),
        }
    }

    pub fn random_orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Mat {
        let g = Mat::from_fn(d, d, |_, _| StandardNormal.sample(rng));
        g.qr().q()
    }
}
