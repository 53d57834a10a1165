//! Covariance of the linear statistic `J⁽⁰⁾_n/√α`, its Riccati limit and the Lyapunov solution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::model::SecondMoments;
use crate::trajectory::contraction_matrix;

/// Beyond this horizon [`sigma_alpha_n`] composes blocks by doubling instead of stepping.
const STEPWISE_LIMIT: usize = 1 << 14;

fn check_alpha(m: &SecondMoments, alpha: f64) -> Result<()> {
    if !(alpha > 0.0) || alpha * m.phi_norm > 1.0 {
        return Err(Error::StepSize { alpha, max: 1.0 / m.phi_norm });
    }
    Ok(())
}

/// `Σ^α_n = α Σ_{k=1}^n (I-αΦ)^{n-k} Σ_ε (I-αΦ)^{n-k}`.
pub fn sigma_alpha_n(m: &SecondMoments, alpha: f64, n: usize) -> Result<Mat> {
    check_alpha(m, alpha)?;
    if n == 0 {
        return Err(Error::Precondition("horizon n must be >= 1".into()));
    }
    let g = contraction_matrix(&m.phi, alpha);
    let step = &m.sigma_eps * alpha;
    if n <= STEPWISE_LIMIT {
        let mut s = Mat::zeros(m.dim(), m.dim());
        for _ in 0..n {
            s = &g * s * &g + &step;
        }
        return Ok(linalg::symmetrize(&s));
    }
    // (S_j, G^j) ∘ (S_k, G^k) = (G^k S_j G^k + S_k, G^{j+k})
    let mut acc: Option<(Mat, Mat)> = None;
    let mut block = (step, g);
    let mut k = n;
    loop {
        if k & 1 == 1 {
            acc = Some(match acc {
                None => block.clone(),
                Some((s, p)) => (&block.1 * s * &block.1 + &block.0, &p * &block.1),
            });
        }
        k >>= 1;
        if k == 0 {
            break;
        }
        block = (&block.1 * &block.0 * &block.1 + &block.0, &block.1 * &block.1);
    }
    Ok(linalg::symmetrize(&acc.expect("n >= 1").0))
}

fn solve_vectorized(system: Mat, rhs: &Mat, what: &str) -> Result<Mat> {
    let d = rhs.nrows();
    let b = linalg::vec_of(rhs);
    let x = system
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Singular(format!("vectorized {what} system")))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(format!("vectorized {what} system")));
    }
    Ok(linalg::symmetrize(&linalg::unvec(&x, d)))
}

/// Solves `ΦΣ^α + Σ^αΦ - αΦΣ^αΦ = Σ_ε`.
pub fn sigma_alpha_limit(m: &SecondMoments, alpha: f64) -> Result<Mat> {
    check_alpha(m, alpha)?;
    let d = m.dim();
    let id = Mat::identity(d, d);
    let system = linalg::kron(&id, &m.phi) + linalg::kron(&m.phi, &id) - linalg::kron(&m.phi, &m.phi) * alpha;
    solve_vectorized(system, &m.sigma_eps, "Riccati")
}

/// Solves `ΦΣ + ΣΦ = Σ_ε` for SPD `Φ`.
pub fn solve_lyapunov(phi: &Mat, sigma_eps: &Mat) -> Result<Mat> {
    linalg::check_spd(phi, "design matrix")?;
    let d = phi.nrows();
    if sigma_eps.nrows() != d || sigma_eps.ncols() != d {
        return Err(Error::Dimension { expected: d, got: sigma_eps.nrows() });
    }
    let id = Mat::identity(d, d);
    let system = linalg::kron(&id, phi) + linalg::kron(phi, &id);
    solve_vectorized(system, sigma_eps, "Lyapunov")
}

pub fn riccati_residual(m: &SecondMoments, alpha: f64, s: &Mat) -> f64 {
    let r = &m.phi * s + s * &m.phi - &m.phi * s * &m.phi * alpha - &m.sigma_eps;
    linalg::op_norm(&r)
}

pub fn lyapunov_residual(phi: &Mat, sigma_eps: &Mat, s: &Mat) -> f64 {
    linalg::op_norm(&(phi * s + s * phi - sigma_eps))
}

/// `Σ^α_n`, `Σ^α`, `Σ` and the residuals of the two matrix equations.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceTriple {
    pub sigma_alpha_n: Mat,
    pub sigma_alpha: Mat,
    pub sigma_lyap: Mat,
    pub residual_riccati: f64,
    pub residual_lyapunov: f64,
}

impl CovarianceTriple {
    pub fn compute(m: &SecondMoments, alpha: f64, n: usize) -> Result<Self> {
        let sigma_alpha_n = sigma_alpha_n(m, alpha, n)?;
        let sigma_alpha = sigma_alpha_limit(m, alpha)?;
        let sigma_lyap = solve_lyapunov(&m.phi, &m.sigma_eps)?;
        Ok(CovarianceTriple {
            residual_riccati: riccati_residual(m, alpha, &sigma_alpha),
            residual_lyapunov: lyapunov_residual(&m.phi, &m.sigma_eps, &sigma_lyap),
            sigma_alpha_n,
            sigma_alpha,
            sigma_lyap,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prop1Gap {
    pub measured: f64,
    pub paper_bound: f64,
    pub corrected_bound: f64,
}

/// `‖Σ^α_n - Σ^α‖` against `(‖Σ_ε‖/a)(1-αa)^{2(n+1)}` and the `2n` exponent.
pub fn prop1_gap(m: &SecondMoments, alpha: f64, n: usize) -> Result<Prop1Gap> {
    let diff = sigma_alpha_n(m, alpha, n)? - sigma_alpha_limit(m, alpha)?;
    let q = 1.0 - alpha * m.a;
    let scale = m.sigma_eps_norm / m.a;
    Ok(Prop1Gap {
        measured: linalg::op_norm(&diff),
        paper_bound: scale * powu(q, 2 * (n as u64 + 1)),
        corrected_bound: scale * powu(q, 2 * n as u64),
    })
}

fn powu(x: f64, k: u64) -> f64 {
    if k <= i32::MAX as u64 {
        x.powi(k as i32)
    } else {
        x.powf(k as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prop2Gap {
    pub measured: f64,
    pub bound: f64,
}

/// `‖Σ^α - Σ‖` against `α‖Φ‖²‖Σ‖/a`.
pub fn prop2_gap(m: &SecondMoments, alpha: f64) -> Result<Prop2Gap> {
    let sa = sigma_alpha_limit(m, alpha)?;
    let s = solve_lyapunov(&m.phi, &m.sigma_eps)?;
    Ok(Prop2Gap {
        measured: linalg::op_norm(&(sa - &s)),
        bound: alpha * m.phi_norm * m.phi_norm * linalg::op_norm(&s) / m.a,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundGap {
    pub measured_min_eig: f64,
    pub paper_const: f64,
    pub corrected_const: f64,
}

/// `λ_min(Σ^α_n)` against `(λ_min(Σ_ε)/‖Φ‖)(1-e⁻¹)` and half of it. Requires `α‖Φ‖n ≥ 1/2`.
pub fn covariance_lower_bound(m: &SecondMoments, alpha: f64, n: usize) -> Result<LowerBoundGap> {
    if alpha * m.phi_norm * (n as f64) < 0.5 {
        return Err(Error::Precondition(format!(
            "alpha*|Phi|*n = {} < 1/2",
            alpha * m.phi_norm * n as f64
        )));
    }
    let s = sigma_alpha_n(m, alpha, n)?;
    let paper_const = m.lambda_min / m.phi_norm * (1.0 - (-1.0f64).exp());
    Ok(LowerBoundGap { measured_min_eig: linalg::min_eig(&s), paper_const, corrected_const: paper_const / 2.0 })
}

/// `(3/2)‖Σ₁^{-1/2} Σ₂ Σ₁^{-1/2} - I‖_F`.
pub fn gaussian_comparison_bound(sigma1: &Mat, sigma2: &Mat) -> Result<f64> {
    let r = linalg::inv_sqrt_spd(sigma1, "reference covariance")?;
    if sigma2.shape() != sigma1.shape() {
        return Err(Error::Dimension { expected: sigma1.nrows(), got: sigma2.nrows() });
    }
    let d = sigma1.nrows();
    let inner = &r * sigma2 * &r - Mat::identity(d, d);
    Ok(1.5 * inner.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{mat_pow, Vector};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(phi: f64, s: f64) -> SecondMoments {
        SecondMoments::new(Mat::from_element(1, 1, phi), Mat::from_element(1, 1, s)).unwrap()
    }

    fn random_spd(d: usize, rng: &mut ChaCha8Rng, floor: f64) -> Mat {
        let b = Mat::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        &b * b.transpose() / d as f64 + Mat::identity(d, d) * floor
    }

    fn random_moments(d: usize, seed: u64) -> SecondMoments {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = random_spd(d, &mut rng, 0.1);
        let phi = &phi / linalg::op_norm(&phi);
        let se = random_spd(d, &mut rng, 0.05);
        SecondMoments::new(phi, se).unwrap()
    }

    /// Direct sum, one term per exponent.
    fn brute_sigma_n(m: &SecondMoments, alpha: f64, n: usize) -> Mat {
        let g = contraction_matrix(&m.phi, alpha);
        let mut s = Mat::zeros(m.dim(), m.dim());
        for k in 1..=n {
            let p = mat_pow(&g, (n - k) as u64);
            s += &p * &m.sigma_eps * &p;
        }
        s * alpha
    }

    /// Eigenbasis formula `(Σ_ε)_ij / (φ_i + φ_j - αφ_iφ_j)` in the basis of `Φ`.
    fn eigenbasis_riccati(m: &SecondMoments, alpha: f64) -> Mat {
        let eig = linalg::symmetrize(&m.phi).symmetric_eigen();
        let q = &eig.eigenvectors;
        let se = q.transpose() * &m.sigma_eps * q;
        let d = m.dim();
        let inner = Mat::from_fn(d, d, |i, j| {
            let (pi, pj) = (eig.eigenvalues[i], eig.eigenvalues[j]);
            se[(i, j)] / (pi + pj - alpha * pi * pj)
        });
        q * inner * q.transpose()
    }

    #[test]
    fn sigma_n_examples() {
        let m = scalar(1.0, 1.0);
        assert_eq!(sigma_alpha_n(&m, 0.5, 1).unwrap()[(0, 0)], 0.5);
        assert_eq!(sigma_alpha_n(&m, 0.5, 2).unwrap()[(0, 0)], 0.625);
        assert!(sigma_alpha_n(&m, 0.5, 0).is_err());
        assert!(sigma_alpha_n(&m, 1.5, 3).is_err());
    }

    #[test]
    fn sigma_n_matches_direct_sum() {
        for (d, seed) in [(1, 1), (2, 2), (3, 3), (5, 4)] {
            let m = random_moments(d, seed);
            for n in [1, 7, 50, 200] {
                let got = sigma_alpha_n(&m, 0.3, n).unwrap();
                let want = brute_sigma_n(&m, 0.3, n);
                assert!((got - &want).norm() <= 1e-13 * (1.0 + want.norm()));
            }
        }
    }

    #[test]
    fn doubling_path_matches_stepping() {
        let m = random_moments(3, 9);
        let n = STEPWISE_LIMIT + 12_345;
        let doubled = sigma_alpha_n(&m, 1e-4, n).unwrap();
        let g = contraction_matrix(&m.phi, 1e-4);
        let mut s = Mat::zeros(3, 3);
        for _ in 0..n {
            s = &g * s * &g + &m.sigma_eps * 1e-4;
        }
        assert!((doubled - &s).norm() <= 1e-11 * s.norm());
    }

    #[test]
    fn riccati_scalar_and_oracles() {
        let m = scalar(1.0, 1.0);
        assert_relative_eq!(sigma_alpha_limit(&m, 0.1).unwrap()[(0, 0)], 1.0 / 1.9, epsilon = 1e-15);
        for (d, seed) in [(2, 5), (4, 6), (6, 7)] {
            let m = random_moments(d, seed);
            let alpha = 0.4;
            let s = sigma_alpha_limit(&m, alpha).unwrap();
            assert!(riccati_residual(&m, alpha, &s) <= 1e-10 * m.sigma_eps_norm);
            assert!(linalg::asymmetry(&s) <= 1e-12);
            assert!((&s - eigenbasis_riccati(&m, alpha)).norm() <= 1e-10 * s.norm());
            // fixed-point iteration from zero
            let g = contraction_matrix(&m.phi, alpha);
            let mut it = Mat::zeros(d, d);
            for _ in 0..20_000 {
                it = &g * it * &g + &m.sigma_eps * alpha;
            }
            assert!((&s - it).norm() <= 1e-10 * s.norm());
            assert!(linalg::op_norm(&s) <= m.sigma_eps_norm / m.a * (1.0 + 1e-12));
        }
    }

    #[test]
    fn lyapunov_examples() {
        let s = solve_lyapunov(&Mat::identity(3, 3), &Mat::identity(3, 3)).unwrap();
        assert!((s - Mat::identity(3, 3) * 0.5).norm() <= 1e-15);
        let phi = Mat::from_diagonal(&Vector::from_vec(vec![1.0, 2.0]));
        let s = solve_lyapunov(&phi, &Mat::identity(2, 2)).unwrap();
        assert_relative_eq!(s[(0, 0)], 0.5, epsilon = 1e-15);
        assert_relative_eq!(s[(1, 1)], 0.25, epsilon = 1e-15);
        assert!(s[(0, 1)].abs() <= 1e-15);
        let bad = Mat::from_diagonal(&Vector::from_vec(vec![1.0, -1.0]));
        assert!(solve_lyapunov(&bad, &Mat::identity(2, 2)).is_err());
    }

    #[test]
    fn prop1_counterexample() {
        let m = scalar(1.0, 1.0);
        let g = prop1_gap(&m, 0.5, 2).unwrap();
        assert_relative_eq!(g.measured, 1.0 / 24.0, epsilon = 1e-15);
        assert_eq!(g.paper_bound, 0.015625);
        assert_eq!(g.corrected_bound, 0.0625);
        assert!(g.measured > g.paper_bound && g.measured <= g.corrected_bound);
        let g = prop1_gap(&m, 1.0, 3).unwrap();
        assert_eq!(g.measured, 0.0);
    }

    #[test]
    fn prop2_examples() {
        let m = scalar(1.0, 1.0);
        let g = prop2_gap(&m, 0.5).unwrap();
        assert_relative_eq!(g.measured, 1.0 / 6.0, epsilon = 1e-15);
        assert_relative_eq!(g.bound, 0.25, epsilon = 1e-15);
        let z = scalar(1.0, 0.0);
        let g = prop2_gap(&z, 0.5).unwrap();
        assert_eq!((g.measured, g.bound), (0.0, 0.0));
    }

    #[test]
    fn lower_bound_counterexample() {
        let m = scalar(1.0, 1.0);
        let lb = covariance_lower_bound(&m, 0.5, 2).unwrap();
        assert_relative_eq!(lb.measured_min_eig, 0.625, epsilon = 1e-15);
        assert_relative_eq!(lb.paper_const, 0.632_120_558_828_557_7, epsilon = 1e-15);
        assert!(lb.measured_min_eig < lb.paper_const);
        assert!(lb.measured_min_eig >= lb.corrected_const);
        assert!(matches!(covariance_lower_bound(&m, 0.1, 4), Err(Error::Precondition(_))));
    }

    #[test]
    fn comparison_examples() {
        let i2 = Mat::identity(2, 2);
        assert_eq!(gaussian_comparison_bound(&i2, &i2).unwrap(), 0.0);
        let s2 = Mat::from_diagonal(&Vector::from_vec(vec![1.1, 1.0]));
        assert_relative_eq!(gaussian_comparison_bound(&i2, &s2).unwrap(), 0.15, epsilon = 1e-14);
        assert!(gaussian_comparison_bound(&Mat::zeros(2, 2), &i2).is_err());
    }

    proptest! {
        #[test]
        fn comparison_relaxation(seed in 0u64..10_000, d in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s1 = random_spd(d, &mut rng, 0.2);
            let s2 = random_spd(d, &mut rng, 0.2);
            let v = gaussian_comparison_bound(&s1, &s2).unwrap();
            let inv = 1.0 / linalg::min_eig(&s1);
            let relax = 1.5 * (d as f64).sqrt() * inv * linalg::op_norm(&(&s2 - &s1));
            prop_assert!(v <= relax * (1.0 + 1e-10));
        }

        #[test]
        fn psd_monotone_in_n(seed in 0u64..1000, n in 1usize..100) {
            let m = random_moments(3, seed);
            let a = sigma_alpha_n(&m, 0.5, n).unwrap();
            let b = sigma_alpha_n(&m, 0.5, n + 1).unwrap();
            let lim = sigma_alpha_limit(&m, 0.5).unwrap();
            prop_assert!(linalg::min_eig(&(&b - &a)) >= -1e-12);
            prop_assert!(linalg::min_eig(&(&lim - &b)) >= -1e-12);
        }

        #[test]
        fn lyapunov_matches_eigenbasis(seed in 0u64..10_000, d in 1usize..6) {
            let m = random_moments(d, seed);
            let s = solve_lyapunov(&m.phi, &m.sigma_eps).unwrap();
            let oracle = eigenbasis_riccati(&m, 0.0);
            prop_assert!((&s - oracle).norm() <= 1e-10 * s.norm());
            prop_assert!(lyapunov_residual(&m.phi, &m.sigma_eps, &s) <= 1e-10 * m.sigma_eps_norm);
        }
    }
}
