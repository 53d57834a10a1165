//! SGD error recursion and its perturbation expansion.
//!
//! All recursions run on the error `θ_k - θ*`:
//!
//! ```text
//! e_k      = (I - αX_kX_kᵀ) e_{k-1} - αε_k
//! J⁽⁰⁾_k   = (I - αΦ) J⁽⁰⁾_{k-1} - αε_k
//! J⁽ˡ⁾_k   = (I - αΦ) J⁽ˡ⁾_{k-1} - α(X_kX_kᵀ - Φ) J⁽ˡ⁻¹⁾_{k-1}
//! H⁽ᴸ⁾_k   = (I - αX_kX_kᵀ) H⁽ᴸ⁾_{k-1} - α(X_kX_kᵀ - Φ) J⁽ᴸ⁾_{k-1}
//! ```
//!
//! with `e_n = Γ_{1:n} e_0 + J⁽⁰⁾_n + … + J⁽ᴸ⁾_n + H⁽ᴸ⁾_n`. Random products
//! `Γ_{m:k}` are only ever applied to vectors.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::model::{validate_assumptions, ProblemInstance};

/// Constant step size, horizon and starting point.
#[derive(Debug, Clone, PartialEq)]
pub struct StepConfig {
    pub alpha: f64,
    pub n: usize,
    pub theta0: Vector,
}

impl StepConfig {
    pub fn new(alpha: f64, n: usize, theta0: Vector) -> Self {
        StepConfig { alpha, n, theta0 }
    }

    /// Starts at `θ* + e₁`.
    pub fn unit_offset(instance: &ProblemInstance, alpha: f64, n: usize) -> Self {
        let mut theta0 = instance.theta_star.clone();
        theta0[0] += 1.0;
        StepConfig { alpha, n, theta0 }
    }

    /// Starts at `θ*`.
    pub fn at_optimum(instance: &ProblemInstance, alpha: f64, n: usize) -> Self {
        StepConfig { alpha, n, theta0: instance.theta_star.clone() }
    }

    pub fn initial_error(&self, instance: &ProblemInstance) -> Vector {
        &self.theta0 - &instance.theta_star
    }

    /// Dimension, horizon and A3 checks shared by every simulation entry point.
    pub fn validate(&self, instance: &ProblemInstance) -> Result<()> {
        if self.theta0.len() != instance.dim {
            return Err(Error::Dimension { expected: instance.dim, got: self.theta0.len() });
        }
        if self.n == 0 {
            return Err(Error::Precondition("horizon n must be >= 1".into()));
        }
        let report = validate_assumptions(instance, self.alpha);
        if !report.trajectory_ok() {
            return Err(Error::StepSize { alpha: self.alpha, max: instance.max_step() });
        }
        Ok(())
    }
}

/// A recorded sample path `(X_k, Y_k, ε_k)`, `k = 1..n` stored at index `k-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub xs: Vec<Vector>,
    pub ys: Vec<f64>,
    pub eps: Vec<Vector>,
}

impl SamplePath {
    pub fn draw<R: Rng + ?Sized>(instance: &ProblemInstance, n: usize, rng: &mut R) -> Self {
        let mut path = SamplePath { xs: Vec::with_capacity(n), ys: Vec::with_capacity(n), eps: Vec::with_capacity(n) };
        for _ in 0..n {
            let (x, y) = instance.sample_pair(rng);
            path.push(instance, x, y);
        }
        path
    }

    pub fn push(&mut self, instance: &ProblemInstance, x: Vector, y: f64) {
        self.eps.push(instance.noise_at_optimum(&x, y));
        self.xs.push(x);
        self.ys.push(y);
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Copy with the 1-based position `i` replaced by `(x, y)`.
    pub fn with_replacement(&self, instance: &ProblemInstance, i: usize, x: Vector, y: f64) -> Self {
        let mut out = self.clone();
        out.eps[i - 1] = instance.noise_at_optimum(&x, y);
        out.xs[i - 1] = x;
        out.ys[i - 1] = y;
        out
    }
}

/// `v ← (I - αxxᵀ) v`.
#[inline]
fn apply_rank_one(v: &mut Vector, x: &Vector, alpha: f64) {
    let s = alpha * x.dot(v);
    v.axpy(-s, x, 1.0);
}

/// `out ← out + scale·(xxᵀ - Φ) v`.
#[inline]
fn add_fluctuation(out: &mut Vector, x: &Vector, phi: &Mat, v: &Vector, scale: f64) {
    out.axpy(scale * x.dot(v), x, 1.0);
    out.gemv(-scale, phi, v, 1.0);
}

/// Error sequence `θ_k - θ*`, `k = 0..n`.
pub fn run_sgd<R: Rng + ?Sized>(instance: &ProblemInstance, config: &StepConfig, rng: &mut R) -> Result<Vec<Vector>> {
    config.validate(instance)?;
    let mut err = config.initial_error(instance);
    let mut x = Vector::zeros(instance.dim);
    let mut eps = Vector::zeros(instance.dim);
    let mut out = Vec::with_capacity(config.n + 1);
    out.push(err.clone());
    for _ in 0..config.n {
        let y = instance.sample_into(rng, &mut x);
        instance.noise_at_optimum_into(&x, y, &mut eps);
        apply_rank_one(&mut err, &x, config.alpha);
        err.axpy(-config.alpha, &eps, 1.0);
        out.push(err.clone());
    }
    Ok(out)
}

/// Final error `θ_n - θ*` without storing the sequence.
pub fn final_error<R: Rng + ?Sized>(instance: &ProblemInstance, config: &StepConfig, rng: &mut R) -> Result<Vector> {
    config.validate(instance)?;
    Ok(final_error_unchecked(instance, config, rng))
}

pub(crate) fn final_error_unchecked<R: Rng + ?Sized>(
    instance: &ProblemInstance,
    config: &StepConfig,
    rng: &mut R,
) -> Vector {
    let mut err = config.initial_error(instance);
    let mut x = Vector::zeros(instance.dim);
    let mut eps = Vector::zeros(instance.dim);
    for _ in 0..config.n {
        let y = instance.sample_into(rng, &mut x);
        instance.noise_at_optimum_into(&x, y, &mut eps);
        apply_rank_one(&mut err, &x, config.alpha);
        err.axpy(-config.alpha, &eps, 1.0);
    }
    err
}

/// Error sequence on a recorded path.
pub fn sgd_on_path(instance: &ProblemInstance, config: &StepConfig, path: &SamplePath) -> Vec<Vector> {
    let mut err = config.initial_error(instance);
    let mut out = Vec::with_capacity(path.len() + 1);
    out.push(err.clone());
    for (x, eps) in path.xs.iter().zip(&path.eps) {
        apply_rank_one(&mut err, x, config.alpha);
        err.axpy(-config.alpha, eps, 1.0);
        out.push(err.clone());
    }
    out
}

/// `J⁽⁰⁾_n` driven by the given noise sequence (`ε_1..ε_n`).
pub fn run_linear_proxy(instance: &ProblemInstance, config: &StepConfig, noise: &[Vector]) -> Result<Vector> {
    if noise.len() != config.n {
        return Err(Error::Dimension { expected: config.n, got: noise.len() });
    }
    let g = contraction_matrix(instance.phi(), config.alpha);
    let mut j = Vector::zeros(instance.dim);
    let mut tmp = Vector::zeros(instance.dim);
    for eps in noise {
        if eps.len() != instance.dim {
            return Err(Error::Dimension { expected: instance.dim, got: eps.len() });
        }
        tmp.gemv(1.0, &g, &j, 0.0);
        std::mem::swap(&mut j, &mut tmp);
        j.axpy(-config.alpha, eps, 1.0);
    }
    Ok(j)
}

/// `I - αΦ`.
pub fn contraction_matrix(phi: &Mat, alpha: f64) -> Mat {
    Mat::identity(phi.nrows(), phi.ncols()) - phi * alpha
}

/// Transient term, `J⁽⁰⁾…J⁽ᴸ⁾`, `H⁽ᴸ⁾` and the `W/D` split of one path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionLadder {
    pub depth: usize,
    /// `Γ_{1:n}(θ₀ - θ*)`.
    pub transient: Vec<f64>,
    /// `J⁽⁰⁾_n … J⁽ᴸ⁾_n`.
    pub j: Vec<Vec<f64>>,
    /// `H⁽ᴸ⁾_n`.
    pub h_tail: Vec<f64>,
    /// `W_n = J⁽⁰⁾_n`.
    pub w: Vec<f64>,
    /// `D_n = θ_n - θ* - W_n`.
    pub d: Vec<f64>,
    pub final_error: Vec<f64>,
}

impl DecompositionLadder {
    /// `‖final - (transient + ΣJ + H)‖ / (1 + ‖final‖)`.
    pub fn identity_residual(&self) -> f64 {
        let n = self.final_error.len();
        let mut sq = 0.0;
        for i in 0..n {
            let sum = self.transient[i] + self.j.iter().map(|v| v[i]).sum::<f64>() + self.h_tail[i];
            sq += (self.final_error[i] - sum).powi(2);
        }
        let fnorm = self.final_error.iter().map(|v| v * v).sum::<f64>().sqrt();
        sq.sqrt() / (1.0 + fnorm)
    }

    /// `H⁽⁰⁾_n = J⁽¹⁾ + … + J⁽ᴸ⁾ + H⁽ᴸ⁾`.
    pub fn h0(&self) -> Vector {
        let mut h = Vector::from_column_slice(&self.h_tail);
        for jl in self.j.iter().skip(1) {
            h += Vector::from_column_slice(jl);
        }
        h
    }
}

/// Draws one path and decomposes its final error to depth `L`.
pub fn run_ladder<R: Rng + ?Sized>(
    instance: &ProblemInstance,
    config: &StepConfig,
    depth: usize,
    rng: &mut R,
) -> Result<DecompositionLadder> {
    config.validate(instance)?;
    let path = SamplePath::draw(instance, config.n, rng);
    Ok(ladder_on_path(instance, config, depth, &path))
}

/// Decomposition of a recorded path; every component sees the same `(X_k, ε_k)`.
pub fn ladder_on_path(instance: &ProblemInstance, config: &StepConfig, depth: usize, path: &SamplePath) -> DecompositionLadder {
    let dim = instance.dim;
    let alpha = config.alpha;
    let phi = instance.phi();
    let g = contraction_matrix(phi, alpha);
    let e0 = config.initial_error(instance);
    let mut err = e0.clone();
    let mut tr = e0;
    let mut j = vec![Vector::zeros(dim); depth + 1];
    let mut h = Vector::zeros(dim);
    let mut tmp = Vector::zeros(dim);

    for (x, eps) in path.xs.iter().zip(&path.eps) {
        // H uses J⁽ᴸ⁾_{k-1}; J⁽ˡ⁾ uses J⁽ˡ⁻¹⁾_{k-1}: update top-down
        apply_rank_one(&mut h, x, alpha);
        add_fluctuation(&mut h, x, phi, &j[depth], -alpha);
        for l in (1..=depth).rev() {
            tmp.gemv(1.0, &g, &j[l], 0.0);
            add_fluctuation(&mut tmp, x, phi, &j[l - 1], -alpha);
            std::mem::swap(&mut j[l], &mut tmp);
        }
        tmp.gemv(1.0, &g, &j[0], 0.0);
        tmp.axpy(-alpha, eps, 1.0);
        std::mem::swap(&mut j[0], &mut tmp);

        apply_rank_one(&mut tr, x, alpha);
        apply_rank_one(&mut err, x, alpha);
        err.axpy(-alpha, eps, 1.0);
    }

    let to_vec = |v: &Vector| v.iter().copied().collect::<Vec<f64>>();
    let d = &err - &j[0];
    DecompositionLadder {
        depth,
        transient: to_vec(&tr),
        w: to_vec(&j[0]),
        j: j.iter().map(to_vec).collect(),
        h_tail: to_vec(&h),
        d: to_vec(&d),
        final_error: to_vec(&err),
    }
}

/// `Γ_{m:k} u = (I - αX_kX_kᵀ)⋯(I - αX_mX_mᵀ) u` on a recorded path (1-based, `m > k` is the identity).
pub fn gamma_apply(path: &SamplePath, alpha: f64, m: usize, k: usize, u: &Vector) -> Vector {
    assert!(m >= 1, "products are 1-based");
    let mut v = u.clone();
    if m > k {
        return v;
    }
    for x in &path.xs[m - 1..k] {
        apply_rank_one(&mut v, x, alpha);
    }
    v
}

/// `Γ_{m:k} u` with fresh features `X_m..X_k` drawn from `rng`.
pub fn gamma_apply_random<R: Rng + ?Sized>(
    instance: &ProblemInstance,
    alpha: f64,
    m: usize,
    k: usize,
    u: &Vector,
    rng: &mut R,
) -> Vector {
    assert!(m >= 1, "products are 1-based");
    let mut v = u.clone();
    let mut x = Vector::zeros(instance.dim);
    for _ in m..=k {
        instance.sample_into(rng, &mut x);
        apply_rank_one(&mut v, &x, alpha);
    }
    v
}

/// `G_{m:k} u = (I - αΦ)^{k-m+1} u` (identity when `m > k`).
pub fn g_apply(phi: &Mat, alpha: f64, m: usize, k: usize, u: &Vector) -> Vector {
    assert!(m >= 1, "products are 1-based");
    let g = contraction_matrix(phi, alpha);
    let mut v = u.clone();
    for _ in m..=k {
        v = &g * v;
    }
    v
}

/// Two runs that differ only in data point `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledResult {
    pub swap_index: usize,
    /// `θ_n - θ*`.
    pub error: Vec<f64>,
    /// `θ⁽ⁱ⁾_n - θ*`.
    pub error_swapped: Vec<f64>,
    /// `D_n - D⁽ⁱ⁾_n`.
    pub d_diff: Vec<f64>,
    /// `‖(θ_i - θ⁽ⁱ⁾_i) - [α(X̃X̃ᵀ - XXᵀ)(θ_{i-1} - θ*) - α(ε_i - ε'_i)]‖`.
    pub step_identity_residual: f64,
    /// `‖θ_i - θ⁽ⁱ⁾_i‖`, the scale the residual is compared with.
    pub step_gap: f64,
}

/// Coupled pair: the trajectory path comes from `rng`, the replacement `Z'_i` from `coupling_rng`.
pub fn run_coupled<R: Rng + ?Sized, S: Rng + ?Sized>(
    instance: &ProblemInstance,
    config: &StepConfig,
    swap_index: usize,
    rng: &mut R,
    coupling_rng: &mut S,
) -> Result<CoupledResult> {
    config.validate(instance)?;
    if swap_index < 1 || swap_index > config.n {
        return Err(Error::Precondition(format!("swap index {swap_index} outside [1, {}]", config.n)));
    }
    let path = SamplePath::draw(instance, config.n, rng);
    let (x, y) = instance.sample_pair(coupling_rng);
    Ok(coupled_on_path(instance, config, &path, swap_index, x, y))
}

/// Coupled pair on a recorded path with an explicit replacement `(x', y')` at position `i`.
pub fn coupled_on_path(
    instance: &ProblemInstance,
    config: &StepConfig,
    path: &SamplePath,
    i: usize,
    x_new: Vector,
    y_new: f64,
) -> CoupledResult {
    let swapped = path.with_replacement(instance, i, x_new, y_new);
    let a = ladder_on_path(instance, config, 0, path);
    let b = ladder_on_path(instance, config, 0, &swapped);

    let errs = sgd_on_path(instance, config, &path_prefix(path, i));
    let errs_sw = sgd_on_path(instance, config, &path_prefix(&swapped, i));
    let prev = &errs[i - 1];
    debug_assert_eq!(prev, &errs_sw[i - 1]);
    let gap = &errs[i] - &errs_sw[i];
    let alpha = config.alpha;
    let (x, xt) = (&path.xs[i - 1], &swapped.xs[i - 1]);
    let predicted = (xt * (xt.dot(prev)) - x * (x.dot(prev))) * alpha - (&path.eps[i - 1] - &swapped.eps[i - 1]) * alpha;

    CoupledResult {
        swap_index: i,
        d_diff: a.d.iter().zip(&b.d).map(|(p, q)| p - q).collect(),
        error: a.final_error,
        error_swapped: b.final_error,
        step_identity_residual: (&gap - predicted).norm(),
        step_gap: gap.norm(),
    }
}

fn path_prefix(path: &SamplePath, len: usize) -> SamplePath {
    SamplePath { xs: path.xs[..len].to_vec(), ys: path.ys[..len].to_vec(), eps: path.eps[..len].to_vec() }
}

/// Writes `k,err_1..err_d` rows with 17 significant digits.
pub fn write_trajectory_csv<W: Write>(errors: &[Vector], mut out: W) -> std::io::Result<()> {
    let d = errors.first().map_or(0, |e| e.len());
    let header: Vec<String> = std::iter::once("k".to_string()).chain((1..=d).map(|i| format!("err_{i}"))).collect();
    writeln!(out, "{}", header.join(","))?;
    for (k, e) in errors.iter().enumerate() {
        write!(out, "{k}")?;
        for v in e.iter() {
            write!(out, ",{}", crate::experiments::emit::fmt_f64(*v))?;
        }
        writeln!(out)?;
    }
    Ok(())
}
