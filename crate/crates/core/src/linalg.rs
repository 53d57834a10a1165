//! Small dense helpers on top of nalgebra.
//!
//! Everything here works on symmetric matrices unless stated otherwise. Norms
//! named `op_norm` are spectral norms taken from the eigenvalues of the
//! symmetrized argument.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

/// Eigenvalues of the symmetrized matrix, ascending.
pub fn sym_eigenvalues(a: &Mat) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(a)).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn min_eig(a: &Mat) -> f64 {
    sym_eigenvalues(a).first().copied().unwrap_or(0.0)
}

pub fn max_eig(a: &Mat) -> f64 {
    sym_eigenvalues(a).last().copied().unwrap_or(0.0)
}

/// Spectral norm `max |λ|` of the symmetrized matrix.
pub fn op_norm(a: &Mat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    sym_eigenvalues(a).iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Largest entrywise asymmetry `max |A - Aᵀ|`.
pub fn asymmetry(a: &Mat) -> f64 {
    (a - a.transpose()).amax()
}

/// Symmetric inverse square root of an SPD matrix.
///
/// Fails if any eigenvalue is below `1e-12 · ‖A‖`; eigenvalues are never
/// clamped.
pub fn inv_sqrt_spd(a: &Mat, what: &'static str) -> Result<Mat> {
    spd_power(a, -0.5, what)
}

/// Symmetric square root of an SPD matrix, with the same eigenvalue floor.
pub fn sqrt_spd(a: &Mat, what: &'static str) -> Result<Mat> {
    spd_power(a, 0.5, what)
}

fn spd_power(a: &Mat, p: f64, what: &'static str) -> Result<Mat> {
    let eig = SymmetricEigen::new(symmetrize(a));
    let scale = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(lo > 1e-12 * scale) || !lo.is_finite() {
        return Err(Error::NotSpd { what, min_eig: lo });
    }
    let d = eig.eigenvalues.map(|v| v.powf(p));
    let q = &eig.eigenvectors;
    Ok(symmetrize(&(q * Mat::from_diagonal(&d) * q.transpose())))
}

/// Checks that `a` is square, symmetric to `1e-10` relative and has a
/// positive minimal eigenvalue relative to its norm.
pub fn check_spd(a: &Mat, what: &'static str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension { expected: a.nrows(), got: a.ncols() });
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    if asymmetry(a) > 1e-10 * scale {
        return Err(Error::NotSpd { what, min_eig: f64::NAN });
    }
    let lo = min_eig(a);
    if !(lo > 1e-12 * op_norm(a)) {
        return Err(Error::NotSpd { what, min_eig: lo });
    }
    Ok(())
}

/// Column-major vectorization.
pub fn vec_of(a: &Mat) -> Vector {
    Vector::from_column_slice(a.as_slice())
}

pub fn unvec(v: &Vector, d: usize) -> Mat {
    Mat::from_column_slice(d, d, v.as_slice())
}

/// Kronecker product `A ⊗ B`.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

/// `x·xᵀ` for a column vector.
pub fn outer(x: &Vector) -> Mat {
    x * x.transpose()
}

/// Ascending `powi` on a matrix by repeated squaring.
pub fn mat_pow(a: &Mat, mut k: u64) -> Mat {
    let mut base = a.clone();
    let mut acc = Mat::identity(a.nrows(), a.ncols());
    while k > 0 {
        if k & 1 == 1 {
            acc = &acc * &base;
        }
        base = &base * &base;
        k >>= 1;
    }
    acc
}

/// Converts a matrix into row-major nested vectors for JSON output.
pub fn to_rows(a: &Mat) -> Vec<Vec<f64>> {
    (0..a.nrows()).map(|i| a.row(i).iter().copied().collect()).collect()
}

/// Builds a matrix from row-major nested vectors.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|row| row.len() != c) {
        return Err(Error::Dimension { expected: c, got: bad.len() });
    }
    Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
}
