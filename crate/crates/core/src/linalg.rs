//! Dense complex linear algebra helpers on top of nalgebra.

use crate::error::{Error, Result};
use crate::trig::C64;
use nalgebra::{DMatrix, DVector, Dyn, LU};

/// Condition estimates above this are treated as singular.
pub const CONDITION_THRESHOLD: f64 = 1e12;

/// Largest singular value. Closed form for 1×1 and 2×2.
pub fn spectral_norm(m: &DMatrix<C64>) -> f64 {
    match (m.nrows(), m.ncols()) {
        (1, 1) => m[(0, 0)].norm(),
        (2, 2) => spectral_norm_2x2(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]),
        _ => m.clone().svd(false, false).singular_values.max(),
    }
}

/// σ_max of [[a, b], [c, d]] from the Frobenius norm and the determinant.
#[inline]
pub fn spectral_norm_2x2(a: C64, b: C64, c: C64, d: C64) -> f64 {
    let f2 = a.norm_sqr() + b.norm_sqr() + c.norm_sqr() + d.norm_sqr();
    let det = (a * d - b * c).norm();
    let disc = (f2 * f2 - 4.0 * det * det).max(0.0);
    ((f2 + disc.sqrt()) / 2.0).sqrt()
}

/// Eigenvalues of a square complex matrix via the Schur form.
pub fn eigenvalues(m: &DMatrix<C64>) -> Vec<C64> {
    if m.nrows() == 1 {
        return vec![m[(0, 0)]];
    }
    m.clone().schur().eigenvalues().map(|v| v.iter().copied().collect()).unwrap_or_default()
}

/// LU factorization with a pivot-ratio condition estimate.
pub struct Factorization {
    lu: LU<C64, Dyn, Dyn>,
    condition: f64,
}

impl Factorization {
    /// Factors `m`, refusing when max|U_ii|/min|U_ii| exceeds `threshold`.
    pub fn new(m: DMatrix<C64>, threshold: f64) -> Result<Self> {
        let lu = m.lu();
        let u = lu.u();
        let diag: Vec<f64> = (0..u.nrows()).map(|i| u[(i, i)].norm()).collect();
        let max = diag.iter().cloned().fold(0.0, f64::max);
        let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        let condition = if min == 0.0 { f64::INFINITY } else { max / min };
        if !(condition <= threshold) {
            return Err(Error::NearSingular { condition, threshold });
        }
        Ok(Factorization { lu, condition })
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn solve(&self, rhs: &DVector<C64>) -> DVector<C64> {
        self.lu.solve(rhs).expect("factorization was checked nonsingular")
    }

    pub fn solve_matrix(&self, rhs: &DMatrix<C64>) -> DMatrix<C64> {
        self.lu.solve(rhs).expect("factorization was checked nonsingular")
    }
}

/// Solves a small system exactly, returning `None` when singular.
pub fn solve_small(m: &DMatrix<C64>, rhs: &[C64]) -> Option<Vec<C64>> {
    if m.nrows() == 1 {
        let a = m[(0, 0)];
        if a.norm() == 0.0 {
            return None;
        }
        return Some(vec![rhs[0] / a]);
    }
    let scale = m.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let lu = m.clone().lu();
    let u = lu.u();
    let min_pivot = (0..u.nrows()).map(|i| u[(i, i)].norm()).fold(f64::INFINITY, f64::min);
    if !(min_pivot > 1e-14 * scale) {
        return None;
    }
    let b = DVector::from_column_slice(rhs);
    lu.solve(&b).map(|x| x.iter().copied().collect())
}

/// Inverse of a small matrix, `None` when singular.
pub fn inverse_small(m: &DMatrix<C64>) -> Option<DMatrix<C64>> {
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for c in 0..n {
        let mut e = vec![C64::new(0.0, 0.0); n];
        e[c] = C64::new(1.0, 0.0);
        let col = solve_small(m, &e)?;
        for r in 0..n {
            out[(r, c)] = col[r];
        }
    }
    Some(out)
}
