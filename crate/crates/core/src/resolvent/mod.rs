//! Resolvents (λ + 𝓐)^{−1}: the exact diagonal inverse for constant
//! coefficients, a dense Galerkin solve used as the reference, the
//! partition-of-unity localization, dictionary norm estimates and
//! lower-order perturbations.

pub mod estimates;
pub mod localization;
pub mod perturbed;

use crate::error::{Error, Result};
use crate::linalg::{solve_small, Factorization, CONDITION_THRESHOLD};
use crate::operators::{assemble_galerkin, coeff_vector, from_coeff_vector, GalerkinMatrix, OperatorSpec};
use crate::trig::{TrigPoly, C64};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// u with û(k) = (λ + k^{2m} b)^{−1} f̂(k) for every mode of f.
///
/// Works column by column when f has several columns.
pub fn constant_resolvent(b: &DMatrix<C64>, m: u32, lambda: C64, f: &TrigPoly) -> Result<TrigPoly> {
    let d = b.nrows();
    if b.ncols() != d || f.rows() != d {
        return Err(Error::DimensionMismatch(format!(
            "symbol is {}x{}, right-hand side has {} rows",
            b.nrows(),
            b.ncols(),
            f.rows()
        )));
    }
    let cols = f.cols();
    let mut out = TrigPoly::zeros(f.bandwidth(), d, cols);
    let mut rhs = vec![C64::new(0.0, 0.0); d];
    for k in f.modes() {
        let w = (k as f64).powi(2 * m as i32);
        let sym = DMatrix::from_fn(d, d, |r, c| b[(r, c)] * w + if r == c { lambda } else { C64::new(0.0, 0.0) });
        let src = f.coeff(k).unwrap();
        if src.iter().all(|v| v.re == 0.0 && v.im == 0.0) {
            continue;
        }
        for c in 0..cols {
            for r in 0..d {
                rhs[r] = src[r * cols + c];
            }
            let x = solve_small(&sym, &rhs).ok_or(Error::SingularMode { k })?;
            for r in 0..d {
                out.set(k, r, c, x[r]);
            }
        }
    }
    Ok(out)
}

/// Outcome of a Galerkin resolvent solve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GalerkinSolve {
    pub u: TrigPoly,
    /// ‖(λ + A_K)u − f_K‖₂ / ‖f_K‖₂ measured after the solve.
    pub residual: f64,
    pub condition: f64,
}

/// A factored λI + A_K, reusable across right-hand sides.
pub struct GalerkinResolvent {
    galerkin: GalerkinMatrix,
    shifted: DMatrix<C64>,
    factor: Factorization,
    lambda: C64,
}

impl GalerkinResolvent {
    pub fn new(a: &OperatorSpec, lambda: C64, k: usize) -> Result<Self> {
        let galerkin = assemble_galerkin(a, k);
        let mut shifted = galerkin.matrix.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += lambda;
        }
        let factor = Factorization::new(shifted.clone(), CONDITION_THRESHOLD)?;
        Ok(GalerkinResolvent { galerkin, shifted, factor, lambda })
    }

    pub fn lambda(&self) -> C64 {
        self.lambda
    }

    pub fn bandwidth(&self) -> usize {
        self.galerkin.bandwidth
    }

    pub fn condition(&self) -> f64 {
        self.factor.condition()
    }

    /// Whether some coefficient was cut to the working bandwidth.
    pub fn truncated(&self) -> bool {
        self.galerkin.truncated
    }

    /// (λ + A_K)^{−1}M for a matrix of coefficient vectors.
    pub fn solve_matrix(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        self.factor.solve_matrix(m)
    }

    pub fn solve(&self, f: &TrigPoly) -> Result<GalerkinSolve> {
        let d = self.galerkin.dim;
        if f.rows() != d || f.cols() != 1 {
            return Err(Error::DimensionMismatch(format!("expected a {d}x1 right-hand side")));
        }
        let k = self.galerkin.bandwidth;
        let rhs = coeff_vector(f, k);
        let x = self.factor.solve(&rhs);
        let residual = relative_residual(&self.shifted, &x, &rhs);
        Ok(GalerkinSolve { u: from_coeff_vector(&x, k, d), residual, condition: self.factor.condition() })
    }
}

fn relative_residual(m: &DMatrix<C64>, x: &DVector<C64>, rhs: &DVector<C64>) -> f64 {
    let r = m * x - rhs;
    let n = rhs.norm();
    if n == 0.0 {
        r.norm()
    } else {
        r.norm() / n
    }
}

/// Dense solve of (λ + A_K)u = f_K on modes |k| ≤ K.
pub fn galerkin_resolvent(a: &OperatorSpec, lambda: C64, k: usize, f: &TrigPoly) -> Result<GalerkinSolve> {
    GalerkinResolvent::new(a, lambda, k)?.solve(f)
}
