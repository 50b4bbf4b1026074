//! Lower-order perturbations: (λ + 𝓐_p + B)^{−1} = (id + (λ+𝓐_p)^{−1}B)^{−1}(λ+𝓐_p)^{−1}
//! with B = Σ_{r<2m} b_r D^r, and the interpolation inequality that makes
//! B relatively small.

use crate::error::{Error, Result};
use crate::linalg::spectral_norm;
use crate::operators::{assemble_galerkin, coeff_vector, from_coeff_vector, OperatorSpec};
use crate::resolvent::GalerkinResolvent;
use crate::spaces::{holder_norm, HolderIndex};
use crate::trig::{TrigPoly, C64};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

const MAX_TERMS: usize = 200;
const TERM_TOL: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerturbationReport {
    pub lambda: C64,
    /// ‖(λ+𝓐_p)^{−1}B‖ on coefficient ℓ² at the working bandwidth.
    pub norm_estimate: f64,
    pub terms: usize,
    /// ‖(λ + A_K)u − f_K‖₂/‖f_K‖₂ for the full operator.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerturbedSolve {
    pub u: TrigPoly,
    pub report: PerturbationReport,
}

/// (λ+𝓐)^{−1}f at bandwidth K via a Neumann series around the principal part.
pub fn perturbed_resolvent(a: &OperatorSpec, lambda: C64, k: usize, f: &TrigPoly) -> Result<PerturbedSolve> {
    let d = a.dim;
    if f.rows() != d || f.cols() != 1 {
        return Err(Error::DimensionMismatch(format!("expected a {d}x1 right-hand side")));
    }
    let principal = GalerkinResolvent::new(&a.principal_part(), lambda, k)?;
    let lower = assemble_galerkin(&a.lower_order_part(), k).matrix;
    let g = principal.solve_matrix(&lower);
    let norm_estimate = spectral_norm(&g);
    if norm_estimate >= 1.0 {
        return Err(Error::Divergence { what: "lower-order perturbation series".into(), estimate: norm_estimate });
    }
    let rhs = coeff_vector(f, k);
    let mut term = principal.solve_matrix(&DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice())).column(0).into_owned();
    let mut total: DVector<C64> = term.clone();
    let mut terms = 1;
    while terms < MAX_TERMS && term.norm() > TERM_TOL * total.norm() {
        term = -(&g * &term);
        total += &term;
        terms += 1;
    }
    let mut full = assemble_galerkin(a, k).matrix;
    for i in 0..full.nrows() {
        full[(i, i)] += lambda;
    }
    let r = &full * &total - &rhs;
    let residual = if rhs.norm() == 0.0 { r.norm() } else { r.norm() / rhs.norm() };
    Ok(PerturbedSolve { u: from_coeff_vector(&total, k, d), report: PerturbationReport { lambda, norm_estimate, terms, residual } })
}

/// Ratios ‖u‖_{C^{2m−1+α}} / (‖u‖_{C^α}^{1/2m} ‖u‖_{C^{2m+α}}^{(2m−1)/2m}) over a sample family.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InterpolationProbe {
    pub m: u32,
    pub alpha: f64,
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
}

pub fn interpolation_probe(m: u32, alpha: f64, samples: &[TrigPoly], grid: usize) -> Result<InterpolationProbe> {
    let low = HolderIndex::new(alpha)?;
    let mid = HolderIndex::new(2.0 * m as f64 - 1.0 + alpha)?;
    let high = HolderIndex::new(2.0 * m as f64 + alpha)?;
    let t = 1.0 / (2.0 * m as f64);
    let ratios: Vec<f64> = samples
        .iter()
        .filter(|u| u.l2_norm() > 0.0)
        .map(|u| {
            let den = holder_norm(u, low, grid).powf(t) * holder_norm(u, high, grid).powf(1.0 - t);
            holder_norm(u, mid, grid) / den
        })
        .collect();
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(InterpolationProbe { m, alpha, ratios, max_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{sine, two_plus_cos};
    use crate::resolvent::galerkin_resolvent;
    use crate::trig::resolving_grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn constant_first_order_perturbation_is_diagonal() {
        let one = TrigPoly::scalar_constant(c(1.0));
        let zero = TrigPoly::scalar_zeros(0);
        let a = OperatorSpec::new(1, 1, vec![zero, one.clone(), one], "D^2 + D").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = TrigPoly::random(&mut rng, 16, 1, 1, 1.0);
        let lambda = c(10.0);
        let s = perturbed_resolvent(&a, lambda, 16, &f).unwrap();
        for k in f.modes() {
            let kf = k as f64;
            let want = f.get(k, 0, 0) / (lambda + kf * kf - kf);
            assert!((s.u.get(k, 0, 0) - want).norm() < 1e-13);
        }
        assert!(s.report.norm_estimate < 1.0);
    }

    #[test]
    fn variable_perturbation_matches_oracle() {
        let one = TrigPoly::scalar_constant(c(1.0));
        let a = OperatorSpec::new(1, 1, vec![one, sine(), two_plus_cos()], "").unwrap();
        let lambda = c(1000.0);
        let f = TrigPoly::mode(1);
        let s = perturbed_resolvent(&a, lambda, 64, &f).unwrap();
        let oracle = galerkin_resolvent(&a, lambda, 64, &f).unwrap();
        assert!(s.u.rel_l2_distance(&oracle.u) < 1e-6);
        assert!(s.report.residual < 1e-8);
    }

    #[test]
    fn large_perturbation_is_refused() {
        let big = TrigPoly::scalar_constant(c(50.0));
        let a = OperatorSpec::new(1, 1, vec![TrigPoly::scalar_zeros(0), big, TrigPoly::scalar_constant(c(1.0))], "").unwrap();
        let err = perturbed_resolvent(&a, c(1.0), 8, &TrigPoly::mode(1)).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }

    #[test]
    fn interpolation_constant_is_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let samples: Vec<TrigPoly> = (0..50)
            .map(|_| {
                let k = rng.gen_range(1..=32);
                TrigPoly::random_real(&mut rng, k, 2.0)
            })
            .collect();
        let probe = interpolation_probe(1, 0.5, &samples, resolving_grid(32)).unwrap();
        assert_eq!(probe.ratios.len(), 50);
        assert!(probe.max_ratio <= INTERPOLATION_C, "{}", probe.max_ratio);
    }

    /// Measured maximum 1.0440 on this seeded family.
    const INTERPOLATION_C: f64 = 1.1;
}
