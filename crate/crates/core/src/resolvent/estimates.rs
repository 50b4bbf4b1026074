//! Dictionary-based operator norm estimates and resolvent decay sweeps.
//!
//! An operator norm on a Hölder-type space is estimated as the largest
//! output/input ratio over a fixed, versioned test dictionary, so every
//! value here is a lower bound of the quantity it names.

use crate::error::{Error, Result};
use crate::operators::OperatorSpec;
use crate::resolvent::{constant_resolvent, GalerkinResolvent};
use crate::spaces::{holder_norm, HolderIndex};
use crate::torus::grid_shift_distance;
use crate::trig::{block_norm, resolving_grid, TrigPoly, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

pub const DICTIONARY_VERSION: &str = "dict-v1";
pub const RANDOM_ELEMENTS: usize = 20;
/// Coefficient decay (1+|k|)^{−1} of the random elements.
const RANDOM_DECAY: f64 = 1.0;
/// Elements evaluated between early-exit checks; fixed so results do not
/// depend on the thread count.
const CHUNK: usize = 16;

/// Modes e_k ⊗ e_r for |k| ≤ K_dict and each component r, followed by 20
/// seeded random polynomials of bandwidth K_dict.
#[derive(Clone, Debug)]
pub struct TestDictionary {
    pub version: &'static str,
    pub k_dict: usize,
    pub dim: usize,
    pub seed: u64,
    elements: Vec<TrigPoly>,
}

impl TestDictionary {
    pub fn new(k_dict: usize, dim: usize, seed: u64) -> Self {
        let mut elements = Vec::with_capacity((2 * k_dict + 1) * dim + RANDOM_ELEMENTS);
        let kk = k_dict as i64;
        for k in -kk..=kk {
            for r in 0..dim {
                let mut p = TrigPoly::zeros(k.unsigned_abs() as usize, dim, 1);
                p.set(k, r, 0, C64::new(1.0, 0.0));
                elements.push(p);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..RANDOM_ELEMENTS {
            elements.push(TrigPoly::random(&mut rng, k_dict, dim, 1, RANDOM_DECAY));
        }
        TestDictionary { version: DICTIONARY_VERSION, k_dict, dim, seed, elements }
    }

    pub fn elements(&self) -> &[TrigPoly] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

/// Maximum ratio over (a prefix of) the dictionary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormEstimate {
    pub value: f64,
    pub argmax: usize,
    pub evaluated: usize,
    /// False when the scan stopped early.
    pub complete: bool,
}

/// max over the dictionary of `ratio`, in fixed chunks; once the running
/// maximum exceeds `stop_above` the scan ends after the current chunk.
pub fn dictionary_max<F>(dict: &TestDictionary, ratio: F, stop_above: Option<f64>) -> Result<NormEstimate>
where
    F: Fn(&TrigPoly) -> Result<f64> + Sync,
{
    let mut best = NormEstimate { value: 0.0, argmax: 0, evaluated: 0, complete: true };
    for (c, chunk) in dict.elements.chunks(CHUNK).enumerate() {
        let vals: Vec<f64> = chunk.par_iter().map(&ratio).collect::<Result<_>>()?;
        for (i, v) in vals.into_iter().enumerate() {
            if v > best.value {
                best.value = v;
                best.argmax = c * CHUNK + i;
            }
        }
        best.evaluated += chunk.len();
        if let Some(t) = stop_above {
            if best.value > t && best.evaluated < dict.len() {
                best.complete = false;
                break;
            }
        }
    }
    Ok(best)
}

/// [e_k]_α on an N-point grid.
///
/// |e_k(x_i) − e_k(x_j)| depends only on the shift, so one node pair per
/// shift reproduces the full pair maximum.
fn mode_seminorm(k: i64, alpha: f64, n: usize) -> f64 {
    (1..=n / 2)
        .map(|s| {
            let diff = 2.0 * (PI * k as f64 * s as f64 / n as f64).sin().abs();
            diff / grid_shift_distance(n, s).powf(alpha)
        })
        .fold(0.0, f64::max)
}

/// ‖e_k‖_{C^θ est} on an N-point grid: Σ_{j≤⌊θ⌋}|k|^j + |k|^{⌊θ⌋}[e_k]_α.
pub fn mode_holder_norm(k: i64, theta: HolderIndex, n: usize) -> f64 {
    let a = k.unsigned_abs() as f64;
    let sups: f64 = (0..=theta.order()).map(|j| a.powi(j as i32)).sum();
    sups + a.powi(theta.order() as i32) * mode_seminorm(k, theta.alpha(), n)
}

/// The single mode carried by `p`, if exactly one coefficient block is nonzero.
fn single_mode(p: &TrigPoly) -> Option<(i64, f64)> {
    let mut found = None;
    for k in p.modes() {
        let blk = p.coeff(k).unwrap();
        if blk.iter().any(|v| v.re != 0.0 || v.im != 0.0) {
            if found.is_some() {
                return None;
            }
            found = Some((k, block_norm(blk, p.rows(), p.cols())));
        }
    }
    found
}

/// Hölder norm estimate with the single-mode shortcut.
fn norm_of(p: &TrigPoly, theta: HolderIndex, n: usize) -> f64 {
    match single_mode(p) {
        Some((k, scale)) => scale * mode_holder_norm(k, theta, n),
        None if p.l2_norm() == 0.0 => 0.0,
        None => holder_norm(p, theta, n),
    }
}

/// One λ of a decay sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayRow {
    pub lambda: C64,
    /// ‖(λ+𝓐)^{−1}‖ estimate on C^α.
    pub resolvent: f64,
    /// ‖(λ+𝓐)^{−1}‖ estimate from C^α to C^{2m−1+α}.
    pub intermediate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecaySweep {
    pub dictionary: &'static str,
    pub k_dict: usize,
    pub m: u32,
    pub alpha: f64,
    pub rows: Vec<DecayRow>,
    pub resolvent_slope: f64,
    pub intermediate_slope: f64,
}

/// Least-squares slope of log y against log x.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Resolvent norm estimates along the given λ values and their log-log slopes.
///
/// Constant operators use the exact diagonal inverse; others a Galerkin
/// solve at bandwidth K_dict.
pub fn resolvent_decay_sweep(a: &OperatorSpec, lambdas: &[C64], dict: &TestDictionary, alpha: f64) -> Result<DecaySweep> {
    if lambdas.len() < 2 {
        return Err(Error::InvalidArgument("a decay sweep needs at least two lambda values".into()));
    }
    if dict.dim != a.dim {
        return Err(Error::DimensionMismatch(format!("dictionary dim {} vs operator dim {}", dict.dim, a.dim)));
    }
    let low = HolderIndex::new(alpha)?;
    let high = HolderIndex::new(2.0 * a.m as f64 - 1.0 + alpha)?;
    let grid = resolving_grid(dict.k_dict);
    let inputs: Vec<f64> = dict.elements().par_iter().map(|f| norm_of(f, low, grid)).collect();
    let constant = a.is_constant() && a.is_principal_only();
    let mut rows = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let solver = if constant { None } else { Some(GalerkinResolvent::new(a, lambda, dict.k_dict)?) };
        let b0 = a.leading().block_matrix(0);
        let ratios: Vec<(f64, f64)> = dict
            .elements()
            .par_iter()
            .zip(&inputs)
            .map(|(f, &den)| {
                let u = match &solver {
                    None => constant_resolvent(&b0, a.m, lambda, f)?,
                    Some(s) => s.solve(f)?.u,
                };
                Ok((norm_of(&u, low, grid) / den, norm_of(&u, high, grid) / den))
            })
            .collect::<Result<_>>()?;
        let resolvent = ratios.iter().map(|r| r.0).fold(0.0, f64::max);
        let intermediate = ratios.iter().map(|r| r.1).fold(0.0, f64::max);
        rows.push(DecayRow { lambda, resolvent, intermediate });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.lambda.norm()).collect();
    let resolvent_slope = loglog_slope(&xs, &rows.iter().map(|r| r.resolvent).collect::<Vec<_>>());
    let intermediate_slope = loglog_slope(&xs, &rows.iter().map(|r| r.intermediate).collect::<Vec<_>>());
    Ok(DecaySweep {
        dictionary: dict.version,
        k_dict: dict.k_dict,
        m: a.m,
        alpha,
        rows,
        resolvent_slope,
        intermediate_slope,
    })
}

/// λ = 10^p on the positive axis for p in `exponents`, shifted by ω.
pub fn lambda_ladder(omega: f64, exponents: &[f64]) -> Vec<C64> {
    exponents.iter().map(|p| C64::new(omega + 10f64.powf(*p), 0.0)).collect()
}
