//! Fourier multipliers, the Marcinkiewicz quantities s1/s2/s3, the
//! piecewise-affine block interpolants m_j, and the η₂ functional.

use crate::error::{Error, Result};
use crate::linalg::inverse_small;
use crate::trig::{block_norm, TrigPoly, C64};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

type Generator = dyn Fn(i64, &mut [C64]) + Send + Sync;

/// A lazily evaluated symbol k ↦ M_k ∈ ℂ^{d×d} with smoothness gap g = r − s.
#[derive(Clone)]
pub struct SymbolSequence {
    dim: usize,
    gap: f64,
    generator: Arc<Generator>,
}

impl fmt::Debug for SymbolSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymbolSequence").field("dim", &self.dim).field("gap", &self.gap).finish()
    }
}

impl SymbolSequence {
    pub fn scalar(gap: f64, f: impl Fn(i64) -> C64 + Send + Sync + 'static) -> Self {
        SymbolSequence {
            dim: 1,
            gap,
            generator: Arc::new(move |k, out| out[0] = f(k)),
        }
    }

    pub fn matrix(dim: usize, gap: f64, f: impl Fn(i64) -> DMatrix<C64> + Send + Sync + 'static) -> Self {
        SymbolSequence {
            dim,
            gap,
            generator: Arc::new(move |k, out| {
                let m = f(k);
                for r in 0..dim {
                    for c in 0..dim {
                        out[r * dim + c] = m[(r, c)];
                    }
                }
            }),
        }
    }

    /// The resolvent symbol M_k = (λ + b k^{2m})^{−1} with gap 2m.
    ///
    /// Singular modes evaluate to NaN so scans report them as overflow.
    pub fn resolvent(b: &DMatrix<C64>, m: u32, lambda: C64) -> Self {
        let b = b.clone();
        let d = b.nrows();
        SymbolSequence::matrix(d, 2.0 * m as f64, move |k| {
            let kk = (k as f64).powi(2 * m as i32);
            let a = DMatrix::<C64>::identity(d, d) * lambda + &b * C64::new(kk, 0.0);
            inverse_small(&a).unwrap_or_else(|| DMatrix::from_element(d, d, C64::new(f64::NAN, f64::NAN)))
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gap(&self) -> f64 {
        self.gap
    }

    /// M_k as a row-major d×d block.
    pub fn eval(&self, k: i64) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.dim * self.dim];
        (self.generator)(k, &mut out);
        out
    }

    pub fn eval_matrix(&self, k: i64) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.eval(k))
    }

    fn norm(&self, block: &[C64]) -> f64 {
        block_norm(block, self.dim, self.dim)
    }
}

/// A supremum together with the k that attains it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub value: f64,
    pub argmax: i64,
}

/// Weighted quantities evaluated at a single k, used to read off tail limits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailValues {
    pub k: i64,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarcinkiewiczReport {
    pub scan_bound: usize,
    pub s1: Extremum,
    pub s2: Extremum,
    pub s3: Option<Extremum>,
    pub tail: TailValues,
}

/// The weighted quantities |k|^g‖M_k‖, |k|^{g+1}‖ΔM_k‖, |k|^{g+2}‖Δ²M_k‖ at one k.
pub fn tail_values(sym: &SymbolSequence, k: i64) -> Result<TailValues> {
    let get = |k: i64| -> Result<Vec<C64>> {
        let v = sym.eval(k);
        if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Overflow { k });
        }
        Ok(v)
    };
    let (m0, mp, mm) = (get(k)?, get(k + 1)?, get(k - 1)?);
    let ka = (k.abs() as f64).max(1.0);
    let g = sym.gap();
    let d1: Vec<C64> = mp.iter().zip(&m0).map(|(a, b)| a - b).collect();
    let d2: Vec<C64> = mp.iter().zip(&m0).zip(&mm).map(|((a, b), c)| a - 2.0 * b + c).collect();
    Ok(TailValues {
        k,
        q1: ka.powf(g) * sym.norm(&m0),
        q2: ka.powf(g + 1.0) * sym.norm(&d1),
        q3: ka.powf(g + 2.0) * sym.norm(&d2),
    })
}

/// Exact maxima of s1, s2 (and s3) over 0 < |k| ≤ K.
pub fn marcinkiewicz_constants(sym: &SymbolSequence, k_max: usize, include_s3: bool) -> Result<MarcinkiewiczReport> {
    if k_max < 2 {
        return Err(Error::InvalidArgument("scan bound K must be at least 2".into()));
    }
    let kk = k_max as i64;
    let bl = sym.dim * sym.dim;
    let mut table = vec![C64::new(0.0, 0.0); (2 * k_max + 3) * bl];
    for k in -kk - 1..=kk + 1 {
        let o = (k + kk + 1) as usize * bl;
        (sym.generator)(k, &mut table[o..o + bl]);
        if table[o..o + bl].iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Overflow { k });
        }
    }
    let at = |k: i64| -> &[C64] {
        let o = (k + kk + 1) as usize * bl;
        &table[o..o + bl]
    };
    let g = sym.gap;
    let mut s1 = Extremum { value: 0.0, argmax: 1 };
    let mut s2 = Extremum { value: 0.0, argmax: 1 };
    let mut s3 = Extremum { value: 0.0, argmax: 1 };
    let mut d1 = vec![C64::new(0.0, 0.0); bl];
    let mut d2 = vec![C64::new(0.0, 0.0); bl];
    for a in 1..=kk {
        for k in [a, -a] {
            let ka = a as f64;
            let (m0, mp, mm) = (at(k), at(k + 1), at(k - 1));
            let v1 = ka.powf(g) * sym.norm(m0);
            for i in 0..bl {
                d1[i] = mp[i] - m0[i];
                d2[i] = mp[i] - 2.0 * m0[i] + mm[i];
            }
            let v2 = ka.powf(g + 1.0) * sym.norm(&d1);
            if v1 > s1.value {
                s1 = Extremum { value: v1, argmax: k };
            }
            if v2 > s2.value {
                s2 = Extremum { value: v2, argmax: k };
            }
            if include_s3 {
                let v3 = ka.powf(g + 2.0) * sym.norm(&d2);
                if v3 > s3.value {
                    s3 = Extremum { value: v3, argmax: k };
                }
            }
        }
    }
    Ok(MarcinkiewiczReport {
        scan_bound: k_max,
        s1,
        s2,
        s3: include_s3.then_some(s3),
        tail: tail_values(sym, kk)?,
    })
}

/// Σ_k M_k f̂(k) e_k. A 1×1 symbol acts on every component.
pub fn apply_multiplier(sym: &SymbolSequence, f: &TrigPoly) -> Result<TrigPoly> {
    let d = sym.dim;
    if d != 1 && f.rows() != d {
        return Err(Error::DimensionMismatch(format!(
            "symbol is {d}x{d} but the function has {} rows",
            f.rows()
        )));
    }
    let mut out = f.clone();
    let cols = f.cols();
    for k in f.modes() {
        let m = sym.eval(k);
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Overflow { k });
        }
        let src = f.coeff(k).unwrap();
        let dst = out.coeff_mut(k);
        if d == 1 {
            dst.iter_mut().zip(src).for_each(|(o, s)| *o = m[0] * s);
        } else {
            for r in 0..d {
                for c in 0..cols {
                    dst[r * cols + c] = (0..d).map(|i| m[r * d + i] * src[i * cols + c]).sum();
                }
            }
        }
    }
    Ok(out)
}

/// A compactly supported function on ℝ that is smooth between breakpoints.
pub trait SupportedProfile {
    /// Sorted breakpoints; the support lies in [first, last].
    fn breakpoints(&self) -> Vec<f64>;

    fn block_len(&self) -> usize;

    fn eval_into(&self, x: f64, out: &mut [C64]);

    fn derivative_into(&self, x: f64, out: &mut [C64]);
}

/// Continuous piecewise-affine function through the given knots, zero
/// outside the knot range.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseAffine {
    knots: Vec<f64>,
    block_len: usize,
    values: Vec<C64>,
}

impl PiecewiseAffine {
    pub fn new(knots: Vec<f64>, block_len: usize, values: Vec<C64>) -> Result<Self> {
        if knots.len() * block_len != values.len() {
            return Err(Error::DimensionMismatch("one value block per knot required".into()));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("knots must be strictly increasing".into()));
        }
        Ok(PiecewiseAffine { knots, block_len, values })
    }

    /// The dilation x ↦ f(c·x).
    pub fn dilate(&self, c: f64) -> Self {
        assert!(c > 0.0);
        PiecewiseAffine {
            knots: self.knots.iter().map(|k| k / c).collect(),
            block_len: self.block_len,
            values: self.values.clone(),
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    fn segment(&self, x: f64) -> Option<usize> {
        let n = self.knots.len();
        if n < 2 || x < self.knots[0] || x > self.knots[n - 1] {
            return None;
        }
        let i = self.knots.partition_point(|&k| k <= x);
        Some(i.clamp(1, n - 1) - 1)
    }

    pub fn eval(&self, x: f64) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.block_len];
        self.eval_into(x, &mut out);
        out
    }

    /// Max over knots of the block norm (the sup of a piecewise-affine map).
    pub fn sup_norm(&self) -> f64 {
        let d = (self.block_len as f64).sqrt() as usize;
        self.values.chunks(self.block_len).map(|b| block_norm(b, d, d)).fold(0.0, f64::max)
    }
}

impl SupportedProfile for PiecewiseAffine {
    fn breakpoints(&self) -> Vec<f64> {
        self.knots.clone()
    }

    fn block_len(&self) -> usize {
        self.block_len
    }

    fn eval_into(&self, x: f64, out: &mut [C64]) {
        out.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        if let Some(i) = self.segment(x) {
            let (x0, x1) = (self.knots[i], self.knots[i + 1]);
            let t = (x - x0) / (x1 - x0);
            let bl = self.block_len;
            for c in 0..bl {
                out[c] = self.values[i * bl + c] * (1.0 - t) + self.values[(i + 1) * bl + c] * t;
            }
        }
    }

    fn derivative_into(&self, x: f64, out: &mut [C64]) {
        out.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        if let Some(i) = self.segment(x) {
            let h = self.knots[i + 1] - self.knots[i];
            let bl = self.block_len;
            for c in 0..bl {
                out[c] = (self.values[(i + 1) * bl + c] - self.values[i * bl + c]) / h;
            }
        }
    }
}

/// The piecewise-affine block interpolant m_j of a symbol.
///
/// For j ≥ 1 the knots are ±2^{j−2} and ±2^{j+2} (value 0) and the integers
/// 2^{j−1} ≤ |k| ≤ 2^{j+1} (value 2^{gj}M_k); for j = 0 they are ±2 (value 0)
/// and |k| ≤ 1 (value M_k).
pub fn build_mj(sym: &SymbolSequence, j: u32, g: f64) -> PiecewiseAffine {
    let bl = sym.dim * sym.dim;
    let zero = vec![C64::new(0.0, 0.0); bl];
    let mut knots = Vec::new();
    let mut values = Vec::new();
    let mut push = |x: f64, v: &[C64]| {
        knots.push(x);
        values.extend_from_slice(v);
    };
    if j == 0 {
        push(-2.0, &zero);
        for k in -1..=1 {
            push(k as f64, &sym.eval(k));
        }
        push(2.0, &zero);
    } else {
        let p = f64::powi(2.0, j as i32);
        let w = f64::powf(2.0, g * j as f64);
        let lo = 1i64 << (j - 1);
        let hi = 1i64 << (j + 1);
        let scaled = |k: i64| -> Vec<C64> { sym.eval(k).into_iter().map(|v| v * w).collect() };
        push(-4.0 * p, &zero);
        for k in (lo..=hi).rev() {
            push(-(k as f64), &scaled(-k));
        }
        push(-p / 4.0, &zero);
        push(p / 4.0, &zero);
        for k in lo..=hi {
            push(k as f64, &scaled(k));
        }
        push(4.0 * p, &zero);
    }
    PiecewiseAffine::new(knots, bl, values).expect("knots are increasing by construction")
}

/// Result of the η₂ minimization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eta2 {
    pub value: f64,
    pub argmin: f64,
    pub l2: f64,
    pub derivative_l2: f64,
}

const GAUSS_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329_0,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GAUSS_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362_0,
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// (‖m‖₂, ‖m′‖₂) by 8-point Gauss–Legendre on every smooth piece; block
/// values are measured in the Frobenius norm.
pub fn l2_norms(m: &dyn SupportedProfile) -> (f64, f64) {
    let bp = m.breakpoints();
    let mut buf = vec![C64::new(0.0, 0.0); m.block_len()];
    let (mut a, mut b) = (0.0, 0.0);
    for w in bp.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        let half = 0.5 * (x1 - x0);
        let mid = 0.5 * (x1 + x0);
        for (t, wt) in GAUSS_NODES.iter().zip(GAUSS_WEIGHTS) {
            let x = mid + half * t;
            m.eval_into(x, &mut buf);
            a += wt * half * buf.iter().map(|v| v.norm_sqr()).sum::<f64>();
            m.derivative_into(x, &mut buf);
            b += wt * half * buf.iter().map(|v| v.norm_sqr()).sum::<f64>();
        }
    }
    (a.sqrt(), b.sqrt())
}

/// Log-spaced dilation grid 10^lo ..= 10^hi with `n` points.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    (0..n).map(|i| f64::powf(10.0, lo + (hi - lo) * i as f64 / (n - 1) as f64)).collect()
}

/// η₂(m) = inf_a ‖m(a·)‖_{W^1_2}, minimized over `a_grid` and then refined
/// by repeated local log-grid zooms around the best point.
pub fn eta2(m: &dyn SupportedProfile, a_grid: &[f64]) -> Eta2 {
    let (l2, dl2) = l2_norms(m);
    let objective = |a: f64| l2 / a.sqrt() + dl2 * a.sqrt();
    let mut best = (f64::INFINITY, 1.0);
    for &a in a_grid {
        let v = objective(a);
        if v < best.0 {
            best = (v, a);
        }
    }
    let mut width = if a_grid.len() > 1 {
        (a_grid[a_grid.len() - 1] / a_grid[0]).ln() / (a_grid.len() - 1) as f64
    } else {
        1.0
    };
    for _ in 0..40 {
        let centre = best.1.ln();
        for i in -10..=10 {
            let a = (centre + width * i as f64 / 10.0).exp();
            let v = objective(a);
            if v < best.0 {
                best = (v, a);
            }
        }
        width /= 4.0;
    }
    Eta2 { value: best.0, argmin: best.1, l2, derivative_l2: dl2 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn unit_resolvent() -> SymbolSequence {
        SymbolSequence::scalar(2.0, |k| c(1.0 / (1.0 + (k * k) as f64)))
    }

    #[test]
    fn resolvent_symbol_scan() {
        let r = marcinkiewicz_constants(&unit_resolvent(), 10_000, false).unwrap();
        assert!(r.s1.value <= 1.0 && r.s1.value > 0.999_999);
        assert!((r.s2.value - 2.7).abs() < 1e-12);
        assert_eq!(r.s2.argmax, -3);
        assert!((r.tail.q2 - 2.0).abs() < 0.02 * 2.0);
    }

    #[test]
    fn constant_symbol_scan() {
        let sym = SymbolSequence::scalar(0.0, |_| C64::new(0.0, 3.0));
        let r = marcinkiewicz_constants(&sym, 50, true).unwrap();
        assert_eq!(r.s1.value, 3.0);
        assert_eq!(r.s2.value, 0.0);
        assert_eq!(r.s3.unwrap().value, 0.0);
    }

    #[test]
    fn singular_symbol_overflows() {
        let b = DMatrix::from_element(1, 1, c(1.0));
        let sym = SymbolSequence::resolvent(&b, 1, c(-4.0));
        assert_eq!(marcinkiewicz_constants(&sym, 10, false).unwrap_err(), Error::Overflow { k: -2 });
    }

    #[test]
    fn matrix_resolvent_has_finite_s3() {
        let b = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0), c(2.0)]));
        let sym = SymbolSequence::resolvent(&b, 1, c(1.0));
        let r = marcinkiewicz_constants(&sym, 1000, true).unwrap();
        let s3 = r.s3.unwrap().value;
        assert!(s3.is_finite() && s3 > 0.0);
        assert!(r.s1.value <= 1.0);
    }

    #[test]
    fn multiplier_examples() {
        let lin = SymbolSequence::scalar(0.0, |k| c(k as f64));
        assert_eq!(apply_multiplier(&lin, &TrigPoly::mode(2)).unwrap().get(2, 0, 0), c(2.0));
        let id = SymbolSequence::scalar(0.0, |_| c(1.0));
        let f = &TrigPoly::mode(3) + &TrigPoly::mode(-1);
        assert_eq!(apply_multiplier(&id, &f).unwrap(), f);
        let lap = SymbolSequence::scalar(0.0, |k| c(-((k * k) as f64)));
        let g = &TrigPoly::mode(3) + &TrigPoly::mode(-3);
        let out = apply_multiplier(&lap, &g).unwrap();
        assert_eq!(out.get(3, 0, 0), c(-9.0));
        assert_eq!(out.get(-3, 0, 0), c(-9.0));
    }

    #[test]
    fn multiplier_dimension_mismatch() {
        let b = DMatrix::from_element(2, 2, c(1.0));
        let sym = SymbolSequence::resolvent(&b, 1, c(1.0));
        assert!(matches!(apply_multiplier(&sym, &TrigPoly::zeros(2, 3, 1)), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn mj_examples() {
        let sq = SymbolSequence::scalar(0.0, |k| c((k * k) as f64));
        let m1 = build_mj(&sq, 1, 0.0);
        assert_eq!(m1.eval(2.0)[0], c(4.0));
        assert_eq!(m1.eval(8.0)[0], c(0.0));
        assert_eq!(m1.eval(2.5)[0], c(6.5));
        assert_eq!(m1.eval(0.5)[0], c(0.0));
        let m0 = build_mj(&sq, 0, 0.0);
        assert_eq!(m0.eval(1.0)[0], c(1.0));
        assert_eq!(m0.eval(2.0)[0], c(0.0));
    }

    #[test]
    fn eta2_examples() {
        let zero = PiecewiseAffine::new(vec![0.0, 1.0], 1, vec![c(0.0), c(0.0)]).unwrap();
        assert_eq!(eta2(&zero, &log_grid(-3.0, 3.0, 61)).value, 0.0);
        let hat = PiecewiseAffine::new(vec![0.0, 1.0, 2.0], 1, vec![c(0.0), c(1.0), c(0.0)]).unwrap();
        let (l2, dl2) = l2_norms(&hat);
        assert!((l2 - (2.0f64 / 3.0).sqrt()).abs() < 1e-14);
        assert!((dl2 - 2f64.sqrt()).abs() < 1e-14);
        let grid = log_grid(-3.0, 3.0, 61);
        let e = eta2(&hat, &grid);
        let closed = 2.0 * (4.0f64 / 3.0).powf(0.25);
        assert!((e.value - closed).abs() < 1e-12);
        assert!((e.argmin - l2 / dl2).abs() < 1e-6);
        let coarse = grid.iter().map(|&a| l2 / a.sqrt() + dl2 * a.sqrt()).fold(f64::INFINITY, f64::min);
        assert!(coarse >= e.value && coarse - e.value < 1e-2);
        let dilated = eta2(&hat.dilate(3.0), &grid);
        assert!((dilated.value - e.value).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn mj_uniform_bound_and_support(
            a in 0.1f64..5.0, p in 0.5f64..3.0, g in -1.0f64..3.0, shift in 0.5f64..4.0,
        ) {
            let sym = SymbolSequence::scalar(g, move |k| {
                let kk = k as f64;
                c(a * (shift + kk * kk).powf(-p)) * (kk.abs().max(1.0)).powf(2.0 * p - g)
            });
            let s1 = marcinkiewicz_constants(&sym, 1 << 9, false).unwrap().s1.value;
            for j in 1..7u32 {
                let mj = build_mj(&sym, j, g);
                let scale = f64::powi(2.0, j as i32);
                prop_assert!(mj.sup_norm() <= f64::powf(2.0, g.abs()) * s1 + 1e-12);
                for x in [0.2, 0.24, 4.01, 5.0, -0.2, -4.5] {
                    prop_assert_eq!(mj.eval(scale * x)[0], c(0.0));
                }
            }
        }

        #[test]
        fn linearity(seed in 0u64..1000, ar in -2.0f64..2.0, br in -2.0f64..2.0) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let f = TrigPoly::random(&mut rng, 12, 1, 1, 0.0);
            let g = TrigPoly::random(&mut rng, 12, 1, 1, 0.0);
            let sym = unit_resolvent();
            let lhs = apply_multiplier(&sym, &(&(&f * ar) + &(&g * br))).unwrap();
            let rhs = &(&apply_multiplier(&sym, &f).unwrap() * ar) + &(&apply_multiplier(&sym, &g).unwrap() * br);
            prop_assert!(lhs.rel_l2_distance(&rhs) < 1e-14 || (&lhs - &rhs).l2_norm() < 1e-14);
        }
    }
}
