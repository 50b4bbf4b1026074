//! Trigonometric polynomials with matrix-valued coefficients, grid samples,
//! and the FFT bridge between them.
//!
//! Fourier convention: f̂(k) = (1/2π)∫ f e^{−ikx} dx, so f = Σ f̂(k) e_k with
//! e_k(x) = e^{ikx}. The differential operator D = i d/dx acts as D e_k = −k e_k.

use crate::error::{Error, Result};
use crate::torus::{grid_nodes, TWO_PI};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

pub type C64 = Complex64;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn forward_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

pub(crate) fn inverse_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// (−1)^k as a float.
#[inline]
pub(crate) fn parity(k: i64) -> f64 {
    if k.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// A truncated Fourier series Σ_{|k|≤K} c_k e_k whose coefficients are
/// `rows × cols` complex blocks.
///
/// Scalars are 1×1, vector-valued states d×1, coefficient fields d×d.
/// Storage is mode-major from k = −K upward, each block row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigPoly {
    bandwidth: usize,
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl TrigPoly {
    pub fn zeros(bandwidth: usize, rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "block shape must be nonempty");
        TrigPoly {
            bandwidth,
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); (2 * bandwidth + 1) * rows * cols],
        }
    }

    pub fn scalar_zeros(bandwidth: usize) -> Self {
        Self::zeros(bandwidth, 1, 1)
    }

    /// The scalar exponential e_k.
    pub fn mode(k: i64) -> Self {
        let mut p = Self::scalar_zeros(k.unsigned_abs() as usize);
        p.set(k, 0, 0, C64::new(1.0, 0.0));
        p
    }

    /// The constant function with the given block value.
    pub fn constant(block: &DMatrix<C64>) -> Self {
        let mut p = Self::zeros(0, block.nrows(), block.ncols());
        for r in 0..block.nrows() {
            for c in 0..block.ncols() {
                p.set(0, r, c, block[(r, c)]);
            }
        }
        p
    }

    pub fn scalar_constant(v: C64) -> Self {
        let mut p = Self::scalar_zeros(0);
        p.set(0, 0, 0, v);
        p
    }

    /// Scalar polynomial from a coefficient generator.
    pub fn from_scalar_coeffs(bandwidth: usize, f: impl Fn(i64) -> C64) -> Self {
        let mut p = Self::scalar_zeros(bandwidth);
        for k in p.modes() {
            p.set(k, 0, 0, f(k));
        }
        p
    }

    /// Vector-valued polynomial with every component equal to `f`.
    pub fn broadcast(f: &TrigPoly, d: usize) -> Self {
        assert!(f.is_scalar());
        let mut p = Self::zeros(f.bandwidth, d, 1);
        for k in f.modes() {
            for r in 0..d {
                p.set(k, r, 0, f.get(k, 0, 0));
            }
        }
        p
    }

    /// Random polynomial with coefficients decaying like (1+|k|)^{-decay}.
    pub fn random<R: Rng>(rng: &mut R, bandwidth: usize, rows: usize, cols: usize, decay: f64) -> Self {
        let mut p = Self::zeros(bandwidth, rows, cols);
        for k in p.modes() {
            let scale = (1.0 + k.abs() as f64).powf(-decay);
            for v in p.coeff_mut(k) {
                *v = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale;
            }
        }
        p
    }

    /// Random real-valued scalar polynomial (conjugate-symmetric coefficients).
    pub fn random_real<R: Rng>(rng: &mut R, bandwidth: usize, decay: f64) -> Self {
        let mut p = Self::scalar_zeros(bandwidth);
        p.set(0, 0, 0, C64::new(rng.gen_range(-1.0..1.0), 0.0));
        for k in 1..=bandwidth as i64 {
            let scale = (1.0 + k as f64).powf(-decay);
            let c = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale;
            p.set(k, 0, 0, c);
            p.set(-k, 0, 0, c.conj());
        }
        p
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn block_len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }

    /// Modes −K..=K in storage order.
    pub fn modes(&self) -> impl Iterator<Item = i64> {
        let k = self.bandwidth as i64;
        -k..=k
    }

    #[inline]
    fn offset(&self, k: i64) -> Option<usize> {
        let kk = self.bandwidth as i64;
        if k.abs() > kk {
            None
        } else {
            Some((k + kk) as usize * self.block_len())
        }
    }

    /// Coefficient block at mode k; `None` beyond the bandwidth.
    pub fn coeff(&self, k: i64) -> Option<&[C64]> {
        self.offset(k).map(|o| &self.data[o..o + self.block_len()])
    }

    /// Mutable coefficient block at mode k. Panics beyond the bandwidth.
    pub fn coeff_mut(&mut self, k: i64) -> &mut [C64] {
        let o = self.offset(k).expect("mode outside bandwidth");
        let bl = self.block_len();
        &mut self.data[o..o + bl]
    }

    /// Entry (r, c) of the block at mode k, zero beyond the bandwidth.
    pub fn get(&self, k: i64, r: usize, c: usize) -> C64 {
        match self.offset(k) {
            Some(o) => self.data[o + r * self.cols + c],
            None => C64::new(0.0, 0.0),
        }
    }

    pub fn set(&mut self, k: i64, r: usize, c: usize, v: C64) {
        let o = self.offset(k).expect("mode outside bandwidth");
        self.data[o + r * self.cols + c] = v;
    }

    pub fn block_matrix(&self, k: i64) -> DMatrix<C64> {
        DMatrix::from_fn(self.rows, self.cols, |r, c| self.get(k, r, c))
    }

    /// Raw coefficient storage, mode-major from k = −K.
    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    /// Builds a polynomial from raw mode-major storage.
    pub fn from_raw(bandwidth: usize, rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != (2 * bandwidth + 1) * rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "expected {} coefficients, got {}",
                (2 * bandwidth + 1) * rows * cols,
                data.len()
            )));
        }
        Ok(TrigPoly { bandwidth, rows, cols, data })
    }

    /// Zero-padded or truncated copy at a new bandwidth.
    pub fn with_bandwidth(&self, bandwidth: usize) -> Self {
        let mut p = Self::zeros(bandwidth, self.rows, self.cols);
        let kk = bandwidth.min(self.bandwidth) as i64;
        for k in -kk..=kk {
            p.coeff_mut(k).copy_from_slice(self.coeff(k).unwrap());
        }
        p
    }

    /// Smallest bandwidth that keeps every coefficient above `tol` in modulus.
    pub fn effective_bandwidth(&self, tol: f64) -> usize {
        let mut b = 0;
        for k in self.modes() {
            if self.coeff(k).unwrap().iter().any(|v| v.norm() > tol) {
                b = b.max(k.unsigned_abs() as usize);
            }
        }
        b
    }

    /// Column c of every block, as a d×1 polynomial.
    pub fn column(&self, c: usize) -> Self {
        let mut p = Self::zeros(self.bandwidth, self.rows, 1);
        for k in self.modes() {
            for r in 0..self.rows {
                p.set(k, r, 0, self.get(k, r, c));
            }
        }
        p
    }

    /// Entry (r, c) of every block, as a scalar polynomial.
    pub fn entry(&self, r: usize, c: usize) -> Self {
        let mut p = Self::scalar_zeros(self.bandwidth);
        for k in self.modes() {
            p.set(k, 0, 0, self.get(k, r, c));
        }
        p
    }

    /// Writes f(x) into `out` (length rows·cols).
    pub fn eval_into(&self, x: f64, out: &mut [C64]) {
        let bl = self.block_len();
        out[..bl].iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        let kk = self.bandwidth as i64;
        let step = C64::from_polar(1.0, x);
        let mut phase = C64::from_polar(1.0, -(kk as f64) * x);
        for (i, k) in (-kk..=kk).enumerate() {
            if i % 64 == 0 {
                phase = C64::from_polar(1.0, k as f64 * x);
            }
            let block = &self.data[i * bl..(i + 1) * bl];
            for (o, c) in out.iter_mut().zip(block) {
                *o += c * phase;
            }
            phase *= step;
        }
    }

    pub fn eval(&self, x: f64) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.block_len()];
        self.eval_into(x, &mut out);
        out
    }

    /// Value of entry (0,0); the value itself for scalar polynomials.
    pub fn eval_scalar(&self, x: f64) -> C64 {
        if self.is_scalar() {
            self.eval(x)[0]
        } else {
            self.entry(0, 0).eval(x)[0]
        }
    }

    pub fn eval_matrix(&self, x: f64) -> DMatrix<C64> {
        let v = self.eval(x);
        DMatrix::from_row_slice(self.rows, self.cols, &v)
    }

    /// D^r f with D = i d/dx: coefficients scaled by (−k)^r.
    pub fn apply_d(&self, r: u32) -> Self {
        let mut p = self.clone();
        if r == 0 {
            return p;
        }
        for k in self.modes() {
            let s = ((-k) as f64).powi(r as i32);
            p.coeff_mut(k).iter_mut().for_each(|v| *v *= s);
        }
        p
    }

    /// The ordinary derivative f^{(r)}: coefficients scaled by (ik)^r.
    pub fn derivative(&self, r: u32) -> Self {
        let mut p = self.clone();
        if r == 0 {
            return p;
        }
        for k in self.modes() {
            let s = C64::new(0.0, k as f64).powu(r);
            p.coeff_mut(k).iter_mut().for_each(|v| *v *= s);
        }
        p
    }

    /// Pointwise product (block matrix product), exact as a convolution of
    /// coefficients. A 1×1 operand broadcasts over the other's blocks.
    pub fn mul_poly(&self, other: &TrigPoly) -> Result<TrigPoly> {
        let (rows, cols, inner) = if self.is_scalar() {
            (other.rows, other.cols, 0)
        } else if other.is_scalar() {
            (self.rows, self.cols, 0)
        } else if self.cols == other.rows {
            (self.rows, other.cols, self.cols)
        } else {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{} blocks",
                self.rows, self.cols, other.rows, other.cols
            )));
        };
        let kk = self.bandwidth + other.bandwidth;
        let mut out = TrigPoly::zeros(kk, rows, cols);
        for ka in self.modes() {
            let a = self.coeff(ka).unwrap();
            if a.iter().all(|v| v.re == 0.0 && v.im == 0.0) {
                continue;
            }
            for kb in other.modes() {
                let b = other.coeff(kb).unwrap();
                let o = out.coeff_mut(ka + kb);
                if inner == 0 {
                    if self.is_scalar() {
                        for (ov, bv) in o.iter_mut().zip(b) {
                            *ov += a[0] * bv;
                        }
                    } else {
                        for (ov, av) in o.iter_mut().zip(a) {
                            *ov += av * b[0];
                        }
                    }
                } else {
                    for r in 0..rows {
                        for c in 0..cols {
                            let mut s = C64::new(0.0, 0.0);
                            for i in 0..inner {
                                s += a[r * inner + i] * b[i * cols + c];
                            }
                            o[r * cols + c] += s;
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut p = self.clone();
        p.data.iter_mut().for_each(|v| *v *= s);
        p
    }

    /// self + s·other, padding to the larger bandwidth.
    pub fn axpy(&self, s: C64, other: &TrigPoly) -> Result<TrigPoly> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "cannot add {}x{} and {}x{} blocks",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = self.with_bandwidth(self.bandwidth.max(other.bandwidth));
        for k in other.modes() {
            for (o, v) in out.coeff_mut(k).iter_mut().zip(other.coeff(k).unwrap()) {
                *o += s * v;
            }
        }
        Ok(out)
    }

    /// Coefficient ℓ² norm, equal to the normalized L² norm by Parseval.
    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Relative ℓ² distance ‖self − other‖/‖other‖ (absolute when other = 0).
    pub fn rel_l2_distance(&self, other: &TrigPoly) -> f64 {
        let diff = self.axpy(C64::new(-1.0, 0.0), other).expect("shape mismatch");
        let n = other.l2_norm();
        if n == 0.0 {
            diff.l2_norm()
        } else {
            diff.l2_norm() / n
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Whether the scalar polynomial is real-valued (c_{−k} = conj c_k).
    pub fn is_real(&self, tol: f64) -> bool {
        self.modes().all(|k| {
            let a = self.coeff(k).unwrap();
            let b = self.coeff(-k).unwrap();
            a.iter().zip(b).all(|(x, y)| (x - y.conj()).norm() <= tol)
        })
    }
}

impl Add for &TrigPoly {
    type Output = TrigPoly;
    fn add(self, rhs: &TrigPoly) -> TrigPoly {
        self.axpy(C64::new(1.0, 0.0), rhs).expect("shape mismatch in addition")
    }
}

impl Sub for &TrigPoly {
    type Output = TrigPoly;
    fn sub(self, rhs: &TrigPoly) -> TrigPoly {
        self.axpy(C64::new(-1.0, 0.0), rhs).expect("shape mismatch in subtraction")
    }
}

impl Neg for &TrigPoly {
    type Output = TrigPoly;
    fn neg(self) -> TrigPoly {
        self.scale(C64::new(-1.0, 0.0))
    }
}

impl Mul<C64> for &TrigPoly {
    type Output = TrigPoly;
    fn mul(self, rhs: C64) -> TrigPoly {
        self.scale(rhs)
    }
}

impl Mul<f64> for &TrigPoly {
    type Output = TrigPoly;
    fn mul(self, rhs: f64) -> TrigPoly {
        self.scale(C64::new(rhs, 0.0))
    }
}

#[derive(Serialize, Deserialize)]
struct TrigPolyJson {
    dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cols: Option<usize>,
    #[serde(rename = "K")]
    bandwidth: usize,
    coeffs: Vec<(i64, Vec<[f64; 2]>)>,
}

impl Serialize for TrigPoly {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let coeffs = self
            .modes()
            .filter_map(|k| {
                let b = self.coeff(k).unwrap();
                if b.iter().all(|v| v.re == 0.0 && v.im == 0.0) {
                    None
                } else {
                    Some((k, b.iter().map(|v| [v.re, v.im]).collect()))
                }
            })
            .collect();
        TrigPolyJson {
            dim: self.rows,
            cols: if self.cols == self.rows { None } else { Some(self.cols) },
            bandwidth: self.bandwidth,
            coeffs,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TrigPoly {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = TrigPolyJson::deserialize(d)?;
        if j.dim == 0 {
            return Err(D::Error::custom("dim must be positive"));
        }
        let cols = j.cols.unwrap_or(j.dim);
        let mut p = TrigPoly::zeros(j.bandwidth, j.dim, cols);
        for (k, entries) in j.coeffs {
            if k.unsigned_abs() as usize > j.bandwidth {
                return Err(D::Error::custom(format!("mode {k} exceeds K = {}", j.bandwidth)));
            }
            if entries.len() != j.dim * cols {
                return Err(D::Error::custom(format!(
                    "mode {k}: expected {} entries, got {}",
                    j.dim * cols,
                    entries.len()
                )));
            }
            for (slot, e) in p.coeff_mut(k).iter_mut().zip(entries) {
                *slot = C64::new(e[0], e[1]);
            }
        }
        Ok(p)
    }
}

/// Samples on the equispaced nodes x_i = −π + 2πi/N, node-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    n: usize,
    rows: usize,
    cols: usize,
    values: Vec<C64>,
}

impl GridFunction {
    pub fn from_values(n: usize, rows: usize, cols: usize, values: Vec<C64>) -> Result<Self> {
        if values.len() != n * rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "expected {} grid values, got {}",
                n * rows * cols,
                values.len()
            )));
        }
        Ok(GridFunction { n, rows, cols, values })
    }

    /// Samples `f` with `f(x, out)` writing a rows×cols block.
    pub fn from_fn(n: usize, rows: usize, cols: usize, f: impl Fn(f64, &mut [C64])) -> Self {
        let bl = rows * cols;
        let mut values = vec![C64::new(0.0, 0.0); n * bl];
        for (i, x) in grid_nodes(n).into_iter().enumerate() {
            f(x, &mut values[i * bl..(i + 1) * bl]);
        }
        GridFunction { n, rows, cols, values }
    }

    pub fn from_scalar_fn(n: usize, f: impl Fn(f64) -> C64) -> Self {
        Self::from_fn(n, 1, 1, |x, out| out[0] = f(x))
    }

    pub fn nodes(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn block_len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn value(&self, i: usize) -> &[C64] {
        let bl = self.block_len();
        &self.values[i * bl..(i + 1) * bl]
    }

    /// CSV with columns x, then re/im for each block entry.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x");
        for c in 0..self.block_len() {
            s.push_str(&format!(",re{c},im{c}"));
        }
        s.push('\n');
        for (i, x) in grid_nodes(self.n).into_iter().enumerate() {
            s.push_str(&format!("{x:.17e}"));
            for v in self.value(i) {
                s.push_str(&format!(",{:.17e},{:.17e}", v.re, v.im));
            }
            s.push('\n');
        }
        s
    }
}

/// Discrete Fourier coefficients c_k = (1/N) Σ_i g(x_i) e^{−ikx_i}, |k| ≤ K.
pub fn analyze(g: &GridFunction, bandwidth: usize) -> Result<TrigPoly> {
    let n = g.n;
    if n < 2 * bandwidth + 1 {
        return Err(Error::Aliasing { nodes: n, bandwidth });
    }
    let bl = g.block_len();
    let plan = forward_plan(n);
    let mut out = TrigPoly::zeros(bandwidth, g.rows, g.cols);
    let mut buf = vec![C64::new(0.0, 0.0); n];
    let kk = bandwidth as i64;
    for c in 0..bl {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = g.values[i * bl + c];
        }
        plan.process(&mut buf);
        for k in -kk..=kk {
            let v = buf[k.rem_euclid(n as i64) as usize] * (parity(k) / n as f64);
            out.coeff_mut(k)[c] = v;
        }
    }
    Ok(out)
}

/// Exact values of f at the N equispaced nodes (any N; no truncation).
pub fn synthesize(f: &TrigPoly, n: usize) -> GridFunction {
    assert!(n > 0, "grid must have at least one node");
    let bl = f.block_len();
    let plan = inverse_plan(n);
    let mut values = vec![C64::new(0.0, 0.0); n * bl];
    let mut buf = vec![C64::new(0.0, 0.0); n];
    for c in 0..bl {
        buf.iter_mut().for_each(|b| *b = C64::new(0.0, 0.0));
        for k in f.modes() {
            buf[k.rem_euclid(n as i64) as usize] += f.coeff(k).unwrap()[c] * parity(k);
        }
        plan.process(&mut buf);
        for (i, b) in buf.iter().enumerate() {
            values[i * bl + c] = *b;
        }
    }
    GridFunction { n, rows: f.rows, cols: f.cols, values }
}

/// Pointwise evaluation; alias of [`TrigPoly::eval`].
pub fn eval(f: &TrigPoly, x: f64) -> Vec<C64> {
    f.eval(x)
}

/// D^r f.
pub fn apply_d(f: &TrigPoly, r: u32) -> TrigPoly {
    f.apply_d(r)
}

/// Node spacing 2π/N.
pub fn grid_spacing(n: usize) -> f64 {
    TWO_PI / n as f64
}

/// Maximum modulus over the given points, taking the spectral norm for
/// square blocks and the Euclidean norm for vectors.
pub(crate) fn block_norm(block: &[C64], rows: usize, cols: usize) -> f64 {
    if rows == 1 || cols == 1 {
        block.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    } else {
        crate::linalg::spectral_norm(&DMatrix::from_row_slice(rows, cols, block))
    }
}

/// Sup over the first `n` grid nodes of a dense sample (a lower bound of ‖f‖_∞).
pub fn sup_norm_on_grid(f: &TrigPoly, n: usize) -> f64 {
    let g = synthesize(f, n);
    (0..n)
        .map(|i| block_norm(g.value(i), g.rows, g.cols))
        .fold(0.0, f64::max)
}

/// A grid size that resolves bandwidth K for sup and Hölder estimates.
pub fn resolving_grid(bandwidth: usize) -> usize {
    (8 * bandwidth + 1).max(64)
}
