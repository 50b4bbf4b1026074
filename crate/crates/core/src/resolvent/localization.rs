//! Partition-of-unity localization of 𝓐_p = b(x)D^{2m}.
//!
//! The operator is frozen at the centers x_j of a uniform cover, corrected
//! by small localized coefficients b_j = b_{x_j,ε}, and glued back with the
//! retraction pair R(f_j) = Σπ_j f_j, R^C u = (π_j u)_j. Left and right
//! inverses of λ + 𝓐_p come from Neumann series for id + 𝓒(λ) and
//! id − R^C𝓓(λ+Λ)^{−1}.
//!
//! Discretization: fields of bandwidth K are stored as values on the
//! N = 2K+1 collocation nodes, component-major. Products are pointwise at the
//! nodes and D^{2m} acts spectrally, so R∘R^C = id and π_j𝓐_j = π_j𝓐_p hold
//! exactly on the discrete level. Because spectral differentiation is not
//! local, the two continuum expressions of B_j differ at finite K:
//! π_j𝓐_j − 𝓐_jπ_j drives the left inverse and [π_j, 𝓐_p] the right one,
//! which is what makes each of them an exact one-sided inverse of the
//! collocated λ + 𝓐_p.

use crate::error::{Error, Result};
use crate::linalg::{inverse_small, spectral_norm};
use crate::operators::{apply_operator, OperatorSpec};
use crate::resolvent::estimates::{dictionary_max, NormEstimate, TestDictionary};
use crate::spaces::{c_alpha_from_samples, smoothstep, Evaluable};
use crate::torus::{dt_real, grid_nodes, wrap, TorusPoint, TWO_PI};
use crate::trig::{analyze, block_norm, forward_plan, inverse_plan, synthesize, GridFunction, TrigPoly, C64};
use nalgebra::DMatrix;
use rayon::prelude::*;
use rustfft::Fft;
use serde::Serialize;
use std::f64::consts::PI;
use std::sync::Arc;

/// Inner radius of the cutoff plateau.
pub const CUTOFF_INNER: f64 = 0.5;
/// The cutoff vanishes for |t| ≥ this radius.
pub const CUTOFF_OUTER: f64 = 0.875;
/// ‖X‖_∞.
pub const CUTOFF_SUP: f64 = 1.0;
/// ‖X′‖_∞: 15/8 from the smoothstep, times 1/(outer − inner).
pub const CUTOFF_SLOPE: f64 = 5.0;

/// Grid used for norm estimates of partition functions and localized coefficients.
pub const FINE_GRID: usize = 4096;

const NEUMANN_MAX_TERMS: usize = 60;
const NEUMANN_TOL: f64 = 1e-12;
const LOCAL_MAX_TERMS: usize = 400;
const LOCAL_TOL: f64 = 1e-15;
const LADDER_RUNGS: u32 = 40;
const CONTRACTION_TARGET: f64 = 0.5;

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps <= 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("epsilon must lie in (0, 1/2], got {eps}")))
    }
}

/// r_ε(x) = clamp(x, −ε, ε).
pub fn retraction(eps: f64, x: f64) -> f64 {
    x.clamp(-eps, eps)
}

/// r_{z,ε} = T_{−z} ∘ r_ε ∘ T_z.
pub fn retraction_at(z: TorusPoint, eps: f64, x: TorusPoint) -> TorusPoint {
    TorusPoint::new(z.value() + retraction(eps, wrap(x.value() - z.value())))
}

/// The cutoff X: 1 on [−1/2, 1/2], a C² ramp down to 0 at ±7/8.
pub fn cutoff(t: f64) -> f64 {
    let a = t.abs();
    if a <= CUTOFF_INNER {
        1.0
    } else if a >= CUTOFF_OUTER {
        0.0
    } else {
        smoothstep((CUTOFF_OUTER - a) / (CUTOFF_OUTER - CUTOFF_INNER))
    }
}

/// b_{z,ε}(x) = X(x − z)[b(r_{z,ε}(x)) − b(z)], together with its measured
/// C^α estimate and the a priori bound
/// ((1+ε^α)‖X‖ + ε^α π^{1−α}‖X′‖)·[b]_{α, B̄(z,ε)}.
#[derive(Clone, Debug)]
pub struct LocalizedCoefficient {
    pub center: TorusPoint,
    pub eps: f64,
    pub alpha: f64,
    b: TrigPoly,
    base: Vec<C64>,
    pub norm_estimate: f64,
    pub ball_seminorm: f64,
    pub bound: f64,
}

impl Evaluable for LocalizedCoefficient {
    fn shape(&self) -> (usize, usize) {
        (self.b.rows(), self.b.cols())
    }

    fn eval_into(&self, x: f64, out: &mut [C64]) {
        let t = wrap(x - self.center.value());
        let w = cutoff(t);
        if w == 0.0 {
            out.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
            return;
        }
        self.b.eval_into(self.center.value() + retraction(self.eps, t), out);
        for (o, b0) in out.iter_mut().zip(&self.base) {
            *o = (*o - b0) * w;
        }
    }
}

/// [b]_α restricted to the closed ball B̄(z, ε), from a uniform sample of
/// the ball and all sample pairs.
fn ball_seminorm(b: &TrigPoly, z: f64, eps: f64, alpha: f64) -> f64 {
    let m = 2 * ((FINE_GRID as f64 * eps / PI).ceil() as usize).max(32) + 1;
    let (r, c) = (b.rows(), b.cols());
    let bl = r * c;
    let xs: Vec<f64> = (0..m).map(|i| z - eps + 2.0 * eps * i as f64 / (m - 1) as f64).collect();
    let mut vals = vec![C64::new(0.0, 0.0); m * bl];
    for (i, &x) in xs.iter().enumerate() {
        b.eval_into(x, &mut vals[i * bl..(i + 1) * bl]);
    }
    let mut best: f64 = 0.0;
    let mut diff = vec![C64::new(0.0, 0.0); bl];
    for i in 0..m {
        for j in i + 1..m {
            for q in 0..bl {
                diff[q] = vals[i * bl + q] - vals[j * bl + q];
            }
            best = best.max(block_norm(&diff, r, c) / (xs[j] - xs[i]).powf(alpha));
        }
    }
    best
}

pub fn localized_coefficient(b: &TrigPoly, z: TorusPoint, eps: f64, alpha: f64) -> Result<LocalizedCoefficient> {
    check_eps(eps)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let base = b.eval(z.value());
    let mut lc = LocalizedCoefficient {
        center: z,
        eps,
        alpha,
        b: b.clone(),
        base,
        norm_estimate: 0.0,
        ball_seminorm: 0.0,
        bound: 0.0,
    };
    let (r, c) = lc.shape();
    lc.norm_estimate = c_alpha_from_samples(&lc.sample(FINE_GRID), r, c, alpha);
    lc.ball_seminorm = ball_seminorm(b, z.value(), eps, alpha);
    let ea = eps.powf(alpha);
    lc.bound = ((1.0 + ea) * CUTOFF_SUP + ea * PI.powf(1.0 - alpha) * CUTOFF_SLOPE) * lc.ball_seminorm;
    Ok(lc)
}

/// sup over the partition centers of ‖b_{x_j,ε}‖_{C^α est}, with the arg-max center.
pub fn sup_localized_norm(b: &TrigPoly, eps: f64, alpha: f64) -> Result<(f64, f64)> {
    let part = build_partition(eps)?;
    let norms: Vec<(f64, f64)> = part
        .centers
        .par_iter()
        .map(|&z| localized_coefficient(b, TorusPoint::new(z), eps, alpha).map(|lc| (lc.norm_estimate, z)))
        .collect::<Result<_>>()?;
    Ok(norms.into_iter().fold((0.0, part.centers[0]), |acc, v| if v.0 > acc.0 { v } else { acc }))
}

/// Uniform cover by balls B(x_j, ε) with x_1 = −π, x_{j+1} = x_j + ε, and
/// resolution functions π_j = χ_j / (Σχ_k²)^{1/2}.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionData {
    pub eps: f64,
    pub n: usize,
    pub centers: Vec<f64>,
    /// max_j ‖π_j‖_{C^{1/2} est}.
    pub m_bound: f64,
}

/// exp(−1/(1−t²)) on |t| < 1, zero elsewhere.
fn bump(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - t * t)).exp()
    }
}

impl PartitionData {
    /// χ_j(x), positive exactly on B(x_j, ε).
    pub fn chi(&self, j: usize, x: f64) -> f64 {
        bump(dt_real(x, self.centers[j]) / self.eps)
    }

    pub fn sum_of_squares(&self, x: f64) -> f64 {
        (0..self.n).map(|j| self.chi(j, x).powi(2)).sum()
    }

    /// π_j(x).
    pub fn pi(&self, j: usize, x: f64) -> f64 {
        let c = self.chi(j, x);
        if c == 0.0 {
            0.0
        } else {
            c / self.sum_of_squares(x).sqrt()
        }
    }

    /// π_j as an [`Evaluable`].
    pub fn resolution_function(&self, j: usize) -> ResolutionFunction<'_> {
        ResolutionFunction { part: self, j }
    }

    /// All π_j on the N equispaced nodes, indexed [j][i].
    pub fn sample_all(&self, nodes: usize) -> Vec<Vec<f64>> {
        let xs = grid_nodes(nodes);
        let chi: Vec<Vec<f64>> = (0..self.n).map(|j| xs.iter().map(|&x| self.chi(j, x)).collect()).collect();
        let norm: Vec<f64> = (0..nodes).map(|i| chi.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt()).collect();
        chi.into_iter()
            .map(|c| c.iter().zip(&norm).map(|(v, s)| v / s).collect())
            .collect()
    }
}

/// One resolution function π_j.
pub struct ResolutionFunction<'a> {
    part: &'a PartitionData,
    j: usize,
}

impl Evaluable for ResolutionFunction<'_> {
    fn shape(&self) -> (usize, usize) {
        (1, 1)
    }

    fn eval_into(&self, x: f64, out: &mut [C64]) {
        out[0] = C64::new(self.part.pi(self.j, x), 0.0);
    }
}

pub fn build_partition(eps: f64) -> Result<PartitionData> {
    check_eps(eps)?;
    let n = (TWO_PI / eps).ceil() as usize;
    let centers: Vec<f64> = (0..n).map(|j| TorusPoint::new(-PI + eps * j as f64).value()).collect();
    let mut part = PartitionData { eps, n, centers, m_bound: 0.0 };
    let samples = part.sample_all(FINE_GRID);
    part.m_bound = samples
        .par_iter()
        .map(|p| {
            let v: Vec<C64> = p.iter().map(|&x| C64::new(x, 0.0)).collect();
            c_alpha_from_samples(&v, 1, 1, 0.5)
        })
        .reduce(|| 0.0, f64::max);
    Ok(part)
}

/// w·(𝓐u) − 𝓐(w·u), exact on trigonometric polynomials.
pub fn commutator(weight: &TrigPoly, a: &OperatorSpec, u: &TrigPoly) -> Result<TrigPoly> {
    let left = weight.mul_poly(&apply_operator(a, u)?)?;
    let right = apply_operator(a, &weight.mul_poly(u)?)?;
    left.axpy(C64::new(-1.0, 0.0), &right)
}

/// B_j u = π_j(𝓐_p u) − 𝓐_p(π_j u) with π_j interpolated at bandwidth K.
pub fn commutator_bj(part: &PartitionData, j: usize, a_p: &OperatorSpec, u: &TrigPoly, k: usize) -> Result<TrigPoly> {
    if j >= part.n {
        return Err(Error::InvalidArgument(format!("partition index {j} out of range 0..{}", part.n)));
    }
    if !a_p.is_principal_only() {
        return Err(Error::InvalidArgument("commutators are taken with the principal part only".into()));
    }
    let nodes = 2 * k + 1;
    let g = GridFunction::from_values(nodes, 1, 1, part.resolution_function(j).sample(nodes))?;
    let pi = analyze(&g, k)?;
    commutator(&pi, a_p, u)
}

/// Field bandwidth that resolves a cover of radius ε: max(128, 2^⌈log₂(12.8/ε)⌉).
pub fn working_bandwidth(eps: f64) -> usize {
    let need = (12.8 / eps).ceil() as usize;
    need.next_power_of_two().max(128)
}

/// FFT-based action of per-mode d×d blocks on component-major fields.
struct Spectral {
    n: usize,
    d: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    wave: Vec<f64>,
}

impl Spectral {
    fn new(k: usize, d: usize) -> Self {
        let n = 2 * k + 1;
        let wave = (0..n).map(|q| if q <= k { q as f64 } else { q as f64 - n as f64 }).collect();
        Spectral { n, d, fwd: forward_plan(n), inv: inverse_plan(n), wave }
    }

    fn forward(&self, field: &[C64]) -> Vec<C64> {
        let mut buf = field.to_vec();
        for c in 0..self.d {
            self.fwd.process(&mut buf[c * self.n..(c + 1) * self.n]);
        }
        buf
    }

    fn inverse(&self, mut buf: Vec<C64>) -> Vec<C64> {
        let s = 1.0 / self.n as f64;
        for c in 0..self.d {
            self.inv.process(&mut buf[c * self.n..(c + 1) * self.n]);
        }
        buf.iter_mut().for_each(|v| *v *= s);
        buf
    }

    /// Multiplier with bin-major d×d blocks `sym`.
    fn apply(&self, field: &[C64], sym: &[C64]) -> Vec<C64> {
        let (n, d) = (self.n, self.d);
        let mut hat = self.forward(field);
        if d == 1 {
            hat.iter_mut().zip(sym).for_each(|(v, s)| *v *= s);
        } else {
            let mut tmp = vec![C64::new(0.0, 0.0); d];
            for q in 0..n {
                let blk = &sym[q * d * d..(q + 1) * d * d];
                for r in 0..d {
                    tmp[r] = (0..d).map(|c| blk[r * d + c] * hat[c * n + q]).sum();
                }
                for r in 0..d {
                    hat[r * n + q] = tmp[r];
                }
            }
        }
        self.inverse(hat)
    }

    /// D^{2m} on every component.
    fn d2m(&self, field: &[C64], m: u32) -> Vec<C64> {
        let mut hat = self.forward(field);
        for c in 0..self.d {
            for q in 0..self.n {
                hat[c * self.n + q] *= self.wave[q].powi(2 * m as i32);
            }
        }
        self.inverse(hat)
    }
}

fn zero_field(len: usize) -> Vec<C64> {
    vec![C64::new(0.0, 0.0); len]
}

fn scale_by(weight: &[f64], field: &[C64], n: usize) -> Vec<C64> {
    field.iter().enumerate().map(|(i, v)| v * weight[i % n]).collect()
}

/// Node-major d×d blocks times a component-major field.
fn mat_times(mat: &[C64], field: &[C64], n: usize, d: usize) -> Vec<C64> {
    if d == 1 {
        return mat.iter().zip(field).map(|(a, v)| a * v).collect();
    }
    let mut out = zero_field(n * d);
    for i in 0..n {
        let blk = &mat[i * d * d..(i + 1) * d * d];
        for r in 0..d {
            out[r * n + i] = (0..d).map(|c| blk[r * d + c] * field[c * n + i]).sum();
        }
    }
    out
}

fn add_into(acc: &mut [C64], v: &[C64]) {
    acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
}

/// Max over nodes of the Euclidean norm of the d-vector.
fn field_sup(field: &[C64], n: usize, d: usize) -> f64 {
    (0..n)
        .map(|i| (0..d).map(|c| field[c * n + i].norm_sqr()).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

fn node_major(field: &[C64], n: usize, d: usize) -> Vec<C64> {
    let mut out = zero_field(n * d);
    for c in 0..d {
        for i in 0..n {
            out[i * d + c] = field[c * n + i];
        }
    }
    out
}

/// ‖f‖_{C^α est} of a field on its collocation nodes.
fn field_c_alpha(field: &[C64], n: usize, d: usize, alpha: f64) -> f64 {
    c_alpha_from_samples(&node_major(field, n, d), d, 1, alpha)
}

/// max_j ‖f_j‖_{C^α est}: the ℓ^∞ tuple norm.
fn tuple_norm(tuple: &[Vec<C64>], n: usize, d: usize, alpha: f64) -> f64 {
    tuple.iter().map(|f| field_c_alpha(f, n, d, alpha)).fold(0.0, f64::max)
}

/// Collocation data of 𝓐_p on a fixed partition and bandwidth.
pub struct Localization {
    partition: PartitionData,
    m: u32,
    dim: usize,
    bandwidth: usize,
    alpha: f64,
    spectral: Spectral,
    /// b at the nodes, node-major d×d blocks.
    b: Vec<C64>,
    weights: Vec<Vec<f64>>,
    frozen: Vec<DMatrix<C64>>,
    /// b_j at the nodes, node-major d×d blocks.
    perturbations: Vec<Vec<C64>>,
    eta: f64,
}

impl Localization {
    pub fn new(part: &PartitionData, a_p: &OperatorSpec, k: usize, alpha: f64) -> Result<Self> {
        if !a_p.is_principal_only() {
            return Err(Error::InvalidArgument("localization needs a principal-only operator".into()));
        }
        let d = a_p.dim;
        let n = 2 * k + 1;
        let b = synthesize(a_p.leading(), n).values().to_vec();
        let weights = part.sample_all(n);
        let frozen = part.centers.iter().map(|&z| a_p.leading().eval_matrix(z)).collect();
        let locals: Vec<LocalizedCoefficient> = part
            .centers
            .par_iter()
            .map(|&z| localized_coefficient(a_p.leading(), TorusPoint::new(z), part.eps, alpha))
            .collect::<Result<_>>()?;
        let eta = locals.iter().map(|l| l.norm_estimate).fold(0.0, f64::max);
        let perturbations = locals.iter().map(|l| l.sample(n)).collect();
        Ok(Localization {
            partition: part.clone(),
            m: a_p.m,
            dim: d,
            bandwidth: k,
            alpha,
            spectral: Spectral::new(k, d),
            b,
            weights,
            frozen,
            perturbations,
            eta,
        })
    }

    pub fn partition(&self) -> &PartitionData {
        &self.partition
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    /// sup_j ‖b_j‖_{C^α est}.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    fn nodes(&self) -> usize {
        self.spectral.n
    }

    fn to_field(&self, f: &TrigPoly) -> Result<Vec<C64>> {
        if f.rows() != self.dim || f.cols() != 1 {
            return Err(Error::DimensionMismatch(format!("expected a {}x1 field", self.dim)));
        }
        if f.bandwidth() > self.bandwidth {
            return Err(Error::Aliasing { nodes: self.nodes(), bandwidth: f.bandwidth() });
        }
        let g = synthesize(f, self.nodes());
        let mut out = zero_field(self.nodes() * self.dim);
        for i in 0..self.nodes() {
            for c in 0..self.dim {
                out[c * self.nodes() + i] = g.value(i)[c];
            }
        }
        Ok(out)
    }

    fn from_field(&self, field: &[C64]) -> TrigPoly {
        let g = GridFunction::from_values(self.nodes(), self.dim, 1, node_major(field, self.nodes(), self.dim))
            .expect("field length matches the grid");
        analyze(&g, self.bandwidth).expect("collocation grid carries its own bandwidth")
    }

    /// The collocated operator u ↦ b ⊙ D^{2m}u.
    fn apply_principal(&self, field: &[C64]) -> Vec<C64> {
        mat_times(&self.b, &self.spectral.d2m(field, self.m), self.nodes(), self.dim)
    }

    /// Frozen-coefficient symbols at λ; refuses when some λ + k^{2m}b(x_j) is singular.
    pub fn at(&self, lambda: C64) -> Result<LocalizedResolvent<'_>> {
        let (n, d) = (self.nodes(), self.dim);
        let per_center: Vec<(Vec<C64>, Vec<C64>, f64)> = self
            .frozen
            .par_iter()
            .map(|c| {
                let mut r = zero_field(n * d * d);
                let mut s = zero_field(n * d * d);
                let mut kappa: f64 = 0.0;
                for q in 0..n {
                    let w = self.spectral.wave[q].powi(2 * self.m as i32);
                    let sym = DMatrix::from_fn(d, d, |i, j| c[(i, j)] * w + if i == j { lambda } else { C64::new(0.0, 0.0) });
                    let inv = inverse_small(&sym).ok_or(Error::SingularMode { k: self.spectral.wave[q] as i64 })?;
                    let sv = &inv * C64::new(w, 0.0);
                    kappa = kappa.max(spectral_norm(&sv));
                    for i in 0..d {
                        for j in 0..d {
                            r[q * d * d + i * d + j] = inv[(i, j)];
                            s[q * d * d + i * d + j] = sv[(i, j)];
                        }
                    }
                }
                Ok((r, s, kappa))
            })
            .collect::<Result<_>>()?;
        let kappa = per_center.iter().map(|p| p.2).fold(0.0, f64::max);
        if self.eta * kappa >= 1.0 {
            return Err(Error::Divergence { what: "localized perturbation series".into(), estimate: self.eta * kappa });
        }
        let (resolvents, smoothing) = per_center.into_iter().map(|(r, s, _)| (r, s)).unzip();
        Ok(LocalizedResolvent { loc: self, lambda, resolvents, smoothing, kappa })
    }
}

/// Outcome of a Neumann-series inverse.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NeumannReport {
    pub lambda: C64,
    /// Geometric-mean decay rate of the series terms.
    pub contraction_estimate: f64,
    pub terms: usize,
    pub converged: bool,
    /// ‖(λ+𝓐_p)u − f‖₂/‖f‖₂ with the exact operator.
    pub residual: f64,
}

/// λ-dependent pieces: (λ + b(x_j)k^{2m})^{−1} and k^{2m}(λ + b(x_j)k^{2m})^{−1}.
pub struct LocalizedResolvent<'a> {
    loc: &'a Localization,
    lambda: C64,
    resolvents: Vec<Vec<C64>>,
    smoothing: Vec<Vec<C64>>,
    kappa: f64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Left,
    Right,
}

impl LocalizedResolvent<'_> {
    pub fn lambda(&self) -> C64 {
        self.lambda
    }

    /// max_j max_k ‖k^{2m}(λ + b(x_j)k^{2m})^{−1}‖.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// (λ + 𝓐_j)^{−1}g via y = R_j z, z = Σ(−b_j S_j)^n g.
    fn local_solve(&self, j: usize, g: &[C64]) -> Result<Vec<C64>> {
        let (n, d) = (self.loc.nodes(), self.loc.dim);
        let gnorm = field_sup(g, n, d);
        if gnorm == 0.0 {
            return Ok(zero_field(n * d));
        }
        let p = &self.loc.perturbations[j];
        let mut z = g.to_vec();
        let mut t = g.to_vec();
        let mut prev = gnorm;
        for it in 0..LOCAL_MAX_TERMS {
            let st = self.loc.spectral.apply(&t, &self.smoothing[j]);
            t = mat_times(p, &st, n, d);
            t.iter_mut().for_each(|v| *v = -*v);
            add_into(&mut z, &t);
            let tn = field_sup(&t, n, d);
            if tn <= LOCAL_TOL * field_sup(&z, n, d) {
                return Ok(self.loc.spectral.apply(&z, &self.resolvents[j]));
            }
            if it >= 8 && tn >= prev {
                return Err(Error::Divergence { what: "localized perturbation series".into(), estimate: tn / prev });
            }
            prev = tn;
        }
        Err(Error::Divergence { what: "localized perturbation series".into(), estimate: prev / gnorm })
    }

    /// (λ + Λ)^{−1} on a tuple.
    fn lambda_inverse(&self, tuple: &[Vec<C64>]) -> Result<Vec<Vec<C64>>> {
        (0..tuple.len()).into_par_iter().map(|j| self.local_solve(j, &tuple[j])).collect()
    }

    fn retract(&self, tuple: &[Vec<C64>]) -> Vec<C64> {
        let (n, d) = (self.loc.nodes(), self.loc.dim);
        let mut s = zero_field(n * d);
        for (w, y) in self.loc.weights.iter().zip(tuple) {
            add_into(&mut s, &scale_by(w, y, n));
        }
        s
    }

    fn coretract(&self, u: &[C64]) -> Vec<Vec<C64>> {
        let n = self.loc.nodes();
        self.loc.weights.iter().map(|w| scale_by(w, u, n)).collect()
    }

    /// (π_j𝓐_j − 𝓐_jπ_j)s for every j.
    fn left_commutators(&self, s: &[C64]) -> Vec<Vec<C64>> {
        let (n, d, m) = (self.loc.nodes(), self.loc.dim, self.loc.m);
        let ds = self.loc.spectral.d2m(s, m);
        (0..self.loc.partition.n)
            .into_par_iter()
            .map(|j| {
                let w = &self.loc.weights[j];
                let mut diff = scale_by(w, &ds, n);
                let dws = self.loc.spectral.d2m(&scale_by(w, s, n), m);
                diff.iter_mut().zip(&dws).for_each(|(a, b)| *a -= b);
                let mut a_j = self.loc.perturbations[j].clone();
                let c = &self.loc.frozen[j];
                for i in 0..n {
                    for r in 0..d {
                        for q in 0..d {
                            a_j[i * d * d + r * d + q] += c[(r, q)];
                        }
                    }
                }
                mat_times(&a_j, &diff, n, d)
            })
            .collect()
    }

    /// Σ_j [π_j, 𝓐_p] y_j = b ⊙ (Σπ_j D^{2m}y_j − D^{2m}Σπ_j y_j).
    fn right_commutator_sum(&self, ys: &[Vec<C64>]) -> Vec<C64> {
        let (n, d, m) = (self.loc.nodes(), self.loc.dim, self.loc.m);
        let dys: Vec<Vec<C64>> = ys.par_iter().map(|y| self.loc.spectral.d2m(y, m)).collect();
        let mut acc = self.retract(&dys);
        let ds = self.loc.spectral.d2m(&self.retract(ys), m);
        acc.iter_mut().zip(&ds).for_each(|(a, b)| *a -= b);
        mat_times(&self.loc.b, &acc, n, d)
    }

    /// 𝓒(λ)(f_j) = (B_j Σ_k π_k (λ+𝓐_k)^{−1} f_k)_j.
    fn script_c_fields(&self, tuple: &[Vec<C64>]) -> Result<Vec<Vec<C64>>> {
        let ys = self.lambda_inverse(tuple)?;
        Ok(self.left_commutators(&self.retract(&ys)))
    }

    /// R^C 𝓓 (λ+Λ)^{−1}(f_j).
    fn script_rcd_fields(&self, tuple: &[Vec<C64>]) -> Result<Vec<Vec<C64>>> {
        let ys = self.lambda_inverse(tuple)?;
        Ok(self.coretract(&self.right_commutator_sum(&ys)))
    }

    fn tuple_fields(&self, tuple: &[TrigPoly]) -> Result<Vec<Vec<C64>>> {
        if tuple.len() != self.loc.partition.n {
            return Err(Error::DimensionMismatch(format!(
                "tuple has {} entries, partition has {}",
                tuple.len(),
                self.loc.partition.n
            )));
        }
        tuple.iter().map(|f| self.loc.to_field(f)).collect()
    }

    /// 𝓒(λ) applied to a tuple of n fields.
    pub fn script_c(&self, tuple: &[TrigPoly]) -> Result<Vec<TrigPoly>> {
        let out = self.script_c_fields(&self.tuple_fields(tuple)?)?;
        Ok(out.iter().map(|f| self.loc.from_field(f)).collect())
    }

    /// R^C𝓓(λ+Λ)^{−1} applied to a tuple of n fields.
    pub fn script_rcd(&self, tuple: &[TrigPoly]) -> Result<Vec<TrigPoly>> {
        let out = self.script_rcd_fields(&self.tuple_fields(tuple)?)?;
        Ok(out.iter().map(|f| self.loc.from_field(f)).collect())
    }

    /// R^C f as a tuple of TrigPolys.
    pub fn coretraction(&self, f: &TrigPoly) -> Result<Vec<TrigPoly>> {
        let u = self.loc.to_field(f)?;
        Ok(self.coretract(&u).iter().map(|v| self.loc.from_field(v)).collect())
    }

    fn tuple_ratio(&self, f: &TrigPoly, side: Side) -> Result<f64> {
        let (n, d, a) = (self.loc.nodes(), self.loc.dim, self.loc.alpha);
        let input = self.coretract(&self.loc.to_field(f)?);
        let den = tuple_norm(&input, n, d, a);
        if den == 0.0 {
            return Ok(0.0);
        }
        let out = match side {
            Side::Left => self.script_c_fields(&input)?,
            Side::Right => self.script_rcd_fields(&input)?,
        };
        Ok(tuple_norm(&out, n, d, a) / den)
    }

    /// Dictionary estimate of ‖𝓒(λ)‖ on tuples R^C f; stops early once the
    /// running maximum exceeds `stop_above`, making the value a lower bound.
    pub fn script_c_norm(&self, dict: &TestDictionary, stop_above: Option<f64>) -> Result<NormEstimate> {
        dictionary_max(dict, |f| self.tuple_ratio(f, Side::Left), stop_above)
    }

    /// Dictionary estimate of ‖R^C𝓓(λ+Λ)^{−1}‖, same conventions.
    pub fn script_rcd_norm(&self, dict: &TestDictionary, stop_above: Option<f64>) -> Result<NormEstimate> {
        dictionary_max(dict, |f| self.tuple_ratio(f, Side::Right), stop_above)
    }

    fn neumann(&self, f: &TrigPoly, side: Side, a_p: &OperatorSpec) -> Result<(TrigPoly, NeumannReport)> {
        let (n, d) = (self.loc.nodes(), self.loc.dim);
        let fv = self.loc.to_field(f)?;
        let mut total = zero_field(n * d);
        let mut h = self.coretract(&fv);
        let mut norms: Vec<f64> = Vec::new();
        let mut converged = false;
        for _ in 0..NEUMANN_MAX_TERMS {
            let ys = self.lambda_inverse(&h)?;
            let s = self.retract(&ys);
            add_into(&mut total, &s);
            let sn = field_sup(&s, n, d);
            norms.push(sn);
            if sn <= NEUMANN_TOL * field_sup(&total, n, d) {
                converged = true;
                break;
            }
            let rate = growth_rate(&norms);
            if norms.len() >= 10 && rate >= 1.0 {
                return Err(Error::Divergence { what: "localization Neumann series".into(), estimate: rate });
            }
            h = match side {
                Side::Left => {
                    let mut c = self.left_commutators(&s);
                    c.iter_mut().for_each(|f| f.iter_mut().for_each(|v| *v = -*v));
                    c
                }
                Side::Right => self.coretract(&self.right_commutator_sum(&ys)),
            };
        }
        let rate = growth_rate(&norms);
        if !converged && rate >= 1.0 {
            return Err(Error::Divergence { what: "localization Neumann series".into(), estimate: rate });
        }
        let u = self.loc.from_field(&total);
        let back = apply_operator(a_p, &u)?.axpy(self.lambda, &u)?;
        let residual = back.rel_l2_distance(f);
        Ok((u, NeumannReport { lambda: self.lambda, contraction_estimate: rate, terms: norms.len(), converged, residual }))
    }

    /// L(λ)f = R(λ+Λ)^{−1}(id + 𝓒(λ))^{−1}R^C f.
    ///
    /// `a_p` must be the operator the localization was built from; it is
    /// only used to measure the residual.
    pub fn left_inverse(&self, a_p: &OperatorSpec, f: &TrigPoly) -> Result<(TrigPoly, NeumannReport)> {
        self.neumann(f, Side::Left, a_p)
    }

    /// R(λ)f = R(λ+Λ)^{−1}(id − R^C𝓓(λ+Λ)^{−1})^{−1}R^C f.
    pub fn right_inverse(&self, a_p: &OperatorSpec, f: &TrigPoly) -> Result<(TrigPoly, NeumannReport)> {
        self.neumann(f, Side::Right, a_p)
    }

    /// Residual of the collocated equation, ‖(λ + b⊙D^{2m})u − f‖_∞/‖f‖_∞ at the nodes.
    pub fn collocation_residual(&self, u: &TrigPoly, f: &TrigPoly) -> Result<f64> {
        let (n, d) = (self.loc.nodes(), self.loc.dim);
        let uv = self.loc.to_field(u)?;
        let fv = self.loc.to_field(f)?;
        let mut r = self.loc.apply_principal(&uv);
        r.iter_mut().zip(uv.iter().zip(&fv)).for_each(|(v, (x, y))| *v += self.lambda * x - y);
        let fnorm = field_sup(&fv, n, d);
        Ok(if fnorm == 0.0 { field_sup(&r, n, d) } else { field_sup(&r, n, d) / fnorm })
    }
}

/// Geometric mean of successive term ratios after the first term.
fn growth_rate(norms: &[f64]) -> f64 {
    match norms.len() {
        0 | 1 => 0.0,
        2 => norms[1] / norms[0],
        len => {
            if norms[1] == 0.0 {
                return 0.0;
            }
            (norms[len - 1] / norms[1]).powf(1.0 / (len - 2) as f64)
        }
    }
}

/// Convenience: build the localization and apply L(λ).
pub fn left_inverse(part: &PartitionData, a_p: &OperatorSpec, lambda: C64, k: usize, alpha: f64, f: &TrigPoly) -> Result<(TrigPoly, NeumannReport)> {
    Localization::new(part, a_p, k, alpha)?.at(lambda)?.left_inverse(a_p, f)
}

/// Convenience: build the localization and apply R(λ).
pub fn right_inverse(part: &PartitionData, a_p: &OperatorSpec, lambda: C64, k: usize, alpha: f64, f: &TrigPoly) -> Result<(TrigPoly, NeumannReport)> {
    Localization::new(part, a_p, k, alpha)?.at(lambda)?.right_inverse(a_p, f)
}

/// One rung of a threshold ladder.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LadderRung {
    pub omega: f64,
    pub estimate: f64,
    /// False when the dictionary scan stopped early; the estimate is then a lower bound.
    pub complete: bool,
}

/// ω₁ (for 𝓒) and ω₂ (for R^C𝓓) on a ray, with the rungs visited.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Thresholds {
    pub direction: C64,
    pub omega1: f64,
    pub omega2: f64,
    pub c_norm: f64,
    pub rcd_norm: f64,
    pub eta: f64,
    pub kappa: f64,
    pub c_ladder: Vec<LadderRung>,
    pub rcd_ladder: Vec<LadderRung>,
}

fn climb(
    loc: &Localization,
    dir: C64,
    dict: &TestDictionary,
    side: Side,
) -> Result<(f64, f64, Vec<LadderRung>)> {
    let mut rungs: Vec<LadderRung> = Vec::new();
    let estimate = |i: u32, full: bool| -> Result<LadderRung> {
        let omega = 2f64.powi(i as i32);
        let r = loc.at(dir * omega)?;
        let stop = if full { None } else { Some(CONTRACTION_TARGET) };
        let e = match side {
            Side::Left => r.script_c_norm(dict, stop)?,
            Side::Right => r.script_rcd_norm(dict, stop)?,
        };
        Ok(LadderRung { omega, estimate: e.value, complete: e.complete })
    };
    let mut full: std::collections::BTreeMap<u32, LadderRung> = Default::default();
    let mut last = f64::NAN;
    for i in 0..LADDER_RUNGS {
        let rung = match full.get(&i) {
            Some(r) => r.clone(),
            None => estimate(i, false)?,
        };
        last = rung.estimate;
        let below = rung.complete && rung.estimate <= CONTRACTION_TARGET;
        rungs.push(rung.clone());
        if !below {
            continue;
        }
        full.insert(i, rung.clone());
        let mut prev = rung.estimate;
        let mut monotone = true;
        for step in 1..=2 {
            let next = match full.get(&(i + step)) {
                Some(r) => r.clone(),
                None => {
                    let r = estimate(i + step, true)?;
                    full.insert(i + step, r.clone());
                    r
                }
            };
            if next.estimate > prev {
                monotone = false;
                break;
            }
            prev = next.estimate;
        }
        if monotone {
            for step in 1..=2 {
                rungs.push(full[&(i + step)].clone());
            }
            return Ok((rung.omega, rung.estimate, rungs));
        }
    }
    Err(Error::LadderExhausted { lambda: 2f64.powi(LADDER_RUNGS as i32 - 1), estimate: last })
}

/// Smallest rungs ω = 2^i on the ray λ = ω·dir where the 𝓒 and R^C𝓓 norm
/// estimates are ≤ 1/2 and stay nonincreasing at the next two rungs.
pub fn find_thresholds(
    part: &PartitionData,
    a_p: &OperatorSpec,
    direction: C64,
    k: usize,
    alpha: f64,
    dict: &TestDictionary,
) -> Result<Thresholds> {
    if !(direction.norm() > 0.0) || direction.re <= 0.0 {
        return Err(Error::InvalidArgument("ray direction must have positive real part".into()));
    }
    let dir = direction / direction.norm();
    let loc = Localization::new(part, a_p, k, alpha)?;
    let kappa = loc.at(dir)?.kappa();
    let (omega1, c_norm, c_ladder) = climb(&loc, dir, dict, Side::Left)?;
    let (omega2, rcd_norm, rcd_ladder) = climb(&loc, dir, dict, Side::Right)?;
    Ok(Thresholds { direction: dir, omega1, omega2, c_norm, rcd_norm, eta: loc.eta(), kappa, c_ladder, rcd_ladder })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::two_plus_cos;
    use crate::resolvent::{constant_resolvent, galerkin_resolvent};
    use crate::spaces::sup_norm;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn variable() -> OperatorSpec {
        OperatorSpec::principal(1, two_plus_cos(), "(2+cos x) D^2").unwrap()
    }

    #[test]
    fn retraction_examples() {
        assert_eq!(retraction(0.25, 0.5), 0.25);
        assert_eq!(retraction(0.25, -0.1), -0.1);
        let r = retraction_at(TorusPoint::new(PI), 0.25, TorusPoint::new(PI - 0.5));
        assert!((r.value() - (PI - 0.25)).abs() < 1e-14);
    }

    #[test]
    fn cutoff_shape() {
        assert_eq!(cutoff(0.5), 1.0);
        assert_eq!(cutoff(-0.2), 1.0);
        assert_eq!(cutoff(CUTOFF_OUTER), 0.0);
        assert_eq!(cutoff(0.95), 0.0);
        let h = 1e-6;
        let slope = (0..2000)
            .map(|i| 0.5 + 0.375 * i as f64 / 2000.0)
            .map(|t| ((cutoff(t + h) - cutoff(t - h)) / (2.0 * h)).abs())
            .fold(0.0, f64::max);
        assert!(slope <= CUTOFF_SLOPE && slope > 0.99 * CUTOFF_SLOPE);
    }

    #[test]
    fn localized_coefficient_examples() {
        let cosine = TrigPoly::from_scalar_coeffs(1, |k| c(if k == 0 { 0.0 } else { 0.5 }));
        let lc = localized_coefficient(&cosine, TorusPoint::new(0.0), 0.25, 0.5).unwrap();
        let mut v = [c(0.0)];
        lc.eval_into(0.1, &mut v);
        assert!((v[0].re - (0.1f64.cos() - 1.0)).abs() < 1e-14);
        assert!((v[0].re + 0.0049958).abs() < 1e-7);
        lc.eval_into(0.6, &mut v);
        assert!((v[0].re - cutoff(0.6) * (0.25f64.cos() - 1.0)).abs() < 1e-14);
        lc.eval_into(1.0, &mut v);
        assert_eq!(v[0], c(0.0));
        assert!(lc.norm_estimate <= lc.bound);

        let flat = localized_coefficient(&TrigPoly::scalar_constant(c(3.0)), TorusPoint::new(1.0), 0.25, 0.5).unwrap();
        assert_eq!(sup_norm(&flat, 512), 0.0);
    }

    #[test]
    fn localized_smallness_is_monotone_in_eps() {
        let b = two_plus_cos();
        let sups: Vec<f64> = [0.4, 0.2, 0.1, 0.05].iter().map(|&e| sup_localized_norm(&b, e, 0.5).unwrap().0).collect();
        assert!(sups.windows(2).all(|w| w[1] <= w[0]), "{sups:?}");
        assert!(sups[3] < 0.5 * sups[0]);
    }

    #[test]
    fn partition_examples() {
        let part = build_partition(0.5).unwrap();
        assert_eq!(part.n, 13);
        assert_eq!(part.pi(0, 0.0), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x = rng.gen_range(-PI..PI);
            let s: f64 = (0..part.n).map(|j| part.pi(j, x).powi(2)).sum();
            assert!((s - 1.0).abs() < 1e-10);
        }
        assert!(part.m_bound >= 1.0);
    }

    #[test]
    fn commutator_with_constant_weight_vanishes() {
        let u = TrigPoly::from_scalar_coeffs(5, |k| c(1.0 / (1.0 + k.abs() as f64)));
        let out = commutator(&TrigPoly::scalar_constant(c(1.0)), &variable(), &u).unwrap();
        assert!(out.l2_norm() < 1e-13);
    }

    #[test]
    fn commutator_on_constants_is_second_derivative() {
        let part = build_partition(0.5).unwrap();
        let lap = OperatorSpec::principal(1, TrigPoly::scalar_constant(c(1.0)), "").unwrap();
        let out = commutator_bj(&part, 6, &lap, &TrigPoly::mode(0), 1024).unwrap();
        let h = 1e-4;
        for x in [-0.3, 0.0, 0.2, 0.45, 1.0] {
            let fd = (part.pi(6, x + h) - 2.0 * part.pi(6, x) + part.pi(6, x - h)) / (h * h);
            assert!((out.eval_scalar(x).re - fd).abs() < 1e-5 * (1.0 + fd.abs()), "x={x}");
        }
    }

    #[test]
    fn commutator_loses_one_order() {
        let part = build_partition(0.2).unwrap();
        let ratio = |k: i64| {
            let out = commutator_bj(&part, 3, &variable(), &TrigPoly::mode(k), 128).unwrap();
            crate::trig::sup_norm_on_grid(&out, 4096) / k as f64
        };
        let ratios: Vec<f64> = [16, 32, 64].iter().map(|&k| ratio(k)).collect();
        for w in ratios.windows(2) {
            assert!(w[1] / w[0] < 1.5 && w[1] / w[0] > 0.66, "{ratios:?}");
        }
    }

    #[test]
    fn constant_coefficients_reproduce_the_exact_resolvent() {
        let b = TrigPoly::scalar_constant(c(1.5));
        let a = OperatorSpec::principal(1, b.clone(), "").unwrap();
        let part = build_partition(0.2).unwrap();
        let loc = Localization::new(&part, &a, 64, 0.5).unwrap();
        assert_eq!(loc.eta(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = TrigPoly::random(&mut rng, 16, 1, 1, 1.0);
        let lambda = c(200.0);
        let exact = constant_resolvent(&b.block_matrix(0), 1, lambda, &f).unwrap();
        let r = loc.at(lambda).unwrap();
        let (u, rep) = r.left_inverse(&a, &f).unwrap();
        assert!(rep.converged);
        assert!(u.rel_l2_distance(&exact.with_bandwidth(64)) < 1e-10, "{rep:?}");
        let c_out = r.script_c(&r.coretraction(&f).unwrap()).unwrap();
        assert!(c_out.iter().any(|p| p.l2_norm() > 0.0));
    }

    #[test]
    fn left_and_right_inverses_agree_with_the_oracle() {
        let a = variable();
        let part = build_partition(0.2).unwrap();
        let loc = Localization::new(&part, &a, 64, 0.5).unwrap();
        let lambda = c(1000.0);
        let r = loc.at(lambda).unwrap();
        let f = TrigPoly::mode(1);
        let (ul, rep) = r.left_inverse(&a, &f).unwrap();
        let (ur, _) = r.right_inverse(&a, &f).unwrap();
        let oracle = galerkin_resolvent(&a, lambda, 64, &f).unwrap().u;
        assert!(ul.rel_l2_distance(&oracle) < 1e-8);
        assert!(ul.rel_l2_distance(&ur) < 1e-10);
        assert!(rep.residual < 1e-10);
        assert!(r.collocation_residual(&ul, &f).unwrap() < 1e-10);
    }

    #[test]
    fn working_bandwidth_values() {
        assert_eq!(working_bandwidth(0.2), 128);
        assert_eq!(working_bandwidth(0.1), 128);
        assert_eq!(working_bandwidth(0.05), 256);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn resolution_squares_sum_to_one(eps in 0.05f64..0.5, x in -PI..PI) {
            let part = build_partition(eps).unwrap();
            let s: f64 = (0..part.n).map(|j| part.pi(j, x).powi(2)).sum();
            prop_assert!((s - 1.0).abs() < 1e-10);
            for j in 0..part.n {
                if dt_real(x, part.centers[j]) >= eps {
                    prop_assert_eq!(part.pi(j, x), 0.0);
                }
            }
        }

        #[test]
        fn retraction_is_one_lipschitz(z in -PI..PI, x in -1.0f64..1.0, y in -1.0f64..1.0, eps in 0.01f64..0.5) {
            let (px, py) = (TorusPoint::new(z + x), TorusPoint::new(z + y));
            let zp = TorusPoint::new(z);
            let d = crate::torus::dt(retraction_at(zp, eps, px), retraction_at(zp, eps, py));
            prop_assert!(d <= crate::torus::dt(px, py) + 1e-12);
        }
    }
}
