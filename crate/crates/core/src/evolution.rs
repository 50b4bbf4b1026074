//! The semigroup e^{−t𝓐} on Galerkin truncations, the inhomogeneous Cauchy
//! problem u̇ + 𝓐u = f, u(0) = u₀, weighted-in-time norms and maximal
//! regularity ratios.
//!
//! Each step of a solve is exact for forcing that is quadratic on the step:
//! with g(s) = g₀ + g₁s + g₂s²/2,
//! u(t+h) = e^{−hA}u(t) + hφ₁(−hA)g₀ + h²φ₂(−hA)g₁ + h³φ₃(−hA)g₂,
//! and the φ-functions come from one exponential of a block matrix.

use crate::error::{Error, Result};
use crate::operators::{
    apply_operator, assemble_galerkin, check_normal_ellipticity, check_uniform_ellipticity, coeff_vector,
    from_coeff_vector, EllipticityCertificate, OperatorSpec,
};
use crate::spaces::{holder_norm, HolderIndex};
use crate::trig::{resolving_grid, sup_norm_on_grid, TrigPoly, C64};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Local quadrature error allowed per step, relative to 1 + sup‖f‖.
pub const QUADRATURE_TOL: f64 = 1e-8;
/// Sector half-angle used to certify matrix-valued generators.
pub const SYSTEM_SECTOR: f64 = 0.55 * PI;

/// Scalar time factor of a forcing term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeProfile {
    Constant,
    Exponential { rate: f64 },
    Power { exponent: f64 },
    Cosine { frequency: f64 },
}

impl TimeProfile {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Constant => 1.0,
            TimeProfile::Exponential { rate } => (-rate * t).exp(),
            TimeProfile::Power { exponent } => t.powf(exponent),
            TimeProfile::Cosine { frequency } => (frequency * t).cos(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForcingTerm {
    pub time: TimeProfile,
    pub profile: TrigPoly,
}

/// f(t) = Σ time_j(t)·profile_j.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Forcing {
    pub terms: Vec<ForcingTerm>,
}

impl Forcing {
    pub fn zero() -> Self {
        Forcing { terms: Vec::new() }
    }

    pub fn constant(profile: TrigPoly) -> Self {
        Forcing { terms: vec![ForcingTerm { time: TimeProfile::Constant, profile }] }
    }

    pub fn exponential(rate: f64, profile: TrigPoly) -> Self {
        Forcing { terms: vec![ForcingTerm { time: TimeProfile::Exponential { rate }, profile }] }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.profile.l2_norm() == 0.0)
    }

    fn validate(&self, dim: usize) -> Result<()> {
        for t in &self.terms {
            if t.profile.rows() != dim || t.profile.cols() != 1 {
                return Err(Error::DimensionMismatch(format!("forcing profile must be {dim}x1")));
            }
            if let TimeProfile::Power { exponent } = t.time {
                if !(exponent >= 0.0) {
                    return Err(Error::InvalidArgument("power forcing needs a nonnegative exponent".into()));
                }
            }
        }
        Ok(())
    }

    /// f(t) at bandwidth K.
    pub fn eval(&self, t: f64, k: usize, dim: usize) -> TrigPoly {
        let mut out = TrigPoly::zeros(k, dim, 1);
        for term in &self.terms {
            let p = term.profile.with_bandwidth(k);
            out = out.axpy(C64::new(term.time.eval(t), 0.0), &p).expect("shapes validated");
        }
        out
    }
}

/// Data of u̇ + 𝓐u = f on (0, T], u(0) = u₀, with time weight μ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CauchyProblemSpec {
    pub operator: OperatorSpec,
    #[serde(default)]
    pub forcing: Forcing,
    pub initial: TrigPoly,
    pub horizon: f64,
    #[serde(default = "default_mu")]
    pub mu: f64,
}

fn default_mu() -> f64 {
    1.0
}

fn check_mu(mu: f64) -> Result<()> {
    if mu > 0.0 && mu <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("mu must lie in (0,1], got {mu}")))
    }
}

impl CauchyProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {}", self.horizon)));
        }
        check_mu(self.mu)?;
        if self.initial.rows() != self.operator.dim || self.initial.cols() != 1 {
            return Err(Error::DimensionMismatch(format!("initial value must be {}x1", self.operator.dim)));
        }
        self.forcing.validate(self.operator.dim)
    }
}

/// States and time derivatives on a strictly increasing grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<TrigPoly>,
    pub derivatives: Vec<TrigPoly>,
    pub mu: f64,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<TrigPoly>, derivatives: Vec<TrigPoly>, mu: f64) -> Result<Self> {
        check_mu(mu)?;
        if times.is_empty() || times.len() != states.len() || times.len() != derivatives.len() {
            return Err(Error::DimensionMismatch("times, states and derivatives must have equal nonzero length".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times[0] < 0.0 {
            return Err(Error::InvalidArgument("time grid must be nonnegative and strictly increasing".into()));
        }
        let k = states[0].bandwidth();
        if states.iter().chain(&derivatives).any(|s| s.bandwidth() != k) {
            return Err(Error::DimensionMismatch("state and derivative bandwidths must agree".into()));
        }
        Ok(Trajectory { times, states, derivatives, mu })
    }

    /// Indices entering weighted norms: every time for μ = 1, t > 0 otherwise.
    fn weighted_indices(&self) -> impl Iterator<Item = usize> + '_ {
        let skip_origin = self.mu < 1.0;
        (0..self.times.len()).filter(move |&i| !(skip_origin && self.times[i] == 0.0))
    }

    fn weight(&self, t: f64) -> f64 {
        if self.mu == 1.0 {
            1.0
        } else {
            t.powf(1.0 - self.mu)
        }
    }

    /// Header `t` then `re`/`im` columns per mode and component.
    pub fn to_csv(&self) -> String {
        let k = self.states[0].bandwidth() as i64;
        let d = self.states[0].rows();
        let mut s = String::from("t");
        for m in -k..=k {
            for c in 0..d {
                s.push_str(&format!(",re_k{m}_c{c},im_k{m}_c{c}"));
            }
        }
        s.push('\n');
        for (t, u) in self.times.iter().zip(&self.states) {
            s.push_str(&format!("{t:.17e}"));
            for m in -k..=k {
                for c in 0..d {
                    let v = u.get(m, c, 0);
                    s.push_str(&format!(",{:.17e},{:.17e}", v.re, v.im));
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Which spatial norm a weighted norm uses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NormSelector {
    Sup,
    L2,
    Holder { theta: f64 },
}

fn spatial_norm(u: &TrigPoly, sel: NormSelector) -> Result<f64> {
    let grid = resolving_grid(u.bandwidth());
    Ok(match sel {
        NormSelector::Sup => sup_norm_on_grid(u, grid),
        NormSelector::L2 => u.l2_norm(),
        NormSelector::Holder { theta } => holder_norm(u, HolderIndex::new(theta)?, grid),
    })
}

/// sup over the weighted times of t^{1−μ}‖u(t)‖.
pub fn weighted_sup_norm(traj: &Trajectory, sel: NormSelector) -> Result<f64> {
    let mut best: f64 = 0.0;
    for i in traj.weighted_indices() {
        best = best.max(traj.weight(traj.times[i]) * spatial_norm(&traj.states[i], sel)?);
    }
    Ok(best)
}

/// sup t^{1−μ}(‖u̇(t)‖_{C^α est} + ‖u(t)‖_{C^{2m+α} est}).
pub fn e1_norm(traj: &Trajectory, m: u32, alpha: f64) -> Result<f64> {
    let low = NormSelector::Holder { theta: alpha };
    let high = NormSelector::Holder { theta: 2.0 * m as f64 + alpha };
    let idx: Vec<usize> = traj.weighted_indices().collect();
    let vals: Vec<f64> = idx
        .par_iter()
        .map(|&i| {
            Ok(traj.weight(traj.times[i]) * (spatial_norm(&traj.derivatives[i], low)? + spatial_norm(&traj.states[i], high)?))
        })
        .collect::<Result<_>>()?;
    Ok(vals.into_iter().fold(0.0, f64::max))
}

/// (t, t^{1−μ}‖u(t)‖) at the first five grid times with t > 0.
pub fn vanishing_check(traj: &Trajectory, sel: NormSelector) -> Result<Vec<(f64, f64)>> {
    traj.times
        .iter()
        .zip(&traj.states)
        .filter(|(t, _)| **t > 0.0)
        .take(5)
        .map(|(&t, u)| Ok((t, t.powf(1.0 - traj.mu) * spatial_norm(u, sel)?)))
        .collect()
}

/// Ellipticity certificate backing generation: uniform for scalar
/// operators, normal on Σ_θ with θ = 0.55π for systems.
pub fn generation_certificate(a: &OperatorSpec) -> Result<EllipticityCertificate> {
    let grid = resolving_grid(a.coefficient_bandwidth().max(8));
    if a.dim == 1 {
        check_uniform_ellipticity(a, grid)
    } else {
        check_normal_ellipticity(a, SYSTEM_SECTOR, &[], grid).map(|(c, _)| c)
    }
}

fn galerkin(a: &OperatorSpec, k: usize) -> DMatrix<C64> {
    assemble_galerkin(a, k).matrix
}

/// e^{−tA_K}u₀.
pub fn semigroup_apply(a: &OperatorSpec, t: f64, u0: &TrigPoly, k: usize) -> Result<TrigPoly> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("time must be nonnegative, got {t}")));
    }
    if u0.rows() != a.dim || u0.cols() != 1 {
        return Err(Error::DimensionMismatch(format!("initial value must be {}x1", a.dim)));
    }
    generation_certificate(a)?;
    if t == 0.0 {
        return Ok(u0.with_bandwidth(k));
    }
    let e = (galerkin(a, k) * C64::new(-t, 0.0)).exp();
    Ok(from_coeff_vector(&(e * coeff_vector(u0, k)), k, a.dim))
}

/// The geometric grid t_i = T(i/M)².
pub fn time_grid(horizon: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|i| horizon * (i as f64 / steps as f64).powi(2)).collect()
}

struct Step {
    h: f64,
    e: DMatrix<C64>,
    phi: [DMatrix<C64>; 3],
}

/// Precomputed step matrices for one operator, bandwidth and time grid.
pub struct Propagator {
    operator: OperatorSpec,
    bandwidth: usize,
    galerkin: DMatrix<C64>,
    times: Vec<f64>,
    steps: Vec<Step>,
}

impl Propagator {
    pub fn new(a: &OperatorSpec, k: usize, horizon: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidArgument("need at least one time step".into()));
        }
        if !(horizon > 0.0) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        generation_certificate(a)?;
        let g = galerkin(a, k);
        let n = g.nrows();
        let times = time_grid(horizon, steps);
        let steps = times
            .windows(2)
            .collect::<Vec<_>>()
            .par_iter()
            .map(|w| {
                let h = w[1] - w[0];
                let mut big = DMatrix::<C64>::zeros(4 * n, 4 * n);
                big.view_mut((0, 0), (n, n)).copy_from(&(&g * C64::new(-h, 0.0)));
                for b in 0..3 {
                    for i in 0..n {
                        big[(b * n + i, (b + 1) * n + i)] = C64::new(1.0, 0.0);
                    }
                }
                let x = big.exp();
                let block = |b: usize| x.view((0, b * n), (n, n)).into_owned();
                Step { h, e: block(0), phi: [block(1), block(2), block(3)] }
            })
            .collect();
        Ok(Propagator { operator: a.clone(), bandwidth: k, galerkin: g, times, steps })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Runs the mild-solution recursion and fills u̇ = f − A_K u.
    pub fn propagate(&self, forcing: &Forcing, u0: &TrigPoly, mu: f64) -> Result<Trajectory> {
        let (k, d) = (self.bandwidth, self.operator.dim);
        forcing.validate(d)?;
        if u0.rows() != d || u0.cols() != 1 {
            return Err(Error::DimensionMismatch(format!("initial value must be {d}x1")));
        }
        let r = |x: f64| C64::new(x, 0.0);
        let fv = |t: f64| coeff_vector(&forcing.eval(t, k, d), k);
        let zero = forcing.is_zero();
        let mut u = coeff_vector(u0, k);
        let mut states = vec![from_coeff_vector(&u, k, d)];
        let mut f_nodes = vec![fv(0.0)];
        for (i, step) in self.steps.iter().enumerate() {
            let t = self.times[i];
            let h = step.h;
            let mut next = &step.e * &u;
            let fb = fv(t + h);
            if !zero {
                let fa = f_nodes[i].clone();
                let fm = fv(t + 0.5 * h);
                let g1 = (&fa * r(-3.0) + &fm * r(4.0) - &fb) * r(1.0 / h);
                let g2 = (&fa - &fm * r(2.0) + &fb) * r(4.0 / (h * h));
                let interp = |s: f64| &fa + &g1 * r(s) + &g2 * r(0.5 * s * s);
                let err = [0.25, 0.75]
                    .iter()
                    .map(|q| (fv(t + q * h) - interp(q * h)).norm())
                    .fold(0.0, f64::max);
                let scale = 1.0 + fa.norm().max(fm.norm()).max(fb.norm());
                if h * err > QUADRATURE_TOL * scale {
                    return Err(Error::Quadrature { interval: i, error: h * err });
                }
                next += &step.phi[0] * (&fa * r(h)) + &step.phi[1] * (&g1 * r(h * h)) + &step.phi[2] * (&g2 * r(h * h * h));
            }
            u = next;
            states.push(from_coeff_vector(&u, k, d));
            f_nodes.push(fb);
        }
        let derivatives = states
            .iter()
            .zip(&f_nodes)
            .map(|(s, f)| {
                let au: DVector<C64> = &self.galerkin * coeff_vector(s, k);
                from_coeff_vector(&(f - au), k, d)
            })
            .collect();
        Trajectory::new(self.times.clone(), states, derivatives, mu)
    }
}

/// Solves the Cauchy problem at bandwidth K on the M-step geometric grid.
pub fn solve_cauchy(spec: &CauchyProblemSpec, k: usize, steps: usize) -> Result<Trajectory> {
    spec.validate()?;
    Propagator::new(&spec.operator, k, spec.horizon, steps)?.propagate(&spec.forcing, &spec.initial, spec.mu)
}

/// max over interior nodes of ‖u̇ + 𝓐u − f‖₂/(1 + ‖f‖₂) with the exact 𝓐.
pub fn equation_residual(traj: &Trajectory, a: &OperatorSpec, forcing: &Forcing) -> Result<f64> {
    let k = traj.states[0].bandwidth();
    let mut worst: f64 = 0.0;
    for i in 1..traj.times.len().saturating_sub(1) {
        let f = forcing.eval(traj.times[i], k, a.dim);
        let r = apply_operator(a, &traj.states[i])?.axpy(C64::new(1.0, 0.0), &traj.derivatives[i])?;
        let r = r.axpy(C64::new(-1.0, 0.0), &f)?;
        worst = worst.max(r.l2_norm() / (1.0 + f.l2_norm()));
    }
    Ok(worst)
}

/// One (f, u₀) pair for the maximal regularity sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxRegSample {
    pub forcing: Forcing,
    pub initial: TrigPoly,
}

/// Seeded smooth samples: f(t) = e^{−rt}p(x) + q(x), u₀ random, all of bandwidth K_data.
pub fn maxreg_samples(count: usize, k_data: usize, dim: usize, seed: u64) -> Vec<MaxRegSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let rate = rng.gen_range(0.0..2.0);
            let p = TrigPoly::random(&mut rng, k_data, dim, 1, 2.0);
            let q = TrigPoly::random(&mut rng, k_data, dim, 1, 2.0);
            let initial = TrigPoly::random(&mut rng, k_data, dim, 1, 3.0);
            let forcing = Forcing {
                terms: vec![
                    ForcingTerm { time: TimeProfile::Exponential { rate }, profile: p },
                    ForcingTerm { time: TimeProfile::Constant, profile: q },
                ],
            };
            MaxRegSample { forcing, initial }
        })
        .collect()
}

/// Per-sample isomorphism ratios for one (μ, T).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MaxRegStats {
    pub mu: f64,
    pub horizon: f64,
    pub trace_index: f64,
    /// ‖u‖_{𝔼₁}/(‖f‖_{𝔼₀} + ‖u₀‖_{h^{2mμ+α}}).
    pub forward: Vec<f64>,
    /// The reciprocal direction.
    pub reverse: Vec<f64>,
    pub skipped: usize,
    pub max_forward: f64,
    pub max_reverse: f64,
}

/// Solves every sample and reports both directions of the norm equivalence.
pub fn maxreg_ratio(
    a: &OperatorSpec,
    samples: &[MaxRegSample],
    mu: f64,
    horizon: f64,
    k: usize,
    steps: usize,
    alpha: f64,
) -> Result<MaxRegStats> {
    check_mu(mu)?;
    let trace_index = 2.0 * a.m as f64 * mu + alpha;
    if (trace_index - trace_index.round()).abs() < 1e-12 {
        return Err(Error::IntegerTraceIndex { index: trace_index });
    }
    HolderIndex::new(alpha)?;
    let prop = Propagator::new(a, k, horizon, steps)?;
    let (mut forward, mut reverse, mut skipped) = (Vec::new(), Vec::new(), 0);
    for s in samples {
        if s.forcing.is_zero() && s.initial.l2_norm() == 0.0 {
            skipped += 1;
            continue;
        }
        let traj = prop.propagate(&s.forcing, &s.initial, mu)?;
        let num = e1_norm(&traj, a.m, alpha)?;
        let f_traj = Trajectory::new(
            traj.times.clone(),
            traj.times.iter().map(|&t| s.forcing.eval(t, k, a.dim)).collect(),
            traj.derivatives.clone(),
            mu,
        )?;
        let data = weighted_sup_norm(&f_traj, NormSelector::Holder { theta: alpha })?
            + holder_norm(&s.initial.with_bandwidth(k), HolderIndex::new(trace_index)?, resolving_grid(k));
        forward.push(num / data);
        reverse.push(data / num);
    }
    let max_forward = forward.iter().cloned().fold(0.0, f64::max);
    let max_reverse = reverse.iter().cloned().fold(0.0, f64::max);
    Ok(MaxRegStats { mu, horizon, trace_index, forward, reverse, skipped, max_forward, max_reverse })
}
