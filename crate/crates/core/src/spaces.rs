//! Estimators for C^k, Hölder, little-Hölder and periodic Besov norms.
//!
//! Every estimator is a maximum over a finite grid and therefore a lower
//! bound of the quantity it names. Values on a fixed grid are deterministic
//! and nondecreasing under grid refinement.

use crate::error::{Error, Result};
use crate::linalg::spectral_norm_2x2;
use crate::torus::{grid_nodes, grid_shift_distance, TWO_PI};
use crate::trig::{block_norm, resolving_grid, synthesize, TrigPoly, C64};
use serde::{Deserialize, Serialize};

/// Something that can be evaluated pointwise on the torus.
pub trait Evaluable {
    fn shape(&self) -> (usize, usize);

    fn eval_into(&self, x: f64, out: &mut [C64]);

    /// Values at the N equispaced nodes, node-major.
    fn sample(&self, n: usize) -> Vec<C64> {
        let (r, c) = self.shape();
        let bl = r * c;
        let mut out = vec![C64::new(0.0, 0.0); n * bl];
        for (i, x) in grid_nodes(n).into_iter().enumerate() {
            self.eval_into(x, &mut out[i * bl..(i + 1) * bl]);
        }
        out
    }
}

impl Evaluable for TrigPoly {
    fn shape(&self) -> (usize, usize) {
        (self.rows(), self.cols())
    }

    fn eval_into(&self, x: f64, out: &mut [C64]) {
        TrigPoly::eval_into(self, x, out)
    }

    fn sample(&self, n: usize) -> Vec<C64> {
        synthesize(self, n).values().to_vec()
    }
}

/// A scalar closure viewed as an [`Evaluable`].
pub struct ScalarFn<F: Fn(f64) -> C64>(pub F);

impl<F: Fn(f64) -> C64> Evaluable for ScalarFn<F> {
    fn shape(&self) -> (usize, usize) {
        (1, 1)
    }

    fn eval_into(&self, x: f64, out: &mut [C64]) {
        out[0] = (self.0)(x);
    }
}

/// Hölder index θ = k + α with k = ⌊θ⌋ and α ∈ (0,1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderIndex {
    theta: f64,
}

impl HolderIndex {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta > 0.0) || !theta.is_finite() || theta.fract() == 0.0 {
            return Err(Error::InvalidArgument(format!(
                "Hölder index must be positive and non-integer, got {theta}"
            )));
        }
        Ok(HolderIndex { theta })
    }

    pub fn theta(self) -> f64 {
        self.theta
    }

    pub fn order(self) -> u32 {
        self.theta.floor() as u32
    }

    pub fn alpha(self) -> f64 {
        self.theta - self.theta.floor()
    }
}

#[inline]
fn diff_norm(a: &[C64], b: &[C64], rows: usize, cols: usize) -> f64 {
    match (rows, cols) {
        (1, 1) => (a[0] - b[0]).norm(),
        (2, 2) => spectral_norm_2x2(a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]),
        _ if rows == 1 || cols == 1 => a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt(),
        _ => {
            let d: Vec<C64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
            block_norm(&d, rows, cols)
        }
    }
}

/// Max over grid pairs of |f(x)−f(y)|/dT(x,y)^α, optionally restricted to
/// pairs with dT < `max_dist`.
///
/// `values` holds N node-major blocks of shape rows×cols. Shifts are
/// scanned in increasing distance and the scan stops once 2·osc/dist^α
/// cannot beat the running maximum, which leaves the result unchanged.
pub fn seminorm_from_samples(
    values: &[C64],
    rows: usize,
    cols: usize,
    alpha: f64,
    max_dist: Option<f64>,
) -> f64 {
    let bl = rows * cols;
    let n = values.len() / bl;
    if n < 2 {
        return 0.0;
    }
    let osc = {
        let first = &values[..bl];
        (0..n).map(|i| diff_norm(&values[i * bl..(i + 1) * bl], first, rows, cols)).fold(0.0, f64::max)
    };
    if osc == 0.0 {
        return 0.0;
    }
    let mut best: f64 = 0.0;
    for s in 1..=n / 2 {
        let dist = grid_shift_distance(n, s);
        if let Some(delta) = max_dist {
            if dist >= delta {
                break;
            }
        }
        let w = dist.powf(-alpha);
        if 2.0 * osc * w <= best {
            break;
        }
        let mut local: f64 = 0.0;
        for i in 0..n {
            let j = (i + s) % n;
            let d = diff_norm(&values[i * bl..(i + 1) * bl], &values[j * bl..(j + 1) * bl], rows, cols);
            local = local.max(d);
        }
        best = best.max(local * w);
    }
    best
}

/// Grid estimate of [f]_α on N nodes.
///
/// Panics unless α ∈ (0,1) and N ≥ 16.
pub fn holder_seminorm(f: &dyn Evaluable, alpha: f64, n: usize) -> f64 {
    assert!(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0,1)");
    assert!(n >= 16, "grid must have at least 16 nodes");
    let (r, c) = f.shape();
    seminorm_from_samples(&f.sample(n), r, c, alpha, None)
}

/// Grid estimate of the sup norm.
pub fn sup_norm(f: &dyn Evaluable, n: usize) -> f64 {
    let (r, c) = f.shape();
    let bl = r * c;
    f.sample(n).chunks(bl).map(|b| block_norm(b, r, c)).fold(0.0, f64::max)
}

/// ‖f‖_{C^θ} estimate: Σ_{j≤k} ‖f^{(j)}‖_∞ + [f^{(k)}]_α.
pub fn holder_norm(f: &TrigPoly, theta: HolderIndex, n: usize) -> f64 {
    let derivs: Vec<TrigPoly> = (0..=theta.order()).map(|j| f.derivative(j)).collect();
    let refs: Vec<&dyn Evaluable> = derivs.iter().map(|d| d as &dyn Evaluable).collect();
    holder_norm_with_derivatives(&refs, theta, n)
}

/// ‖f‖_{C^θ} estimate from f and its first ⌊θ⌋ derivatives.
pub fn holder_norm_with_derivatives(derivs: &[&dyn Evaluable], theta: HolderIndex, n: usize) -> f64 {
    let k = theta.order() as usize;
    assert!(derivs.len() > k, "need {} derivatives, got {}", k + 1, derivs.len());
    let sups: f64 = derivs[..=k].iter().map(|d| sup_norm(*d, n)).sum();
    sups + holder_seminorm(derivs[k], theta.alpha(), n)
}

/// ‖f‖_{C^α} estimate (θ = α < 1) directly from samples.
pub fn c_alpha_from_samples(values: &[C64], rows: usize, cols: usize, alpha: f64) -> f64 {
    let sup = values.chunks(rows * cols).map(|b| block_norm(b, rows, cols)).fold(0.0, f64::max);
    sup + seminorm_from_samples(values, rows, cols, alpha, None)
}

/// Restricted-pair seminorm over grid pairs with 0 < dT < δ.
pub fn little_holder_modulus(f: &dyn Evaluable, alpha: f64, delta: f64, n: usize) -> f64 {
    assert!(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0,1)");
    assert!(delta > 0.0 && delta <= std::f64::consts::PI, "delta must lie in (0, pi]");
    let (r, c) = f.shape();
    seminorm_from_samples(&f.sample(n), r, c, alpha, Some(delta))
}

/// (δ, modulus) pairs on a fixed grid; the little-Hölder certificate.
pub fn decay_profile(f: &dyn Evaluable, alpha: f64, deltas: &[f64], n: usize) -> Vec<(f64, f64)> {
    let (r, c) = f.shape();
    let samples = f.sample(n);
    deltas
        .iter()
        .map(|&d| (d, seminorm_from_samples(&samples, r, c, alpha, Some(d))))
        .collect()
}

/// Seminorm of the periodic extension over real pairs in [−3π, 3π].
///
/// Distances are plain |x−y| without wrapping.
pub fn periodic_extension_seminorm(f: &dyn Evaluable, alpha: f64, n: usize) -> f64 {
    let (r, c) = f.shape();
    let bl = r * c;
    let base = f.sample(n);
    let nodes = grid_nodes(n);
    let mut pts: Vec<(f64, usize)> = Vec::with_capacity(3 * n + 1);
    for shift in [-1.0, 0.0, 1.0] {
        for (i, x) in nodes.iter().enumerate() {
            pts.push((x + shift * TWO_PI, i));
        }
    }
    pts.push((3.0 * std::f64::consts::PI, 0));
    let mut best: f64 = 0.0;
    for a in 0..pts.len() {
        for b in a + 1..pts.len() {
            let dist = (pts[a].0 - pts[b].0).abs();
            if dist == 0.0 || pts[a].1 == pts[b].1 {
                continue;
            }
            let (i, j) = (pts[a].1, pts[b].1);
            let d = diff_norm(&base[i * bl..(i + 1) * bl], &base[j * bl..(j + 1) * bl], r, c);
            best = best.max(d / dist.powf(alpha));
        }
    }
    best
}

/// Quintic smoothstep, C² with S(0)=0, S(1)=1.
#[inline]
pub(crate) fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

/// Concrete dyadic system built from the plateau ρ: φ_0 = ρ and
/// φ_j(x) = ρ(x/2^j) − ρ(x/2^{j−1}), so the partition sum telescopes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicSystem {
    j_max: usize,
}

impl DyadicSystem {
    /// Plateau: 1 on [−1,1], 0 outside (−2,2), monotone in between.
    pub fn plateau(x: f64) -> f64 {
        let a = x.abs();
        if a <= 1.0 {
            1.0
        } else if a >= 2.0 {
            0.0
        } else {
            smoothstep(2.0 - a)
        }
    }

    /// ψ(y) = ρ(y) − ρ(2y), supported in 1/2 ≤ |y| ≤ 2.
    pub fn psi(y: f64) -> f64 {
        Self::plateau(y) - Self::plateau(2.0 * y)
    }

    pub fn j_max(&self) -> usize {
        self.j_max
    }

    pub fn phi(&self, j: usize, x: f64) -> f64 {
        if j == 0 {
            Self::plateau(x)
        } else {
            Self::psi(x / f64::powi(2.0, j as i32))
        }
    }
}

/// A dyadic system whose partition identity holds on all integers |k| ≤ K.
pub fn make_dyadic_system(k_max: usize) -> DyadicSystem {
    assert!(k_max >= 1, "K must be at least 1");
    let mut j = 0;
    while (1usize << j) < k_max {
        j += 1;
    }
    DyadicSystem { j_max: j }
}

/// 2^{sj}‖Σ_k φ_j(k) f̂(k) e_k‖_∞ for j = 0..=J.
pub fn besov_blocks(f: &TrigPoly, s: f64, sys: &DyadicSystem) -> Vec<(usize, f64)> {
    let n = resolving_grid(f.bandwidth());
    (0..=sys.j_max())
        .map(|j| {
            let mut block = f.clone();
            for k in f.modes() {
                let w = sys.phi(j, k as f64);
                block.coeff_mut(k).iter_mut().for_each(|v| *v *= w);
            }
            (j, f64::powf(2.0, s * j as f64) * sup_norm(&block, n))
        })
        .collect()
}

/// B^s_{∞,∞} norm: sup_j 2^{sj}‖j-th dyadic block‖_∞.
pub fn besov_norm(f: &TrigPoly, s: f64, sys: &DyadicSystem) -> f64 {
    besov_blocks(f, s, sys).into_iter().map(|(_, v)| v).fold(0.0, f64::max)
}
