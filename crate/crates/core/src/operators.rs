//! The differential operator 𝓐(·,D) = Σ_{r≤2m} b_r(·) D^r with scalar or
//! matrix coefficients, its principal symbol, ellipticity certificates and
//! the Galerkin (finite-section) matrix in the e_k basis.

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, inverse_small, spectral_norm};
use crate::torus::{grid_nodes, TorusPoint};
use crate::trig::{synthesize, TrigPoly, C64};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Order 2m plus coefficient fields b_0..b_{2m}, each a d×d TrigPoly.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OperatorSpec {
    pub m: u32,
    pub dim: usize,
    pub coeffs: Vec<TrigPoly>,
    #[serde(default)]
    pub name: String,
}

#[derive(Deserialize)]
struct OperatorSpecJson {
    m: u32,
    dim: usize,
    coeffs: Vec<TrigPoly>,
    #[serde(default)]
    name: String,
}

impl<'de> Deserialize<'de> for OperatorSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = OperatorSpecJson::deserialize(d)?;
        OperatorSpec::new(j.m, j.dim, j.coeffs, &j.name).map_err(serde::de::Error::custom)
    }
}

impl OperatorSpec {
    pub fn new(m: u32, dim: usize, coeffs: Vec<TrigPoly>, name: &str) -> Result<Self> {
        if m == 0 || dim == 0 {
            return Err(Error::InvalidArgument("m and dim must be positive".into()));
        }
        if coeffs.len() != 2 * m as usize + 1 {
            return Err(Error::InvalidArgument(format!(
                "order 2m = {} needs {} coefficients, got {}",
                2 * m,
                2 * m + 1,
                coeffs.len()
            )));
        }
        if let Some(c) = coeffs.iter().find(|c| c.rows() != dim || c.cols() != dim) {
            return Err(Error::DimensionMismatch(format!(
                "coefficient block {}x{} does not match dim {dim}",
                c.rows(),
                c.cols()
            )));
        }
        Ok(OperatorSpec { m, dim, coeffs, name: name.to_string() })
    }

    /// The principal-only operator b(x) D^{2m}.
    pub fn principal(m: u32, b: TrigPoly, name: &str) -> Result<Self> {
        let dim = b.rows();
        let mut coeffs = vec![TrigPoly::zeros(0, dim, dim); 2 * m as usize];
        coeffs.push(b);
        Self::new(m, dim, coeffs, name)
    }

    pub fn order(&self) -> u32 {
        2 * self.m
    }

    pub fn leading(&self) -> &TrigPoly {
        &self.coeffs[2 * self.m as usize]
    }

    /// Largest coefficient bandwidth.
    pub fn coefficient_bandwidth(&self) -> usize {
        self.coeffs.iter().map(|c| c.bandwidth()).max().unwrap_or(0)
    }

    /// True when all lower-order coefficients vanish.
    pub fn is_principal_only(&self) -> bool {
        self.coeffs[..2 * self.m as usize].iter().all(|c| c.l2_norm() == 0.0)
    }

    /// The principal part b_{2m} D^{2m}.
    pub fn principal_part(&self) -> OperatorSpec {
        OperatorSpec::principal(self.m, self.leading().clone(), &format!("{} (principal)", self.name))
            .expect("shapes already validated")
    }

    /// The lower-order remainder Σ_{r<2m} b_r D^r, returned with a zero leading coefficient.
    pub fn lower_order_part(&self) -> OperatorSpec {
        let mut coeffs = self.coeffs.clone();
        coeffs[2 * self.m as usize] = TrigPoly::zeros(0, self.dim, self.dim);
        OperatorSpec { m: self.m, dim: self.dim, coeffs, name: format!("{} (lower order)", self.name) }
    }

    /// True when every coefficient is constant in x.
    pub fn is_constant(&self) -> bool {
        self.coeffs.iter().all(|c| c.modes().filter(|&k| k != 0).all(|k| c.coeff(k).unwrap().iter().all(|v| v.norm() == 0.0)))
    }
}

/// 𝓐u = Σ_r b_r · D^r u, exact as a coefficient convolution.
pub fn apply_operator(a: &OperatorSpec, u: &TrigPoly) -> Result<TrigPoly> {
    if u.rows() != a.dim {
        return Err(Error::DimensionMismatch(format!(
            "operator acts on {}-vectors, got {} rows",
            a.dim,
            u.rows()
        )));
    }
    let mut out = TrigPoly::zeros(u.bandwidth() + a.coefficient_bandwidth(), u.rows(), u.cols());
    for (r, b) in a.coeffs.iter().enumerate() {
        if b.l2_norm() == 0.0 {
            continue;
        }
        let term = b.mul_poly(&u.apply_d(r as u32))?;
        out = out.axpy(C64::new(1.0, 0.0), &term)?;
    }
    Ok(out)
}

/// σ𝓐(x, ξ) = b_{2m}(x) ξ^{2m}.
pub fn principal_symbol(a: &OperatorSpec, x: TorusPoint, xi: f64) -> DMatrix<C64> {
    a.leading().eval_matrix(x.value()) * C64::new(xi.powi(2 * a.m as i32), 0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CertificateKind {
    Uniform,
    Normal,
}

/// Eigenvalue enclosure σ(σ𝓐) ⊂ {Re z ≥ r} ∩ {|z| ≤ R}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralBounds {
    pub r: f64,
    #[serde(rename = "R")]
    pub big_r: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticityCertificate {
    pub kind: CertificateKind,
    pub c1: f64,
    pub c2: f64,
    pub theta: Option<f64>,
    pub grid: usize,
    /// Grid point realizing c1.
    pub witness_x: f64,
    /// λ realizing c1 (normal certificates only), as (re, im).
    pub witness_lambda: Option<(f64, f64)>,
    pub spectral: Option<SpectralBounds>,
    pub matrix_norm: String,
}

/// Uniform ellipticity of a scalar operator at the given sign of ξ.
pub fn uniform_ellipticity_at(a: &OperatorSpec, n: usize, xi: f64) -> Result<EllipticityCertificate> {
    if a.dim != 1 {
        return Err(Error::InvalidArgument("uniform ellipticity is defined for scalar operators".into()));
    }
    let scale = xi.powi(2 * a.m as i32);
    let g = synthesize(a.leading(), n);
    let nodes = grid_nodes(n);
    let mut c1 = f64::INFINITY;
    let mut c2: f64 = 0.0;
    let mut wx = 0.0;
    for (i, &x) in nodes.iter().enumerate() {
        let v = g.value(i)[0] * scale;
        if v.re < c1 {
            c1 = v.re;
            wx = x;
        }
        c2 = c2.max(v.norm());
    }
    let wx = TorusPoint::new(wx).value();
    if !(c1 > 0.0) {
        return Err(Error::NotUniformlyElliptic { x: wx, value: c1 });
    }
    Ok(EllipticityCertificate {
        kind: CertificateKind::Uniform,
        c1,
        c2,
        theta: None,
        grid: n,
        witness_x: wx,
        witness_lambda: None,
        spectral: None,
        matrix_norm: "spectral".into(),
    })
}

/// Re b_{2m}(x) ≥ c1 > 0 on the grid, with c2 = max |b_{2m}|.
pub fn check_uniform_ellipticity(a: &OperatorSpec, n: usize) -> Result<EllipticityCertificate> {
    uniform_ellipticity_at(a, n, 1.0)
}

/// Radius ladder {10^p : p = −2..6} used on the sector boundary rays.
pub fn sector_radii() -> Vec<f64> {
    (-2..=6).map(|p| f64::powi(10.0, p)).collect()
}

/// λ samples: 0, plus the radius ladder on arg λ ∈ {−θ, 0, θ}.
pub fn sector_samples(theta: f64) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0)];
    for r in sector_radii() {
        for phi in [-theta, 0.0, theta] {
            out.push(C64::from_polar(r, phi));
        }
    }
    out
}

/// A set of λ samples together with per-sample resolvent diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorProbe {
    pub theta: f64,
    pub omega: f64,
    pub samples: Vec<(f64, f64)>,
    /// Per-sample maximum of the recorded quantity (resolvent norm or weighted norm).
    pub records: Vec<f64>,
}

impl SectorProbe {
    /// Whether λ lies in ω + Σ_θ.
    pub fn admits(theta: f64, omega: f64, lambda: C64) -> bool {
        let z = lambda - omega;
        z.norm() == 0.0 || z.arg().abs() <= theta + 1e-12
    }
}

/// Normal ellipticity on Σ_θ: c1 = max (1+|λ|)‖(λ+σ𝓐(x,ξ))^{−1}‖ over the
/// grid, ξ = ±1 and the sector samples plus `extra`.
///
/// Besides the sampled inverses, every eigenvalue μ of σ𝓐(x,ξ) must satisfy
/// |arg μ| < π − θ, which is exactly the condition that −Σ_θ misses the
/// spectrum.
pub fn check_normal_ellipticity(
    a: &OperatorSpec,
    theta: f64,
    extra: &[C64],
    n: usize,
) -> Result<(EllipticityCertificate, SectorProbe)> {
    if !(theta > PI / 2.0 && theta < PI) {
        return Err(Error::InvalidArgument(format!("theta = {theta} must lie in (pi/2, pi)")));
    }
    let d = a.dim;
    let mut samples = sector_samples(theta);
    samples.extend_from_slice(extra);
    let mut records = vec![0.0f64; samples.len()];
    let g = synthesize(a.leading(), n);
    let nodes = grid_nodes(n);
    let (mut c1, mut c2) = (0.0f64, 0.0f64);
    let mut witness = (nodes[0], samples[0]);
    let (mut r_min, mut r_max) = (f64::INFINITY, 0.0f64);
    let id = DMatrix::<C64>::identity(d, d);
    for (i, &x) in nodes.iter().enumerate() {
        let x = TorusPoint::new(x).value();
        let base = DMatrix::from_row_slice(d, d, g.value(i));
        for xi in [1.0f64, -1.0] {
            let s = &base * C64::new(xi.powi(2 * a.m as i32), 0.0);
            c2 = c2.max(spectral_norm(&s));
            for mu in eigenvalues(&s) {
                r_min = r_min.min(mu.re);
                r_max = r_max.max(mu.norm());
                if mu.norm() == 0.0 || mu.arg().abs() >= PI - theta {
                    return Err(Error::NotNormallyElliptic {
                        x,
                        lambda_re: -mu.re,
                        lambda_im: -mu.im,
                        reason: format!("eigenvalue {mu} of the principal symbol meets -Sigma_theta"),
                    });
                }
            }
            for (j, &lam) in samples.iter().enumerate() {
                let inv = inverse_small(&(&id * lam + &s)).ok_or_else(|| Error::NotNormallyElliptic {
                    x,
                    lambda_re: lam.re,
                    lambda_im: lam.im,
                    reason: "lambda + sigma(x, xi) is singular".into(),
                })?;
                let v = (1.0 + lam.norm()) * spectral_norm(&inv);
                records[j] = records[j].max(v);
                if v > c1 {
                    c1 = v;
                    witness = (x, lam);
                }
            }
        }
    }
    let cert = EllipticityCertificate {
        kind: CertificateKind::Normal,
        c1,
        c2,
        theta: Some(theta),
        grid: n,
        witness_x: witness.0,
        witness_lambda: Some((witness.1.re, witness.1.im)),
        spectral: Some(SpectralBounds { r: r_min, big_r: r_max }),
        matrix_norm: "spectral".into(),
    };
    let probe = SectorProbe {
        theta,
        omega: 0.0,
        samples: samples.iter().map(|z| (z.re, z.im)).collect(),
        records,
    };
    Ok((cert, probe))
}

/// Largest θ ∈ (π/2, π) for which the normal-ellipticity check passes, by
/// bisection; `None` if it fails just above π/2.
pub fn find_normal_sector_angle(a: &OperatorSpec, n: usize) -> Option<f64> {
    let passes = |t: f64| check_normal_ellipticity(a, t, &[], n).is_ok();
    let mut lo = PI / 2.0 + 1e-9;
    if !passes(lo) {
        return None;
    }
    let mut hi = PI - 1e-12;
    if passes(hi) {
        return Some(hi);
    }
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if passes(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

/// The finite section of 𝓐 on modes |k| ≤ K.
#[derive(Clone, Debug, PartialEq)]
pub struct GalerkinMatrix {
    pub matrix: DMatrix<C64>,
    pub bandwidth: usize,
    pub dim: usize,
    /// Set when some coefficient had bandwidth above K and was truncated.
    pub truncated: bool,
}

/// Block (j,k) = Σ_r b̂_r(j−k)·(−k)^r, index (k+K)·d + row.
pub fn assemble_galerkin(a: &OperatorSpec, k: usize) -> GalerkinMatrix {
    let d = a.dim;
    let size = (2 * k + 1) * d;
    let truncated = a.coefficient_bandwidth() > k;
    let coeffs: Vec<TrigPoly> = a.coeffs.iter().map(|c| c.with_bandwidth(k)).collect();
    let mut mat = DMatrix::<C64>::zeros(size, size);
    let kk = k as i64;
    for (r, b) in coeffs.iter().enumerate() {
        if b.l2_norm() == 0.0 {
            continue;
        }
        let kb = b.bandwidth() as i64;
        for col in -kk..=kk {
            let w = ((-col) as f64).powi(r as i32);
            for row in (col - kb).max(-kk)..=(col + kb).min(kk) {
                let blk = b.coeff(row - col).unwrap();
                let (bi, bj) = ((row + kk) as usize * d, (col + kk) as usize * d);
                for p in 0..d {
                    for q in 0..d {
                        mat[(bi + p, bj + q)] += blk[p * d + q] * w;
                    }
                }
            }
        }
    }
    GalerkinMatrix { matrix: mat, bandwidth: k, dim: d, truncated }
}

/// Coefficients of a d×1 (or scalar) polynomial padded to bandwidth K, as a vector.
pub fn coeff_vector(u: &TrigPoly, k: usize) -> DVector<C64> {
    let p = u.with_bandwidth(k);
    DVector::from_column_slice(p.as_slice())
}

/// Inverse of [`coeff_vector`].
pub fn from_coeff_vector(v: &DVector<C64>, k: usize, d: usize) -> TrigPoly {
    TrigPoly::from_raw(k, d, 1, v.iter().copied().collect()).expect("vector length matches (2K+1)d")
}

/// Scalar coefficient (2 + cos x).
pub fn two_plus_cos() -> TrigPoly {
    TrigPoly::from_scalar_coeffs(1, |k| C64::new(if k == 0 { 2.0 } else { 0.5 }, 0.0))
}

/// Scalar coefficient sin x.
pub fn sine() -> TrigPoly {
    TrigPoly::from_scalar_coeffs(1, |k| C64::new(0.0, -0.5 * k as f64))
}
