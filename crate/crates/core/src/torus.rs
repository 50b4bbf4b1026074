//! The torus as (−π, π] with the endpoints identified.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const TWO_PI: f64 = 2.0 * PI;

/// Canonical representative of a torus point.
///
/// The stored value always lies in (−π, π]; the identified pair {−π, π} is
/// stored as π.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(into = "f64", from = "f64")]
pub struct TorusPoint(f64);

impl TorusPoint {
    pub fn new(x: f64) -> Self {
        TorusPoint(wrap(x))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<f64> for TorusPoint {
    fn from(x: f64) -> Self {
        TorusPoint::new(x)
    }
}

impl From<TorusPoint> for f64 {
    fn from(p: TorusPoint) -> f64 {
        p.0
    }
}

/// Maps any real number to its representative in (−π, π].
pub fn wrap(x: f64) -> f64 {
    if x > -PI && x <= PI {
        return x;
    }
    let v = (x + PI).rem_euclid(TWO_PI) - PI;
    if v <= -PI {
        PI
    } else {
        v
    }
}

/// Torus distance min(|x−y|, 2π−|x−y|).
pub fn dt(x: TorusPoint, y: TorusPoint) -> f64 {
    dt_real(x.0, y.0)
}

/// Torus distance between arbitrary reals, after wrapping their difference.
pub fn dt_real(x: f64, y: f64) -> f64 {
    let d = wrap(x - y).abs();
    d.min(TWO_PI - d)
}

/// T_z(y) = y − z on the torus.
pub fn translate(z: TorusPoint, y: TorusPoint) -> TorusPoint {
    TorusPoint::new(y.0 - z.0)
}

/// Equispaced nodes x_i = −π + 2πi/N, i = 0..N.
pub fn grid_nodes(n: usize) -> Vec<f64> {
    let h = TWO_PI / n as f64;
    (0..n).map(|i| -PI + h * i as f64).collect()
}

/// Torus distance between grid nodes i and i+s on an N-point grid.
pub(crate) fn grid_shift_distance(n: usize, s: usize) -> f64 {
    let s = s.min(n - s);
    TWO_PI * s as f64 / n as f64
}
