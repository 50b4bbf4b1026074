//! Spectral toolkit for 2m-th order elliptic operators on the one-dimensional
//! torus: function-space estimators, Fourier multipliers, resolvents built by
//! partition-of-unity localization, and semigroup evolution.

pub mod error;
pub mod evolution;
pub mod linalg;
pub mod multiplier;
pub mod operators;
pub mod resolvent;
pub mod spaces;
pub mod torus;
pub mod trig;

pub use error::{Error, Result};
pub use torus::{dt, translate, TorusPoint};
pub use trig::{analyze, synthesize, GridFunction, TrigPoly, C64};
