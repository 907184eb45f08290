//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All market, learning and feedback math is written against [`Scalar`] so the
//! same code runs in `f64` (the default used by the experiment harness) and
//! `f32`. Tolerances are expressed in `f64` and widened to a few ulps of the
//! concrete type when that type cannot resolve them.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// floating point: f32 or f64
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    /// Conversion from a count.
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `base` as an absolute tolerance, widened to `64 * EPSILON * scale` when
    /// the type cannot resolve `base` at magnitude `scale`.
    fn tol(base: f64, scale: Self) -> Self {
        let floor = Self::epsilon() * Self::of(64.0) * scale.abs().max(Self::one());
        Self::of(base).max(floor)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
