//! Scalar abstraction shared by the probability-table and closed-form layers.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type usable for behaviors, functionals and threshold formulas.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Absolute tolerance used for normalization and no-signaling equalities.
    fn prob_tol() -> Self;

    /// Tolerance to which root finders are driven.
    fn root_tol() -> Self;

    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f64 {
    fn prob_tol() -> Self {
        1e-12
    }

    fn root_tol() -> Self {
        1e-13
    }
}

impl Real for f32 {
    fn prob_tol() -> Self {
        1e-5
    }

    fn root_tol() -> Self {
        1e-6
    }
}
