//! Floating-point abstraction shared by the numeric kernels.
//!
//! Histograms, evidence distributions, fusion and rank statistics are all
//! written against [`Scalar`] so they can run in `f32` or `f64`. The engine
//! itself works in `f64`; see the aliases at the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// floating point: f32 or f64
pub trait Scalar:
    Float
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
    /// Tolerance used when checking that a distribution sums to one.
    fn unit_sum_tolerance() -> Self;

    /// Lossy conversion from `f64`; all call sites pass finite constants.
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 converts to every Scalar")
    }

    /// Conversion from a count.
    fn of_count(count: usize) -> Self {
        Self::from_usize(count).expect("count converts to every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f64 {
    fn unit_sum_tolerance() -> Self {
        1e-9
    }
}

impl Scalar for f32 {
    fn unit_sum_tolerance() -> Self {
        1e-4
    }
}

/// Returns true when `values` sum to one within the scalar's tolerance.
pub fn sums_to_one<T: Scalar>(values: impl IntoIterator<Item = T>) -> bool {
    let total: T = values.into_iter().sum();
    (total - T::one()).abs() <= T::unit_sum_tolerance()
}
