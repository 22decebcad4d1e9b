// SPDX-License-Identifier: Apache-2.0

//! Feature-value scalars.
//!
//! Solvers never look at raw feature values: they work on per-dimension
//! ranks derived from the canonical thresholds. The scalar type only matters
//! when data is loaded, thresholds are computed, and models are evaluated on
//! raw coordinates.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::Num;
use rust_decimal::Decimal;

/// A totally ordered (on finite values) number that admits exact-enough
/// midpoints.
pub trait Scalar: Num + Clone + PartialOrd + Debug {
    /// Midpoint of two values; used for the canonical thresholds.
    fn midpoint(&self, other: &Self) -> Self {
        let two = Self::one() + Self::one();
        (self.clone() + other.clone()) / two
    }

    /// `false` for NaN and infinities.
    fn is_finite(&self) -> bool {
        true
    }
}

impl Scalar for f64 {
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
}

impl Scalar for f32 {
    fn is_finite(&self) -> bool {
        f32::is_finite(*self)
    }
}

impl Scalar for Decimal {}

impl Scalar for Ratio<i64> {}

impl Scalar for BigRational {}

/// Total order on finite scalars.
pub(crate) fn cmp<T: Scalar>(a: &T, b: &T) -> std::cmp::Ordering {
    a.partial_cmp(b).expect("scalars are finite")
}

/// Converts a small integer to a rational, used by the lower-bound formula.
pub(crate) fn big(v: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}
