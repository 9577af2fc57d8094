//! Scalar abstractions shared by the scoring formulas.
//!
//! Every score in the toolkit is a ratio of counts or an average of
//! log-probability differences, so the formulas are written against
//! [`Scalar`], which `f32`, `f64`, and the exact [`Rational`] type all
//! satisfy. BLEU and cosine similarity need `exp`, `ln`, and `sqrt` and so
//! require the stronger [`RealScalar`].

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// Exact rational numbers, used where a formula must hit its boundary
/// values without rounding.
pub type Rational = num_rational::Ratio<i64>;

/// A number the scoring formulas can be evaluated in.
pub trait Scalar:
    Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static
{
    /// Converts a count. Panics only if the scalar cannot represent `n`,
    /// which no supported type hits for realistic token counts.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    /// Converts a constant such as a configuration default.
    fn from_real(x: f64) -> Self {
        Self::from_f64(x).expect("finite constant representable in scalar type")
    }

    fn to_real(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static
{
}

/// A floating-point [`Scalar`].
pub trait RealScalar: Scalar + Float {}

impl<T: Scalar + Float> RealScalar for T {}

/// `min` for partially ordered scalars; returns `a` when the two compare
/// equal or are unordered.
pub fn min<T: Scalar>(a: T, b: T) -> T {
    if b < a {
        b
    } else {
        a
    }
}

pub fn max<T: Scalar>(a: T, b: T) -> T {
    if b > a {
        b
    } else {
        a
    }
}

/// Sum in slice order. Callers that need order independence sort first.
pub fn sum<T: Scalar>(values: &[T]) -> T {
    values.iter().fold(T::zero(), |acc, &v| acc + v)
}

/// Arithmetic mean, `None` for an empty slice.
pub fn mean<T: Scalar>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        None
    } else {
        Some(sum(values) / T::from_count(values.len()))
    }
}

/// Mean summed in ascending order, so permuting the input does not change
/// the floating-point result.
pub fn sorted_mean<T: Scalar>(values: &[T]) -> Option<T> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    mean(&sorted)
}

/// Standard error of the mean (sample standard deviation over `sqrt(n)`).
/// Zero for fewer than two values.
pub fn standard_error(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}
