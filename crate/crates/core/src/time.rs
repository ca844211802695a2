//! Scalar abstraction for time values.
//!
//! All times are integer seconds since an arbitrary origin. The model, the
//! decoder and the evolutionary loop are written against [`TimeScalar`] so the
//! same code runs on `i32` (compact) and `i64` (default) clocks.

use std::fmt::{Debug, Display};
use std::hash::Hash;
use std::str::FromStr;

use num_traits::{PrimInt, Signed};

/// Integer clock type. Blanket-implemented for every signed primitive integer.
pub trait TimeScalar:
    PrimInt + Signed + Hash + Debug + Display + FromStr + Default + Send + Sync + 'static
{
    /// Lossy conversion to `f64`, used only for reporting.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Conversion from `i64`, saturating at the type bounds.
    #[inline]
    fn from_i64(v: i64) -> Self {
        Self::from(v).unwrap_or(if v < 0 { Self::min_value() } else { Self::max_value() })
    }

    #[inline]
    fn from_usize(v: usize) -> Self {
        Self::from(v).unwrap_or(Self::max_value())
    }

    #[inline]
    fn sat_add(self, rhs: Self) -> Self {
        self.saturating_add(rhs)
    }

    #[inline]
    fn sat_sub(self, rhs: Self) -> Self {
        self.saturating_sub(rhs)
    }

    #[inline]
    fn sat_mul(self, rhs: Self) -> Self {
        self.checked_mul(&rhs).unwrap_or_else(|| {
            if (self < Self::zero()) ^ (rhs < Self::zero()) {
                Self::min_value()
            } else {
                Self::max_value()
            }
        })
    }
}

impl<T> TimeScalar for T where
    T: PrimInt + Signed + Hash + Debug + Display + FromStr + Default + Send + Sync + 'static
{
}
