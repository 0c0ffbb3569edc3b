//! Scalar abstraction shared by every numeric module.
//!
//! All signal-processing and statistical code is written against [`Real`],
//! which is implemented for `f32` and `f64`. Linear algebra goes through
//! nalgebra, so the trait builds on [`nalgebra::RealField`]; conversions
//! to and from `f64` come from num-traits.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    RealField
    + Copy
    + Default
    + FromPrimitive
    + ToPrimitive
    + rustfft::FftNum
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal or parameter into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        // Both implementors accept every f64 (f32 rounds or saturates to inf).
        Self::from_f64(x).expect("f64 is representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite cast")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::lit(n as f64)
    }

    fn neg_infinity() -> Self;

    fn machine_epsilon() -> Self;
}

impl Real for f32 {
    fn neg_infinity() -> Self {
        f32::NEG_INFINITY
    }

    fn machine_epsilon() -> Self {
        f32::EPSILON
    }
}

impl Real for f64 {
    fn neg_infinity() -> Self {
        f64::NEG_INFINITY
    }

    fn machine_epsilon() -> Self {
        f64::EPSILON
    }
}
