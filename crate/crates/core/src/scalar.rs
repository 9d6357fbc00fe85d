//! Scalar traits. `Field` covers exact rationals as well as floats; `Real`
//! adds the transcendental functions needed by demand curves and bounds.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, FloatConst, Num, NumCast, ToPrimitive};
use std::fmt::Debug;

pub trait Field: Num + Clone + PartialOrd + Debug {
    fn from_usize(n: usize) -> Self;

    /// Magnitude above which normalized recursions rescale. `None` for
    /// exact types that never overflow.
    fn rescale_threshold() -> Option<Self> {
        None
    }

    fn to_f64_lossy(&self) -> f64;
}

macro_rules! impl_float_field {
    ($t:ty, $big:expr) => {
        impl Field for $t {
            #[inline]
            fn from_usize(n: usize) -> Self {
                n as $t
            }
            #[inline]
            fn rescale_threshold() -> Option<Self> {
                Some($big)
            }
            #[inline]
            fn to_f64_lossy(&self) -> f64 {
                *self as f64
            }
        }
    };
}

impl_float_field!(f32, 1e18);
impl_float_field!(f64, 1e150);

impl Field for BigRational {
    fn from_usize(n: usize) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

pub trait Real: Field + Float + FloatConst + Copy + Send + Sync {
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("literal representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}
