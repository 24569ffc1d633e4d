use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rustfft::FftNum;

/// Floating point type the whole library is generic over.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + FftNum + Sum + Default + Display + Debug + Send + Sync + 'static
{
    /// Round-off scale used by tolerance defaults.
    const EPS_SCALE: f64;

    #[inline]
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant representable")
    }

    #[inline]
    fn half() -> Self {
        Self::c(0.5)
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

macro_rules! impl_real {
    ($t:ty, $eps:expr) => {
        impl Real for $t {
            const EPS_SCALE: f64 = $eps;
        }
    };
}

impl_real!(f32, 1e-6);
impl_real!(f64, 1e-15);
