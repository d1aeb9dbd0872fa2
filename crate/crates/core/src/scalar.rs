//! Floating-point abstraction for the FFT and marching engines.

use std::fmt::Debug;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};
use rustfft::FftNum;

/// Real scalar usable by the transform-based engines.
pub trait Real:
    Float + FloatConst + FromPrimitive + NumAssign + FftNum + Default + Debug + Send + Sync + 'static
{
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite")
    }
}

impl Real for f32 {}
impl Real for f64 {}
