//! Scalar abstraction: all geometry, energies and solvers are generic over
//! the floating point type.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar (f32 or f64) used for positions, energies and
/// linear algebra.
pub trait Real:
    RealField + FromPrimitive + ToPrimitive + Copy + Default + Send + Sync + 'static
{
    /// Shorthand for lossy conversion from an `f64` literal.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant must convert")
    }
}

impl Real for f32 {}
impl Real for f64 {}
