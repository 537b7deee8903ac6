//! Scalar abstraction: every module in this crate is generic over the real
//! floating-point type, with `f64` as the default used by the CLI.

use num_complex::Complex;

/// Real scalar the simulation is generic over.
///
/// `nalgebra::RealField` supplies the transcendental functions and enables
/// complex linear algebra over `Complex<T>`; the `num_traits` bounds cover
/// conversions from literals and to `f64` for output.
pub trait Real:
    nalgebra::RealField + num_traits::FromPrimitive + num_traits::NumCast + Copy + Default
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex number over the generic scalar.
pub type C<T> = Complex<T>;

/// Converts an `f64` literal into the generic scalar.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 is representable in the scalar type")
}

/// Converts the generic scalar to `f64` (used by writers and diagnostics).
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    num_traits::NumCast::from(x).expect("scalar is representable as f64")
}

#[inline]
pub fn c<T: Real>(re: T, im: T) -> C<T> {
    Complex::new(re, im)
}

/// i² = -1.
#[inline]
pub fn i<T: Real>() -> C<T> {
    Complex::new(T::zero(), T::one())
}
