//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All solvers are written against [`Real`] so the same code runs in `f64`
//! (the default used by the harness) and `f32`. Random draws are always made
//! in `f64` and then rounded, which makes an `f32` instance the rounded copy
//! of the `f64` instance produced from the same seed.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point type usable by the solvers.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal or intermediate.
    fn of(v: f64) -> Self;

    /// Widening conversion used for reporting and serialization.
    fn as_f64(self) -> f64;
}

impl Real for f64 {
    #[inline(always)]
    fn of(v: f64) -> Self {
        v
    }
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self
    }
}

impl Real for f32 {
    #[inline(always)]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

/// Complex scalar over a [`Real`].
pub type C<T> = Complex<T>;

/// Squared Euclidean norm of a complex vector.
pub fn norm_sqr<T: Real>(v: &[C<T>]) -> T {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Hermitian inner product `a^H b`.
pub fn dotc<T: Real>(a: &[C<T>], b: &[C<T>]) -> C<T> {
    a.iter()
        .zip(b)
        .fold(C::new(T::zero(), T::zero()), |acc, (x, y)| acc + x.conj() * y)
}

pub(crate) fn all_finite<T: Real>(v: &[C<T>]) -> bool {
    v.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// `z / |z|`, or `fallback` when `z == 0`.
#[inline]
pub fn unit_phase<T: Real>(z: C<T>, fallback: C<T>) -> C<T> {
    let r = z.norm();
    if r > T::zero() {
        z / r
    } else {
        fallback
    }
}
