//! Scalar abstraction for the geometry kernels.

use core::fmt::{Debug, Display};

use num_traits::Float;

/// Floating point type the geometry and transport kernels run in.
///
/// Implemented for `f32` and `f64`. Field accumulation and the Mie oracle
/// always use `f64` regardless of this choice.
pub trait Real: Float + Debug + Display + Default + Send + Sync + 'static {
    /// Unit roundoff of the type.
    const EPS: Self;

    fn of(x: f64) -> Self;
    fn to_f64(self) -> f64;

    fn half() -> Self {
        Self::of(0.5)
    }

    fn two() -> Self {
        Self::of(2.0)
    }

    fn total_order(&self, other: &Self) -> core::cmp::Ordering;
}

impl Real for f64 {
    const EPS: Self = f64::EPSILON * 0.5;

    #[inline]
    fn of(x: f64) -> Self {
        x
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self
    }

    #[inline]
    fn total_order(&self, other: &Self) -> core::cmp::Ordering {
        self.total_cmp(other)
    }
}

impl Real for f32 {
    const EPS: Self = f32::EPSILON * 0.5;

    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }

    #[inline]
    fn total_order(&self, other: &Self) -> core::cmp::Ordering {
        self.total_cmp(other)
    }
}

/// Conservative rounding bound `n·u / (1 − n·u)` used to pad slab tests.
#[inline]
pub fn gamma<T: Real>(n: u32) -> T {
    let nu = T::of(n as f64) * T::EPS;
    nu / (T::one() - nu)
}
