//! Numeric foundations: the [`Real`] scalar abstraction, dense [`Tensor`]s,
//! matrix products, the seeded [`Rng`], Glorot initialisation, Adam and
//! global-norm gradient clipping.

mod linalg;
mod optim;
mod rng;
mod tensor;

pub use linalg::{gemm, MatMut, MatRef};
pub use optim::{adam_step, clip_global_norm, glorot_bound, glorot_init, AdamConfig, AdamState};
pub use rng::{NoiseSource, Rng};
pub use tensor::Tensor;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point type a network can be evaluated in.
///
/// Training runs in `f32`; gradient checks switch the whole graph to `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Default + Debug + Display + Sum + Send + Sync + 'static
{
    /// Short type tag, recorded in diagnostics.
    const NAME: &'static str;

    /// Converts from `f64`, rounding to nearest.
    fn of(x: f64) -> Self;

    /// Widens to `f64`.
    fn f64(self) -> f64;

    #[doc(hidden)]
    fn gemm_raw(m: usize, k: usize, n: usize, alpha: Self, a: MatRef<'_, Self>, b: MatRef<'_, Self>, beta: Self, c: MatMut<'_, Self>);
}

impl Real for f32 {
    const NAME: &'static str = "f32";

    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn f64(self) -> f64 {
        self as f64
    }

    fn gemm_raw(m: usize, k: usize, n: usize, alpha: f32, a: MatRef<'_, f32>, b: MatRef<'_, f32>, beta: f32, c: MatMut<'_, f32>) {
        // SAFETY: `linalg::gemm` has checked that every strided index lies inside its slice.
        unsafe {
            matrixmultiply::sgemm(
                m, k, n, alpha, a.data.as_ptr(), a.rs, a.cs, b.data.as_ptr(), b.rs, b.cs, beta,
                c.data.as_mut_ptr(), c.rs, c.cs,
            );
        }
    }
}

impl Real for f64 {
    const NAME: &'static str = "f64";

    #[inline]
    fn of(x: f64) -> Self {
        x
    }

    #[inline]
    fn f64(self) -> f64 {
        self
    }

    fn gemm_raw(m: usize, k: usize, n: usize, alpha: f64, a: MatRef<'_, f64>, b: MatRef<'_, f64>, beta: f64, c: MatMut<'_, f64>) {
        // SAFETY: see the f32 impl.
        unsafe {
            matrixmultiply::dgemm(
                m, k, n, alpha, a.data.as_ptr(), a.rs, a.cs, b.data.as_ptr(), b.rs, b.cs, beta,
                c.data.as_mut_ptr(), c.rs, c.cs,
            );
        }
    }
}

#[inline]
pub fn sigmoid<S: Real>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}
