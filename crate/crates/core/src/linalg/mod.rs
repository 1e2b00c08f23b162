//! Sparse linear algebra used by the operators and the Newton solver.

mod banded;
mod bordered;
mod csr;
mod lanczos;

pub use banded::BandedLu;
pub use bordered::{BorderedLu, Partition};
pub use csr::Csr;
pub use lanczos::{lanczos_extremal, LanczosResult};

use nalgebra::ComplexField;

/// Scalar types the solvers work over.
pub trait Scalar: ComplexField<RealField = f64> + Copy {}
impl<T: ComplexField<RealField = f64> + Copy> Scalar for T {}

pub(crate) fn norm2<T: Scalar>(v: &[T]) -> f64 {
    v.iter().map(|x| x.modulus_squared()).sum::<f64>().sqrt()
}

#[allow(dead_code)]
pub(crate) fn norm_inf<T: Scalar>(v: &[T]) -> f64 {
    v.iter().map(|x| x.modulus()).fold(0.0, f64::max)
}
