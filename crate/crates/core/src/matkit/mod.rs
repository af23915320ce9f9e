//! Dense real-matrix kernel.

mod eigen;
mod expm;
mod lu;
mod mat;
pub mod quad;

pub use eigen::{eigenvalues, log_norm, spectral_abscissa, spectral_radius, symmetric_eigenvalues};
pub use expm::{exp_integrals, exp_with_forced_integral, mat_exp, van_loan_integral, ExpIntegrals};
pub use lu::{invert, solve, Lu, SINGULARITY_RCOND};
pub use mat::Mat;

use crate::scalar::Scalar;

/// Maximum-entry distance between two equally shaped matrices.
pub fn max_abs_diff<S: Scalar>(a: &Mat<S>, b: &Mat<S>) -> S {
    (a - b).norm_max()
}
