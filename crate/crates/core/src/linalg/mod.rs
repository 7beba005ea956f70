//! Linear algebra kernels: tridiagonal LU for the ADI stages, the grid
//! transpose that makes `A2` tridiagonal, and the unsplit baselines (BiCGStab,
//! banded LU) plus a dense matrix-exponential oracle.

mod banded;
mod expm;
mod krylov;
mod permutation;
mod tridiag;

pub use banded::{BandedLu, DEFAULT_BANDED_CAP};
pub use expm::{dense_expm_apply, expm, DEFAULT_EXPM_CAP};
pub use krylov::{bicgstab, KrylovSolution, KrylovStatus};
pub use permutation::GridPermutation;
pub use tridiag::TridiagonalFactors;
