//! Dense linear-algebra kernel: symmetric eigendecomposition, matrix square
//! roots, definiteness tests, Lyapunov/Sylvester solves and the matrix
//! exponential.

mod cholesky;
mod complex;
mod eig;
mod expm;
pub(crate) mod lu;
mod lyapunov;
mod matrix;

pub use cholesky::cholesky_psd;
pub use complex::CMatrix;
pub use eig::{
    definiteness_tolerance, gen_eig, is_positive_definite, max_eigenvalue, min_eigenvalue,
    min_gen_eig, operator_norm, psd_sqrt, require_positive_definite,
    require_positive_semidefinite, spd_sqrt, sym_eig, SpdRoot, Spectrum, MAX_JACOBI_SWEEPS,
};
pub use expm::expm;
pub use lyapunov::{
    lyapunov_residual, solve_lyapunov, solve_sylvester, KRONECKER_SINGULAR_RATIO,
};
pub use matrix::{Matrix, SymMatrix};
