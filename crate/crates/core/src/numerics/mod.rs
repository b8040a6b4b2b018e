//! Dense linear algebra, the Wirtinger bridge between complex matrices and
//! real parameter vectors, an L-BFGS maximizer and a finite-difference
//! gradient checker.

mod fdiff;
mod lbfgs;
mod linalg;
mod wirtinger;

pub use fdiff::{finite_diff_grad, max_relative_error, DEFAULT_FD_EPS};
pub use lbfgs::{lbfgs_maximize, lbfgs_maximize_with, OptimResult, OptimStatus, OptimizerOptions};
pub use linalg::{
    adjoint_mul, cholesky, frobenius_norm, hermitian_solve, log_det_hpd, pseudo_inverse, svd,
    Cholesky, SvdResult,
};
pub use wirtinger::{complex_to_real, real_gradient, real_to_complex};
