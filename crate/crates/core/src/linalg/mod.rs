//! Sparse, dense and banded linear algebra kernels shared by the solver
//! modules.

pub mod banded;
pub mod csr;
pub mod dense;

pub use banded::{BandedCholesky, BandedLu, SparseDirect};
pub use csr::{csr_mul_dense, csr_mul_dense_acc, dense_mul_csr_t, CsrMatrix};
pub use dense::{
    frobenius_dot, frobenius_norm, norm2, par_matmul, par_matmul_acc, solve_upper_triangular,
    vec_of, DenseCholesky, DenseLu,
};
