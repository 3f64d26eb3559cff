//! The coupled stochastic Galerkin operator
//! A = sum_i G_i0 (x) A_i - sum_ij G_ij (x) B_ij in factored form.
//!
//! Matrix-vector products use the vec identity (G (x) A) vec(X) =
//! vec(A X G^T) on matricized iterates, so the Kronecker matrix is never
//! formed. The symmetric pair (i, j)/(j, i) of the B sum is folded into one
//! term with the combined coupling G_ij + G_ji.

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::Result;
use crate::gpc::StochGalerkinMatrices;
use crate::linalg::{
    csr_mul_dense_acc, dense_mul_csr_t, frobenius_norm, norm2, CsrMatrix, SparseDirect,
};
use crate::problem::PhysicalOperators;

/// The factored coupled system A u = b with b = h (x) f held as the
/// matricized right-hand side (first column f, zeros elsewhere).
pub struct SgSystem<'a> {
    pub ops: &'a PhysicalOperators,
    pub gmats: &'a StochGalerkinMatrices,
    rhs: Array2<f64>,
    /// (B_ij, G_ij + G_ji) per stored pair i <= j; G_ii enters once.
    b_terms: Vec<(&'a CsrMatrix, CsrMatrix)>,
    rhs_norm: f64,
}

impl<'a> SgSystem<'a> {
    pub fn new(ops: &'a PhysicalOperators, gmats: &'a StochGalerkinMatrices) -> SgSystem<'a> {
        assert_eq!(ops.m(), gmats.m, "physical and stochastic m disagree");
        let n_h = ops.n_h();
        let n_p = gmats.n_p();
        let mut rhs = Array2::zeros((n_h, n_p));
        for (s, &v) in ops.load.iter().enumerate() {
            rhs[[s, 0]] = v;
        }
        let b_terms = ops
            .b_mats
            .iter()
            .map(|(i, j, b)| {
                let g = if i == j {
                    gmats.g(*i, *j).clone()
                } else {
                    CsrMatrix::linear_combination(&[(1.0, gmats.g(*i, *j)), (1.0, gmats.g(*j, *i))])
                };
                (b, g)
            })
            .collect();
        let rhs_norm = norm2(&ops.load);
        SgSystem {
            ops,
            gmats,
            rhs,
            b_terms,
            rhs_norm,
        }
    }

    pub fn n_h(&self) -> usize {
        self.ops.n_h()
    }

    pub fn n_p(&self) -> usize {
        self.gmats.n_p()
    }

    /// Matricized right-hand side B with vec(B) = h (x) f.
    pub fn rhs(&self) -> &Array2<f64> {
        &self.rhs
    }

    /// Combined stochastic coupling of the idx-th stored B pair
    /// (G_ij + G_ji for i < j, G_ii on the diagonal).
    pub fn b_coupling(&self, idx: usize) -> &CsrMatrix {
        &self.b_terms[idx].1
    }

    /// ||b||_2 = ||f||_2 since h is the first unit vector.
    pub fn rhs_norm(&self) -> f64 {
        self.rhs_norm
    }

    /// Y = sum_i A_i X G_i0^T - sum_ij B_ij X G_ij^T without forming any
    /// Kronecker product.
    pub fn matvec(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(x.nrows(), self.n_h(), "matvec row mismatch");
        assert_eq!(x.ncols(), self.n_p(), "matvec column mismatch");
        let mut y = Array2::zeros((self.n_h(), self.n_p()));
        for (i, a) in self.ops.a_mats.iter().enumerate() {
            if a.nnz() == 0 {
                continue;
            }
            let t = dense_mul_csr_t(x, self.gmats.g(i, 0));
            csr_mul_dense_acc(&mut y, 1.0, a, t.view());
        }
        for (b, g) in &self.b_terms {
            let t = dense_mul_csr_t(x, g);
            csr_mul_dense_acc(&mut y, -1.0, b, t.view());
        }
        y
    }

    /// ||rhs - A x||_F; equals ||f|| at x = 0.
    pub fn residual_norm(&self, x: ArrayView2<'_, f64>) -> f64 {
        let ax = self.matvec(x);
        frobenius_norm(&(&self.rhs - &ax))
    }
}

/// The mean-based preconditioner P = I (x) A_mean with A_mean = A_0 - B_00,
/// factored once (Cholesky when SPD, LU otherwise) and applied columnwise.
pub struct MeanPreconditioner {
    factor: SparseDirect,
    n_h: usize,
}

impl MeanPreconditioner {
    pub fn new(ops: &PhysicalOperators) -> Result<MeanPreconditioner> {
        let mean = ops.mean_matrix();
        let factor = SparseDirect::factor(&mean)?;
        Ok(MeanPreconditioner {
            factor,
            n_h: ops.n_h(),
        })
    }

    pub fn is_cholesky(&self) -> bool {
        self.factor.is_cholesky()
    }

    /// Solve A_mean z = y for every column of Y.
    pub fn apply(&self, y: ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(y.nrows(), self.n_h);
        let mut z = Array2::zeros(y.raw_dim());
        z.axis_iter_mut(Axis(1))
            .into_par_iter()
            .zip(y.axis_iter(Axis(1)).into_par_iter())
            .for_each(|(mut zc, yc)| {
                let mut col: Vec<f64> = yc.to_vec();
                self.factor.solve_in_place(&mut col);
                for (o, v) in zc.iter_mut().zip(col) {
                    *o = v;
                }
            });
        z
    }
}
