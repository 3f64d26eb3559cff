//! Solution statistics, discrete L2 error metrics and the full stochastic
//! Galerkin baseline solve.
//!
//! With an orthonormal stochastic basis whose first polynomial is the
//! constant, the mean field is the first coefficient column and the variance
//! is the sum of squares of the remaining per-mode nodal fields.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::krylov::{self, KrylovConfig, SolveReport};
use crate::linalg::CsrMatrix;
use crate::problem::AffineProblem;
use crate::sgoperator::{MeanPreconditioner, SgSystem};

#[derive(Debug, Clone)]
pub struct SolutionStats {
    pub mean: Vec<f64>,
    /// Pointwise variance, clamped to be non-negative.
    pub variance: Vec<f64>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ErrorMetrics {
    pub err_mean: f64,
    pub err_var: f64,
}

/// Mean and variance fields of a coefficient matrix (nodes x stochastic
/// modes; the first column is the constant mode).
pub fn stats_from_coefficients(u: ArrayView2<'_, f64>) -> SolutionStats {
    let n_h = u.nrows();
    let mean = u.column(0).to_vec();
    let mut variance = vec![0.0; n_h];
    for j in 1..u.ncols() {
        let col = u.column(j);
        for (v, &c) in variance.iter_mut().zip(col.iter()) {
            *v += c * c;
        }
    }
    for v in &mut variance {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    SolutionStats { mean, variance }
}

fn mass_norm(mass: &CsrMatrix, v: &[f64]) -> f64 {
    let mv = mass.mul_vec(v);
    mv.iter().zip(v).map(|(a, b)| a * b).sum::<f64>().sqrt()
}

/// Relative discrete-L2 errors of mean and variance against a reference on
/// the same mesh.
pub fn relative_errors(
    candidate: &SolutionStats,
    reference: &SolutionStats,
    mass: &CsrMatrix,
) -> Result<ErrorMetrics> {
    if candidate.mean.len() != reference.mean.len() {
        return Err(Error::DimensionMismatch {
            expected: reference.mean.len(),
            found: candidate.mean.len(),
        });
    }
    let diff = |a: &[f64], b: &[f64]| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x - y).collect()
    };
    let ref_mean_norm = mass_norm(mass, &reference.mean);
    let ref_var_norm = mass_norm(mass, &reference.variance);
    if ref_mean_norm == 0.0 || ref_var_norm == 0.0 {
        return Err(Error::InvalidArgument(
            "reference statistics have zero norm".into(),
        ));
    }
    Ok(ErrorMetrics {
        err_mean: mass_norm(mass, &diff(&candidate.mean, &reference.mean)) / ref_mean_norm,
        err_var: mass_norm(mass, &diff(&candidate.variance, &reference.variance)) / ref_var_norm,
    })
}

/// Baseline: solve the full coupled system with the mean-based
/// preconditioner. Used for comparisons and for high-order references.
pub fn solve_full_sgm(
    problem: &AffineProblem,
    config: &KrylovConfig,
) -> Result<(Array2<f64>, SolveReport)> {
    let sys = SgSystem::new(&problem.ops, &problem.gmats);
    let pc = MeanPreconditioner::new(&problem.ops)?;
    let apply_a = |x: &Array2<f64>| sys.matvec(x.view());
    let apply_pinv = |y: &Array2<f64>| pc.apply(y.view());
    let (x, report) = krylov::solve(&apply_a, &apply_pinv, sys.rhs(), config);
    if !report.converged {
        return Err(Error::NonConvergence {
            iterations: report.iterations,
            residual: report.residual_history.last().copied().unwrap_or(1.0),
        });
    }
    Ok((x, report))
}
