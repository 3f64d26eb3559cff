//! The reduced basis stochastic Galerkin driver: staged greedy enrichment,
//! reduced coupled solves, cheap global residual evaluation through the
//! cached products A_i Q and B_ij Q, and secant prediction of the reduced
//! dimension that reaches the target residual.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gpc::StochGalerkinMatrices;
use crate::krylov::{self, KrylovConfig, SolveReport};
use crate::linalg::{
    dense_mul_csr_t, frobenius_norm, par_matmul, par_matmul_acc, CsrMatrix, DenseCholesky,
    DenseLu,
};
use crate::problem::AffineProblem;
use crate::rb::{solve_snapshot, ReducedBasisState, TrainingSet};
use crate::sgoperator::SgSystem;

#[derive(Debug, Clone)]
pub struct RbsgmConfig {
    /// Target relative residual of the coupled system.
    pub tol: f64,
    /// Basis increments per stage.
    pub ns: usize,
    /// Cap on the reduced dimension.
    pub nmax: usize,
    /// Krylov settings for the reduced coupled solves.
    pub krylov: KrylovConfig,
    pub seed: u64,
    pub training_size: usize,
    /// Verify the cardinal-interpolation property of the indicator at every
    /// greedy step (test instrumentation; adds indicator sweeps over the
    /// selected samples).
    pub check_cardinality: bool,
}

impl RbsgmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::Config("tol must lie in (0, 1)".into()));
        }
        if self.ns == 0 || self.ns > self.nmax {
            return Err(Error::Config("need 1 <= ns <= nmax".into()));
        }
        if self.training_size == 0 {
            return Err(Error::Config("training set must be nonempty".into()));
        }
        Ok(())
    }
}

/// One residual evaluation in the stage log.
#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    /// Reduced dimension at which the residual was evaluated.
    pub r: usize,
    pub relres: f64,
    /// Secant prediction computed from this stage (absent once converged or
    /// at the initial r = 1 evaluation).
    pub predicted_r: Option<usize>,
    /// Stage multiplier in force after this evaluation.
    pub st: usize,
    /// Krylov iterations spent on the reduced solve of this stage.
    pub krylov_iterations: usize,
}

#[derive(Debug)]
pub struct RbsgmReport {
    pub stages: Vec<StageRecord>,
    pub residual_evaluations: usize,
    pub selected: Vec<Vec<f64>>,
    /// Final reduced coefficients, r x N_p.
    pub reduced_coefficients: Array2<f64>,
    /// Lifted coefficients Q_r U^(r), N_h x N_p.
    pub lifted: Array2<f64>,
    pub converged: bool,
    pub final_r: usize,
    pub final_relres: f64,
    /// Largest |Delta_n(xi_selected) - 1| seen (only with check_cardinality).
    pub cardinality_max_deviation: Option<f64>,
    /// Candidates dropped because their snapshot solve failed or deflated.
    pub skipped_candidates: usize,
}

/// Solve the reduced coupled system (projected operators, same Kronecker
/// coupling) with the mean-based preconditioner I (x) (Q'A_mean Q).
pub fn solve_reduced_sg(
    state: &ReducedBasisState<'_>,
    gmats: &StochGalerkinMatrices,
    b_couplings: &[CsrMatrix],
    config: &KrylovConfig,
) -> Result<(Array2<f64>, SolveReport)> {
    let r = state.n();
    let n_p = gmats.n_p();
    let ops = state.ops();

    let mut rhs = Array2::zeros((r, n_p));
    for (i, &v) in state.qf.iter().enumerate() {
        rhs[[i, 0]] = v;
    }

    let apply_a = |x: &Array2<f64>| -> Array2<f64> {
        let mut y = Array2::zeros((r, n_p));
        for (i, block) in state.qaq.iter().enumerate() {
            if ops.a_mats[i].nnz() == 0 {
                continue;
            }
            let t = dense_mul_csr_t(x.view(), gmats.g(i, 0));
            par_matmul_acc(&mut y, 1.0, block.view(), t.view());
        }
        for (idx, block) in state.qbq.iter().enumerate() {
            let t = dense_mul_csr_t(x.view(), &b_couplings[idx]);
            par_matmul_acc(&mut y, -1.0, block.view(), t.view());
        }
        y
    };

    // reduced mean matrix Q'(A_0 - B_00)Q from the projected blocks
    let mut mean_red = state.qaq[0].clone();
    if let Some(idx) = ops.b_mats.iter().position(|(i, j, _)| *i == 0 && *j == 0) {
        mean_red -= &state.qbq[idx];
    }
    enum MeanFactor {
        Chol(DenseCholesky),
        Lu(DenseLu),
    }
    let factor = match DenseCholesky::factor(&mean_red) {
        Ok(c) => MeanFactor::Chol(c),
        Err(_) => MeanFactor::Lu(DenseLu::factor(&mean_red)?),
    };
    let apply_pinv = |y: &Array2<f64>| -> Array2<f64> {
        let mut z = Array2::zeros(y.raw_dim());
        let mut col = vec![0.0; r];
        for j in 0..n_p {
            for i in 0..r {
                col[i] = y[[i, j]];
            }
            match &factor {
                MeanFactor::Chol(c) => c.solve_in_place(&mut col),
                MeanFactor::Lu(l) => l.solve_in_place(&mut col),
            }
            for i in 0..r {
                z[[i, j]] = col[i];
            }
        }
        z
    };

    let (x, report) = krylov::solve(&apply_a, &apply_pinv, &rhs, config);
    if report.converged {
        return Ok((x, report));
    }
    // Indefinite (Helmholtz-type) projections defeat short-recurrence Krylov:
    // the projected operator is real symmetric with eigenvalues on both sides
    // of zero, where the Bi-CGSTAB stabilization polynomial cannot contract.
    // The system itself stays well conditioned, so fall back to an exact
    // dense factorization of the r*N_p coupled matrix.
    log::warn!(
        "reduced Krylov solve stalled at residual {:.3e} after {} iterations; \
         switching to the dense direct path (dim {})",
        report.residual_history.last().copied().unwrap_or(1.0),
        report.iterations,
        r * n_p
    );
    let x = solve_reduced_dense(state, gmats, b_couplings)?;
    Ok((x, report))
}

/// Assemble the reduced coupled matrix explicitly (N_p x N_p grid of r x r
/// blocks, block (l, n) of the A-part being G_i0(l, n) A_i^(r)) and solve it
/// by blocked dense LU.
fn solve_reduced_dense(
    state: &ReducedBasisState<'_>,
    gmats: &StochGalerkinMatrices,
    b_couplings: &[CsrMatrix],
) -> Result<Array2<f64>> {
    let r = state.n();
    let n_p = gmats.n_p();
    let dim = r * n_p;
    let ops = state.ops();
    let mut big = Array2::zeros((dim, dim));
    let mut add_blocks = |g: &CsrMatrix, block: &Array2<f64>, sign: f64| {
        for l in 0..n_p {
            let (cols, vals) = g.row(l);
            for (&n, &v) in cols.iter().zip(vals) {
                let w = sign * v;
                let mut target = big.slice_mut(ndarray::s![l * r..(l + 1) * r, n * r..(n + 1) * r]);
                target.scaled_add(w, block);
            }
        }
    };
    for (i, block) in state.qaq.iter().enumerate() {
        if ops.a_mats[i].nnz() == 0 {
            continue;
        }
        add_blocks(gmats.g(i, 0), block, 1.0);
    }
    for (idx, block) in state.qbq.iter().enumerate() {
        add_blocks(&b_couplings[idx], block, -1.0);
    }
    let lu = DenseLu::factor(&big)?;
    let mut rhs = vec![0.0; dim];
    rhs[..r].copy_from_slice(&state.qf);
    lu.solve_in_place(&mut rhs);
    Ok(Array2::from_shape_fn((r, n_p), |(i, n)| rhs[n * r + i]))
}

/// Relative residual of the full coupled system evaluated through the cached
/// N_h x r products, never lifting Q_r U^(r):
/// || B - sum (A_i Q)(U G_i0') + sum (B_ij Q)(U G_ij') ||_F / ||f||.
pub fn global_residual(
    sys: &SgSystem<'_>,
    state: &ReducedBasisState<'_>,
    u_red: &Array2<f64>,
) -> f64 {
    let mut res = sys.rhs().clone();
    let ops = state.ops();
    for (i, aq) in state.aq.iter().enumerate() {
        if ops.a_mats[i].nnz() == 0 {
            continue;
        }
        let t = dense_mul_csr_t(u_red.view(), sys.gmats.g(i, 0));
        par_matmul_acc(&mut res, -1.0, aq.view(), t.view());
    }
    for (idx, bq) in state.bq.iter().enumerate() {
        let t = dense_mul_csr_t(u_red.view(), sys.b_coupling(idx));
        par_matmul_acc(&mut res, 1.0, bq.view(), t.view());
    }
    frobenius_norm(&res) / sys.rhs_norm()
}

/// Secant step on h(r) = log10(relative residual): the r predicted to reach
/// log10(tol), rounded up and clamped into [r2 + 1, nmax]. A non-decreasing
/// residual falls back to linear growth by ns.
pub fn secant_predict(
    r1: usize,
    h1: f64,
    r2: usize,
    h2: f64,
    tol: f64,
    ns: usize,
    nmax: usize,
) -> usize {
    debug_assert!(r2 > r1);
    if h2 >= h1 {
        return (r2 + ns).min(nmax);
    }
    let target = tol.log10();
    let raw = r1 as f64 + (r2 as f64 - r1 as f64) / (h2 - h1) * (target - h1);
    let rounded = raw.ceil() as i64;
    let lower = (r2 + 1) as i64;
    (rounded.max(lower) as usize).min(nmax)
}

/// Run the staged adaptive loop on an assembled problem.
pub fn run(problem: &AffineProblem, config: &RbsgmConfig) -> Result<RbsgmReport> {
    config.validate()?;
    let sys = SgSystem::new(&problem.ops, &problem.gmats);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let training =
        TrainingSet::monte_carlo_with(problem.m(), config.training_size, &mut rng);
    let mut state = ReducedBasisState::new(&problem.ops);
    let mut skip = vec![false; training.len()];
    let mut skipped_candidates = 0usize;
    let mut cardinality_dev: Option<f64> = if config.check_cardinality {
        Some(0.0)
    } else {
        None
    };

    // first sample: uniform draw from the candidate set
    loop {
        let idx = rng.gen_range(0..training.len());
        if skip[idx] {
            continue;
        }
        let xi = &training.samples[idx];
        match solve_snapshot(&problem.ops, xi) {
            Ok(u) => {
                if state.extend(xi, &u)? {
                    break;
                }
                skip[idx] = true;
                skipped_candidates += 1;
            }
            Err(e) => {
                log::warn!("first sample {idx} skipped: {e}");
                skip[idx] = true;
                skipped_candidates += 1;
            }
        }
    }
    update_cardinality(&state, &mut cardinality_dev);

    let b_couplings: Vec<CsrMatrix> = problem
        .ops
        .b_mats
        .iter()
        .map(|(i, j, _)| {
            if i == j {
                problem.gmats.g(*i, *j).clone()
            } else {
                CsrMatrix::linear_combination(&[
                    (1.0, problem.gmats.g(*i, *j)),
                    (1.0, problem.gmats.g(*j, *i)),
                ])
            }
        })
        .collect();

    let mut stages: Vec<StageRecord> = Vec::new();
    let (mut u_red, solve_rep) =
        solve_reduced_sg(&state, &problem.gmats, &b_couplings, &config.krylov)?;
    let mut res = global_residual(&sys, &state, &u_red);
    let mut residual_evaluations = 1usize;
    let mut st = 1usize;
    let mut r1 = 1usize;
    let mut h1 = res.log10();
    stages.push(StageRecord {
        r: state.n(),
        relres: res,
        predicted_r: None,
        st,
        krylov_iterations: solve_rep.iterations,
    });

    while state.n() < config.nmax && res > config.tol {
        let mut k = 0usize;
        'grow: while state.n() < config.nmax && k < st * config.ns {
            let Some((idx, _delta)) = state.greedy_select(&training, &skip) else {
                log::warn!("training set exhausted at r = {}", state.n());
                break 'grow;
            };
            let xi = &training.samples[idx];
            match solve_snapshot(&problem.ops, xi) {
                Ok(u) => {
                    if state.extend(xi, &u)? {
                        k += 1;
                        update_cardinality(&state, &mut cardinality_dev);
                    } else {
                        skip[idx] = true;
                        skipped_candidates += 1;
                    }
                }
                Err(e) => {
                    log::warn!("candidate {idx} skipped: {e}");
                    skip[idx] = true;
                    skipped_candidates += 1;
                }
            }
        }
        if state.n() == stages.last().map(|s| s.r).unwrap_or(0) {
            // no growth happened (training exhausted); stop honestly
            break;
        }

        let (u_next, solve_rep) =
            solve_reduced_sg(&state, &problem.gmats, &b_couplings, &config.krylov)?;
        u_red = u_next;
        res = global_residual(&sys, &state, &u_red);
        residual_evaluations += 1;

        if res <= config.tol {
            stages.push(StageRecord {
                r: state.n(),
                relres: res,
                predicted_r: None,
                st,
                krylov_iterations: solve_rep.iterations,
            });
            break;
        }
        let r2 = state.n();
        let h2 = res.log10();
        let predicted = secant_predict(r1, h1, r2, h2, config.tol, config.ns, config.nmax);
        st = (predicted - r2) / config.ns + 1;
        stages.push(StageRecord {
            r: r2,
            relres: res,
            predicted_r: Some(predicted),
            st,
            krylov_iterations: solve_rep.iterations,
        });
        r1 = r2;
        h1 = h2;
    }

    let converged = res <= config.tol;
    let lifted = par_matmul(state.q_mat.view(), u_red.view());
    Ok(RbsgmReport {
        stages,
        residual_evaluations,
        selected: state.selected.clone(),
        reduced_coefficients: u_red,
        lifted,
        converged,
        final_r: state.n(),
        final_relres: res,
        cardinality_max_deviation: cardinality_dev,
        skipped_candidates,
    })
}

fn update_cardinality(state: &ReducedBasisState<'_>, dev: &mut Option<f64>) {
    if let Some(worst) = dev.as_mut() {
        for xi in &state.selected {
            let d = (state.lebesgue_indicator(xi) - 1.0).abs();
            if d > *worst {
                *worst = d;
            }
        }
    }
}
