//! Greedy reduced basis construction with the residual-free Lebesgue
//! indicator.
//!
//! The state keeps the orthonormal basis Q_n, the snapshot-to-basis transform
//! R_n (snapshots = Q_n R_n) and every projected operator the reduced
//! stochastic Galerkin solves need. Each extension costs one sparse matvec
//! per operator family; existing columns are never recomputed.
//!
//! The indicator evaluates the reduced solution in snapshot coordinates:
//! solve the n x n reduced system in the Q basis, map the coefficients back
//! through R_n, and sum absolute values. At a selected sample the reduced
//! solution reproduces the snapshot itself, so the indicator is exactly 1
//! there (cardinal interpolation), and large values flag badly covered
//! parameters.

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{
    csr_mul_dense, norm2, solve_upper_triangular, DenseLu, SparseDirect,
};
use crate::problem::PhysicalOperators;

/// Relative complement-norm threshold below which a snapshot is deflated.
pub const DEFLATION_TOL: f64 = 1e-10;

/// Monte Carlo candidate parameters on [-1,1]^m, reproducible from the seed.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub samples: Vec<Vec<f64>>,
    pub seed: u64,
}

impl TrainingSet {
    pub fn monte_carlo(m: usize, size: usize, seed: u64) -> TrainingSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::monte_carlo_with(m, size, &mut rng)
    }

    /// Draw from an existing stream (the driver keeps one seeded stream for
    /// the candidate set and the first-sample pick).
    pub fn monte_carlo_with(m: usize, size: usize, rng: &mut ChaCha8Rng) -> TrainingSet {
        let seed = rng.get_seed()[0] as u64;
        let mut samples: Vec<Vec<f64>> = Vec::with_capacity(size);
        while samples.len() < size {
            let cand: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if !samples.contains(&cand) {
                samples.push(cand);
            }
        }
        TrainingSet { samples, seed }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Solve the deterministic system A_xi u = f by sparse direct factorization.
///
/// Accuracy is verified before returning: either the residual is tiny
/// relative to the load, or — for near-resonant Helmholtz realizations whose
/// solution norm is large — the normwise backward error is at the level a
/// stable factorization guarantees. A sample failing both is reported as
/// (near-)singular and the caller skips it.
pub fn solve_snapshot(ops: &PhysicalOperators, xi: &[f64]) -> Result<Vec<f64>> {
    let a = ops.parameter_matrix(xi)?;
    let factor = SparseDirect::factor(&a)?;
    let u = factor.solve_vec(&ops.load);
    let fnorm = norm2(&ops.load);
    if fnorm > 0.0 {
        let au = a.mul_vec(&u);
        let res: f64 = au
            .iter()
            .zip(&ops.load)
            .map(|(x, b)| (x - b) * (x - b))
            .sum::<f64>()
            .sqrt();
        let backward = res / (a.frobenius_norm() * norm2(&u) + fnorm);
        if !(res / fnorm <= 1e-12 || backward <= 1e-12) {
            return Err(Error::Singular(format!(
                "snapshot solve backward error {backward:.3e} (residual {:.3e} of load): \
                 near-singular A_xi",
                res / fnorm
            )));
        }
    }
    Ok(u)
}

/// The reduced basis and all incrementally maintained projections.
pub struct ReducedBasisState<'a> {
    ops: &'a PhysicalOperators,
    /// Orthonormal basis, N_h x n.
    pub q_mat: Array2<f64>,
    /// Upper-triangular transform with snapshots = Q_n R_n.
    pub r_mat: Array2<f64>,
    /// Raw snapshots as received, N_h x n.
    pub snapshots: Array2<f64>,
    /// Chosen parameter values in selection order.
    pub selected: Vec<Vec<f64>>,
    /// Cached products A_i Q (one per operator) and B_ij Q (one per stored
    /// pair), N_h x n each.
    pub aq: Vec<Array2<f64>>,
    pub bq: Vec<Array2<f64>>,
    /// Projected blocks Q'A_iQ, Q'B_ijQ (n x n) and Q'f.
    pub qaq: Vec<Array2<f64>>,
    pub qbq: Vec<Array2<f64>>,
    pub qf: Vec<f64>,
}

impl<'a> ReducedBasisState<'a> {
    pub fn new(ops: &'a PhysicalOperators) -> ReducedBasisState<'a> {
        let n_h = ops.n_h();
        ReducedBasisState {
            ops,
            q_mat: Array2::zeros((n_h, 0)),
            r_mat: Array2::zeros((0, 0)),
            snapshots: Array2::zeros((n_h, 0)),
            selected: Vec::new(),
            aq: vec![Array2::zeros((n_h, 0)); ops.a_mats.len()],
            bq: vec![Array2::zeros((n_h, 0)); ops.b_mats.len()],
            qaq: vec![Array2::zeros((0, 0)); ops.a_mats.len()],
            qbq: vec![Array2::zeros((0, 0)); ops.b_mats.len()],
            qf: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.q_mat.ncols()
    }

    pub fn ops(&self) -> &PhysicalOperators {
        self.ops
    }

    /// Orthogonalize a snapshot against Q_n (modified Gram-Schmidt with one
    /// reorthogonalization pass) and extend every cached product. Returns
    /// false and leaves the state unchanged when the snapshot deflates.
    pub fn extend(&mut self, xi: &[f64], snapshot: &[f64]) -> Result<bool> {
        let n_h = self.ops.n_h();
        if snapshot.len() != n_h {
            return Err(Error::DimensionMismatch {
                expected: n_h,
                found: snapshot.len(),
            });
        }
        let n = self.n();
        let unorm = norm2(snapshot);
        let mut v = snapshot.to_vec();
        let mut coeffs = vec![0.0; n];
        for _pass in 0..2 {
            for k in 0..n {
                let qk = self.q_mat.column(k);
                let h: f64 = qk.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (vi, qi) in v.iter_mut().zip(qk.iter()) {
                    *vi -= h * qi;
                }
                coeffs[k] += h;
            }
        }
        let vnorm = norm2(&v);
        if vnorm < DEFLATION_TOL * unorm {
            log::warn!(
                "snapshot deflated: complement norm {:.3e} below {:.0e} of snapshot norm",
                vnorm,
                DEFLATION_TOL
            );
            return Ok(false);
        }
        let q_new: Vec<f64> = v.iter().map(|x| x / vnorm).collect();

        // grow Q, R and the raw snapshot store
        let qcol = ndarray::ArrayView1::from(&q_new);
        self.q_mat.push(Axis(1), qcol).expect("push q column");
        self.snapshots
            .push(Axis(1), ndarray::ArrayView1::from(snapshot))
            .expect("push snapshot");
        let mut r_next = Array2::zeros((n + 1, n + 1));
        r_next
            .slice_mut(ndarray::s![..n, ..n])
            .assign(&self.r_mat);
        for k in 0..n {
            r_next[[k, n]] = coeffs[k];
        }
        r_next[[n, n]] = vnorm;
        self.r_mat = r_next;
        self.selected.push(xi.to_vec());

        // one sparse matvec per operator, then border the projected blocks
        let old_q = self.q_mat.slice(ndarray::s![.., ..n]);
        for (idx, a) in self.ops.a_mats.iter().enumerate() {
            let w = a.mul_vec(&q_new);
            Self::border(&mut self.qaq[idx], &self.aq[idx], old_q, &q_new, &w, n);
            self.aq[idx]
                .push(Axis(1), ndarray::ArrayView1::from(&w))
                .expect("push aq column");
        }
        for (idx, (_, _, b)) in self.ops.b_mats.iter().enumerate() {
            let w = b.mul_vec(&q_new);
            Self::border(&mut self.qbq[idx], &self.bq[idx], old_q, &q_new, &w, n);
            self.bq[idx]
                .push(Axis(1), ndarray::ArrayView1::from(&w))
                .expect("push bq column");
        }
        let qtf: f64 = q_new.iter().zip(&self.ops.load).map(|(a, b)| a * b).sum();
        self.qf.push(qtf);
        Ok(true)
    }

    /// Extend one projected block M -> [[M, Q'w], [q'(OQ), q'w]] where
    /// OQ are the cached operator columns.
    fn border(
        proj: &mut Array2<f64>,
        cached: &Array2<f64>,
        old_q: ndarray::ArrayView2<'_, f64>,
        q_new: &[f64],
        w: &[f64],
        n: usize,
    ) {
        let mut next = Array2::zeros((n + 1, n + 1));
        next.slice_mut(ndarray::s![..n, ..n]).assign(proj);
        for k in 0..n {
            // column: Q_old' (A q_new)
            let qk = old_q.column(k);
            next[[k, n]] = qk.iter().zip(w).map(|(a, b)| a * b).sum();
            // row: q_new' (A Q_old) from the cached columns
            let ck = cached.column(k);
            next[[n, k]] = ck.iter().zip(q_new).map(|(a, b)| a * b).sum();
        }
        next[[n, n]] = w.iter().zip(q_new).map(|(a, b)| a * b).sum();
        *proj = next;
    }

    /// The projected parameter matrix Q' A_xi Q (dense n x n).
    pub fn reduced_parameter_matrix(&self, xi: &[f64]) -> Result<Array2<f64>> {
        if xi.len() != self.ops.m() {
            return Err(Error::DimensionMismatch {
                expected: self.ops.m(),
                found: xi.len(),
            });
        }
        let n = self.n();
        let coeff = |i: usize| if i == 0 { 1.0 } else { xi[i - 1] };
        let mut out = Array2::zeros((n, n));
        for (i, block) in self.qaq.iter().enumerate() {
            let w = coeff(i);
            if w != 0.0 && self.ops.a_mats[i].nnz() > 0 {
                out.scaled_add(w, block);
            }
        }
        for (idx, (i, j, _)) in self.ops.b_mats.iter().enumerate() {
            let mut w = coeff(*i) * coeff(*j);
            if i != j {
                w *= 2.0;
            }
            if w != 0.0 {
                out.scaled_add(-w, &self.qbq[idx]);
            }
        }
        Ok(out)
    }

    /// The residual-free indicator Delta_n(xi) = sum_i |l_i(xi)| with l the
    /// reduced solution in snapshot coordinates. Singular reduced systems
    /// report +inf (maximal uncertainty forces selection).
    pub fn lebesgue_indicator(&self, xi: &[f64]) -> f64 {
        debug_assert!(self.n() >= 1);
        let mred = match self.reduced_parameter_matrix(xi) {
            Ok(m) => m,
            Err(_) => return f64::INFINITY,
        };
        let lu = match DenseLu::factor(&mred) {
            Ok(lu) => lu,
            Err(_) => return f64::INFINITY,
        };
        let c = lu.solve_vec(&self.qf);
        match solve_upper_triangular(self.r_mat.view(), &c) {
            Ok(l) => l.iter().map(|v| v.abs()).sum(),
            Err(_) => f64::INFINITY,
        }
    }

    /// Argmax of the indicator over the training set; `skip[k]` masks
    /// candidates out. Ties break to the lowest sample index.
    pub fn greedy_select(&self, training: &TrainingSet, skip: &[bool]) -> Option<(usize, f64)> {
        let deltas: Vec<(usize, f64)> = training
            .samples
            .par_iter()
            .enumerate()
            .filter(|(k, _)| !skip[*k])
            .map(|(k, xi)| (k, self.lebesgue_indicator(xi)))
            .collect();
        let mut best: Option<(usize, f64)> = None;
        for (k, d) in deltas {
            match best {
                Some((_, bd)) if d <= bd => {}
                _ => best = Some((k, d)),
            }
        }
        best
    }

    /// Projection error ||(I - QQ')u|| of an arbitrary vector.
    pub fn projection_error(&self, u: &[f64]) -> f64 {
        let mut v = u.to_vec();
        for k in 0..self.n() {
            let qk = self.q_mat.column(k);
            let h: f64 = qk.iter().zip(&v).map(|(a, b)| a * b).sum();
            for (vi, qi) in v.iter_mut().zip(qk.iter()) {
                *vi -= h * qi;
            }
        }
        norm2(&v)
    }

    /// Recompute Q'A_iQ and Q'B_ijQ from scratch (test support for the
    /// incremental-update invariant).
    pub fn recompute_projections(&self) -> (Vec<Array2<f64>>, Vec<Array2<f64>>) {
        let qt = self.q_mat.t();
        let fresh_a = self
            .ops
            .a_mats
            .iter()
            .map(|a| {
                let aq = csr_mul_dense(a, self.q_mat.view());
                qt.dot(&aq)
            })
            .collect();
        let fresh_b = self
            .ops
            .b_mats
            .iter()
            .map(|(_, _, b)| {
                let bq = csr_mul_dense(b, self.q_mat.view());
                qt.dot(&bq)
            })
            .collect();
        (fresh_a, fresh_b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::build_mesh;
    use crate::gpc::enumerate_indices;
    use crate::linalg::frobenius_norm;
    use crate::problem::{build_diffusion, AffineProblem};
    use crate::randfield::kl_2d;
    use approx::assert_relative_eq;

    fn diffusion(n: usize, m: usize, p: usize) -> AffineProblem {
        let mesh = build_mesh((-1.0, 1.0), (-1.0, 1.0), n).unwrap();
        let field = kl_2d(
            [1.0, 1.0],
            (-1.0, 1.0),
            (-1.0, 1.0),
            m,
            &mesh.xs,
            &mesh.ys,
            0.2,
            0.1,
        )
        .unwrap();
        let basis = enumerate_indices(m, p).unwrap();
        build_diffusion(mesh, field, basis, &|_, _| 1.0).unwrap()
    }

    fn grown_state<'a>(
        prob: &'a AffineProblem,
        training: &TrainingSet,
        steps: usize,
    ) -> ReducedBasisState<'a> {
        let mut state = ReducedBasisState::new(&prob.ops);
        let mut skip = vec![false; training.len()];
        // seed with candidate 0, then greedy
        let u0 = solve_snapshot(&prob.ops, &training.samples[0]).unwrap();
        state.extend(&training.samples[0], &u0).unwrap();
        skip[0] = true;
        for _ in 1..steps {
            let (k, _) = state.greedy_select(training, &skip).unwrap();
            let u = solve_snapshot(&prob.ops, &training.samples[k]).unwrap();
            assert!(state.extend(&training.samples[k], &u).unwrap());
            skip[k] = true;
        }
        state
    }

    #[test]
    fn training_set_is_reproducible_and_distinct() {
        let a = TrainingSet::monte_carlo(3, 50, 42);
        let b = TrainingSet::monte_carlo(3, 50, 42);
        assert_eq!(a.samples, b.samples);
        for (i, s) in a.samples.iter().enumerate() {
            assert!(s.iter().all(|v| (-1.0..1.0).contains(v)));
            for t in &a.samples[..i] {
                assert_ne!(s, t);
            }
        }
    }

    #[test]
    fn snapshot_at_zero_matches_mean_poisson_solve() {
        let prob = diffusion(9, 2, 1);
        let u = solve_snapshot(&prob.ops, &[0.0, 0.0]).unwrap();
        let mean = prob.ops.mean_matrix();
        let direct = SparseDirect::factor(&mean).unwrap().solve_vec(&prob.ops.load);
        for (a, b) in u.iter().zip(&direct) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn snapshot_matches_dense_oracle() {
        let prob = diffusion(7, 3, 1);
        let xi = [0.4, -0.8, 0.3];
        let u = solve_snapshot(&prob.ops, &xi).unwrap();
        let a = prob.ops.parameter_matrix(&xi).unwrap();
        let ue = crate::oracle::gauss_solve(a.to_dense().view(), &prob.ops.load).unwrap();
        let err = u
            .iter()
            .zip(&ue)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
            / norm2(&ue);
        assert!(err < 1e-11, "{err}");
    }

    #[test]
    fn single_mode_coefficient_factors_out() {
        // a(x, xi) = 1 + 0.5 xi: u(xi) = u(0) / (1 + 0.5 xi)
        let mesh = build_mesh((-1.0, 1.0), (-1.0, 1.0), 7).unwrap();
        let ones = vec![1.0; mesh.node_count()];
        let a0 = crate::fem::assemble_stiffness(&mesh, &ones).unwrap();
        let half = vec![0.5; mesh.node_count()];
        let a1 = crate::fem::assemble_stiffness(&mesh, &half).unwrap();
        let load = crate::fem::assemble_load(&mesh, &|_, _| 1.0);
        let ops = PhysicalOperators {
            a_mats: vec![a0, a1],
            b_mats: vec![],
            load,
        };
        let u0 = solve_snapshot(&ops, &[0.0]).unwrap();
        for xi in [-0.9, -0.2, 0.7] {
            let u = solve_snapshot(&ops, &[xi]).unwrap();
            for (a, b) in u.iter().zip(&u0) {
                assert_relative_eq!(*a, b / (1.0 + 0.5 * xi), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn first_snapshot_is_normalized() {
        let prob = diffusion(7, 2, 1);
        let mut state = ReducedBasisState::new(&prob.ops);
        let u = solve_snapshot(&prob.ops, &[0.3, -0.3]).unwrap();
        state.extend(&[0.3, -0.3], &u).unwrap();
        let unorm = norm2(&u);
        for (q, ui) in state.q_mat.column(0).iter().zip(&u) {
            assert_relative_eq!(*q, ui / unorm, epsilon = 1e-14);
        }
        assert_relative_eq!(state.r_mat[[0, 0]], unorm, epsilon = 1e-12);
    }

    #[test]
    fn repeated_snapshot_deflates() {
        let prob = diffusion(7, 2, 1);
        let mut state = ReducedBasisState::new(&prob.ops);
        let u = solve_snapshot(&prob.ops, &[0.1, 0.9]).unwrap();
        assert!(state.extend(&[0.1, 0.9], &u).unwrap());
        let n_before = state.n();
        assert!(!state.extend(&[0.1, 0.9], &u).unwrap());
        assert_eq!(state.n(), n_before);
    }

    #[test]
    fn basis_stays_orthonormal_and_reconstructs_snapshots() {
        let prob = diffusion(9, 3, 2);
        let training = TrainingSet::monte_carlo(3, 40, 7);
        let state = grown_state(&prob, &training, 6);
        let qtq = state.q_mat.t().dot(&state.q_mat);
        let eye: Array2<f64> = Array2::eye(state.n());
        assert!(frobenius_norm(&(&qtq - &eye)) < 1e-10);
        let rebuilt = state.q_mat.dot(&state.r_mat);
        let err = frobenius_norm(&(&rebuilt - &state.snapshots))
            / frobenius_norm(&state.snapshots);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn incremental_projections_match_recomputation() {
        let prob = diffusion(9, 2, 2);
        let training = TrainingSet::monte_carlo(2, 30, 11);
        let state = grown_state(&prob, &training, 5);
        let (fresh_a, _) = state.recompute_projections();
        for (inc, fresh) in state.qaq.iter().zip(&fresh_a) {
            let scale = frobenius_norm(fresh).max(1.0);
            assert!(frobenius_norm(&(inc - fresh)) / scale < 1e-11);
        }
    }

    #[test]
    fn indicator_is_one_at_selected_samples() {
        let prob = diffusion(9, 3, 2);
        let training = TrainingSet::monte_carlo(3, 60, 3);
        let state = grown_state(&prob, &training, 7);
        for xi in &state.selected {
            let d = state.lebesgue_indicator(xi);
            assert!((d - 1.0).abs() < 1e-8, "Delta = {d}");
        }
    }

    #[test]
    fn indicator_matches_snapshot_basis_oracle() {
        // solve directly in the (ill-conditioned) raw snapshot basis:
        // (U' A_xi U) l = U' f, and compare coefficients
        let prob = diffusion(9, 2, 2);
        let training = TrainingSet::monte_carlo(2, 25, 19);
        let state = grown_state(&prob, &training, 3);
        let xi = vec![0.25, -0.55];
        let a = prob.ops.parameter_matrix(&xi).unwrap();
        let au = csr_mul_dense(&a, state.snapshots.view());
        let red = state.snapshots.t().dot(&au);
        let rhs: Vec<f64> = (0..state.n())
            .map(|k| {
                state
                    .snapshots
                    .column(k)
                    .iter()
                    .zip(&prob.ops.load)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        let l_direct = crate::oracle::gauss_solve(red.view(), &rhs).unwrap();
        let delta_direct: f64 = l_direct.iter().map(|v| v.abs()).sum();
        let delta = state.lebesgue_indicator(&xi);
        assert_relative_eq!(delta, delta_direct, epsilon = 1e-9);
    }

    #[test]
    fn one_dimensional_indicator_matches_direct_formula() {
        let prob = diffusion(9, 2, 1);
        let training = TrainingWrapper::one(&prob);
        let state = training.0;
        let xi = vec![0.6, 0.2];
        let a = prob.ops.parameter_matrix(&xi).unwrap();
        let u1: Vec<f64> = state.snapshots.column(0).to_vec();
        let au = a.mul_vec(&u1);
        let uau: f64 = u1.iter().zip(&au).map(|(a, b)| a * b).sum();
        let uf: f64 = u1.iter().zip(&prob.ops.load).map(|(a, b)| a * b).sum();
        let l1 = uf / uau;
        assert_relative_eq!(state.lebesgue_indicator(&xi), l1.abs(), epsilon = 1e-10);
    }

    // helper wrapper so the borrow of prob lives long enough
    struct TrainingWrapper<'a>(ReducedBasisState<'a>);
    impl<'a> TrainingWrapper<'a> {
        fn one(prob: &'a AffineProblem) -> TrainingWrapper<'a> {
            let mut state = ReducedBasisState::new(&prob.ops);
            let xi = vec![-0.35, 0.8];
            let u = solve_snapshot(&prob.ops, &xi).unwrap();
            state.extend(&xi, &u).unwrap();
            TrainingWrapper(state)
        }
    }

    #[test]
    fn greedy_selection_is_deterministic() {
        let prob = diffusion(9, 3, 2);
        let training = TrainingSet::monte_carlo(3, 80, 23);
        let s1 = grown_state(&prob, &training, 5);
        let s2 = grown_state(&prob, &training, 5);
        assert_eq!(s1.selected, s2.selected);
    }

    #[test]
    fn projection_error_of_held_out_snapshot_is_monotone() {
        let prob = diffusion(9, 3, 2);
        let training = TrainingSet::monte_carlo(3, 40, 29);
        let held_out = solve_snapshot(&prob.ops, &[0.123, -0.456, 0.789]).unwrap();
        let mut state = ReducedBasisState::new(&prob.ops);
        let mut skip = vec![false; training.len()];
        let u0 = solve_snapshot(&prob.ops, &training.samples[0]).unwrap();
        state.extend(&training.samples[0], &u0).unwrap();
        skip[0] = true;
        let mut prev = state.projection_error(&held_out);
        for _ in 0..5 {
            let (k, _) = state.greedy_select(&training, &skip).unwrap();
            let u = solve_snapshot(&prob.ops, &training.samples[k]).unwrap();
            state.extend(&training.samples[k], &u).unwrap();
            skip[k] = true;
            let e = state.projection_error(&held_out);
            assert!(e <= prev * (1.0 + 1e-12));
            prev = e;
        }
    }
}
