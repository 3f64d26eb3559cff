//! Independent verification oracles.
//!
//! Everything here recomputes quantities along a different route than the
//! solver modules: the coupled matrix is assembled as an explicit dense
//! Kronecker sum, linear systems are solved by Gauss-Jordan elimination,
//! stochastic couplings are integrated by tensor Gauss quadrature over
//! polynomials evaluated with the classical (unnormalized) Legendre
//! recurrence, and KL spectra come from Nystrom discretizations. The small
//! instances these run on keep everything at desk scale; `oracle-check` in
//! the CLI and the acceptance suite both call into this module.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gpc::GpcBasis;
use crate::problem::PhysicalOperators;
use crate::quadrature::gauss_legendre;

/// Explicit dense Kronecker product.
pub fn dense_kron(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    let (ar, ac) = (a.nrows(), a.ncols());
    let (br, bc) = (b.nrows(), b.ncols());
    let mut out = Array2::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let v = a[[i, j]];
            if v == 0.0 {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[[i * br + k, j * bc + l]] = v * b[[k, l]];
                }
            }
        }
    }
    out
}

/// The full coupled matrix sum_i G_i0 (x) A_i - sum_ij G_ij (x) B_ij,
/// assembled explicitly with the naive double loop.
pub fn assemble_dense_sg(
    ops: &PhysicalOperators,
    gmats: &crate::gpc::StochGalerkinMatrices,
) -> Array2<f64> {
    let m = ops.m();
    let n = ops.n_h() * gmats.n_p();
    let mut out = Array2::zeros((n, n));
    for (i, a) in ops.a_mats.iter().enumerate() {
        if a.nnz() == 0 {
            continue;
        }
        out += &dense_kron(gmats.g(i, 0).to_dense().view(), a.to_dense().view());
    }
    for i in 0..=m {
        for j in 0..=m {
            if let Some(b) = ops.b(i, j) {
                out -= &dense_kron(gmats.g(i, j).to_dense().view(), b.to_dense().view());
            }
        }
    }
    out
}

/// Gauss-Jordan elimination with partial pivoting; deliberately separate from
/// the solver-side LU so oracle solves share no code with what they check.
pub fn gauss_solve(a: ArrayView2<'_, f64>, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: b.len(),
        });
    }
    let mut aug = Array2::zeros((n, n + 1));
    aug.slice_mut(ndarray::s![.., ..n]).assign(&a);
    for (i, &v) in b.iter().enumerate() {
        aug[[i, n]] = v;
    }
    for k in 0..n {
        let mut p = k;
        let mut pmax = aug[[k, k]].abs();
        for i in k + 1..n {
            if aug[[i, k]].abs() > pmax {
                pmax = aug[[i, k]].abs();
                p = i;
            }
        }
        if pmax == 0.0 {
            return Err(Error::Singular(format!("oracle pivot zero at {k}")));
        }
        if p != k {
            for j in 0..=n {
                aug.swap([k, j], [p, j]);
            }
        }
        let piv = aug[[k, k]];
        for j in k..=n {
            aug[[k, j]] /= piv;
        }
        for i in 0..n {
            if i != k {
                let f = aug[[i, k]];
                if f != 0.0 {
                    for j in k..=n {
                        aug[[i, j]] -= f * aug[[k, j]];
                    }
                }
            }
        }
    }
    Ok((0..n).map(|i| aug[[i, n]]).collect())
}

/// Orthonormal Legendre value by classical route: unnormalized P_k recurrence
/// scaled by sqrt(2k+1). No recurrence coefficient from the assembly path.
fn phi_classical(deg: usize, x: f64) -> f64 {
    if deg == 0 {
        return 1.0;
    }
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=deg {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    p1 * (2.0 * deg as f64 + 1.0).sqrt()
}

/// Quadrature oracle for G_ij(l, n) = E[xi_i Phi_l xi_j Phi_n].
///
/// For m <= 3 the expectation is computed by a full tensor Gauss rule (which
/// also exercises the separability of the product measure); for larger m the
/// integral factors over coordinates and each 1D factor is integrated by
/// quadrature.
pub fn quadrature_g_oracle(i: usize, j: usize, basis: &GpcBasis) -> Array2<f64> {
    let m = basis.m;
    let npts = basis.p + 2; // integrand degree <= 2p + 2 per direction
    let (x, w) = gauss_legendre(npts.max(2));
    let n_p = basis.n_p;
    let mut out = Array2::zeros((n_p, n_p));
    if m <= 3 {
        // full tensor rule over all coordinates
        let mut idx = vec![0usize; m];
        loop {
            let weight: f64 = idx.iter().map(|&k| 0.5 * w[k]).product();
            let xi: Vec<f64> = idx.iter().map(|&k| x[k]).collect();
            let xi_i = if i == 0 { 1.0 } else { xi[i - 1] };
            let xi_j = if j == 0 { 1.0 } else { xi[j - 1] };
            let phis: Vec<f64> = basis
                .indices
                .iter()
                .map(|alpha| {
                    alpha
                        .iter()
                        .enumerate()
                        .map(|(d, &a)| phi_classical(a as usize, xi[d]))
                        .product()
                })
                .collect();
            for l in 0..n_p {
                for n in 0..n_p {
                    out[[l, n]] += weight * xi_i * phis[l] * xi_j * phis[n];
                }
            }
            let mut d = 0;
            loop {
                if d == m {
                    break;
                }
                idx[d] += 1;
                if idx[d] < x.len() {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == m {
                break;
            }
        }
    } else {
        // per-coordinate factors: E[xi^e phi_a phi_b] by 1D quadrature
        let factor = |e: u32, a: u32, b: u32| -> f64 {
            x.iter()
                .zip(&w)
                .map(|(&t, &wt)| {
                    0.5 * wt
                        * t.powi(e as i32)
                        * phi_classical(a as usize, t)
                        * phi_classical(b as usize, t)
                })
                .sum()
        };
        for l in 0..n_p {
            for n in 0..n_p {
                let mut v = 1.0;
                for d in 0..m {
                    let mut e = 0u32;
                    if i == d + 1 {
                        e += 1;
                    }
                    if j == d + 1 {
                        e += 1;
                    }
                    v *= factor(e, basis.indices[l][d], basis.indices[n][d]);
                    if v == 0.0 {
                        break;
                    }
                }
                out[[l, n]] = v;
            }
        }
    }
    out
}

/// Midpoint-rule Nystrom discretization of exp(-|x-y|/c): leading
/// eigenvalues of the continuous kernel, descending.
pub fn nystrom_1d_eigenvalues(
    corr_len: f64,
    interval: (f64, f64),
    npts: usize,
    count: usize,
) -> Vec<f64> {
    let h = (interval.1 - interval.0) / npts as f64;
    let pts: Vec<f64> = (0..npts)
        .map(|k| interval.0 + (k as f64 + 0.5) * h)
        .collect();
    let mut k = Array2::zeros((npts, npts));
    for a in 0..npts {
        for b in 0..npts {
            k[[a, b]] = (-(pts[a] - pts[b]).abs() / corr_len).exp() * h;
        }
    }
    sym_top_eigenvalues(&k, count)
}

/// Tensor-midpoint Nystrom discretization of the full 2D separable kernel
/// (evaluated directly, never through 1D products).
pub fn nystrom_2d_eigenvalues(
    corr_len: [f64; 2],
    x_range: (f64, f64),
    y_range: (f64, f64),
    npts: usize,
    count: usize,
) -> Vec<f64> {
    let hx = (x_range.1 - x_range.0) / npts as f64;
    let hy = (y_range.1 - y_range.0) / npts as f64;
    let n = npts * npts;
    let mut pts = Vec::with_capacity(n);
    for iy in 0..npts {
        for ix in 0..npts {
            pts.push((
                x_range.0 + (ix as f64 + 0.5) * hx,
                y_range.0 + (iy as f64 + 0.5) * hy,
            ));
        }
    }
    let mut k = Array2::zeros((n, n));
    let cell = hx * hy;
    for a in 0..n {
        for b in a..n {
            let v = (-(pts[a].0 - pts[b].0).abs() / corr_len[0]
                - (pts[a].1 - pts[b].1).abs() / corr_len[1])
                .exp()
                * cell;
            k[[a, b]] = v;
            k[[b, a]] = v;
        }
    }
    sym_top_eigenvalues(&k, count)
}

/// Richardson-extrapolated midpoint Nystrom: the midpoint eigenvalue error
/// is cleanly O(h^2) for this kernel, so combining grids h and h/2 as
/// (4 lam_{h/2} - lam_h) / 3 removes the leading term.
pub fn nystrom_1d_eigenvalues_extrapolated(
    corr_len: f64,
    interval: (f64, f64),
    npts: usize,
    count: usize,
) -> Vec<f64> {
    let coarse = nystrom_1d_eigenvalues(corr_len, interval, npts, count);
    let fine = nystrom_1d_eigenvalues(corr_len, interval, 2 * npts, count);
    coarse
        .iter()
        .zip(&fine)
        .map(|(c, f)| (4.0 * f - c) / 3.0)
        .collect()
}

/// Richardson extrapolation of the 2D tensor-midpoint Nystrom eigenvalues
/// over npts^2 and (2 npts)^2 grids.
pub fn nystrom_2d_eigenvalues_extrapolated(
    corr_len: [f64; 2],
    x_range: (f64, f64),
    y_range: (f64, f64),
    npts: usize,
    count: usize,
) -> Vec<f64> {
    let coarse = nystrom_2d_eigenvalues(corr_len, x_range, y_range, npts, count);
    let fine = nystrom_2d_eigenvalues(corr_len, x_range, y_range, 2 * npts, count);
    coarse
        .iter()
        .zip(&fine)
        .map(|(c, f)| (4.0 * f - c) / 3.0)
        .collect()
}

/// Cyclic Jacobi eigen-decomposition for small symmetric matrices.
/// Returns eigenvalues descending with matching eigenvector columns.
pub fn jacobi_eig(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v: Array2<f64> = Array2::eye(n);
    let off = |m: &Array2<f64>| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[[i, j]] * m[[i, j]];
                }
            }
        }
        s.sqrt()
    };
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    for _sweep in 0..60 {
        if off(&m) < 1e-14 * scale {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m[[p, q]];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[[k, p]], m[[k, q]]);
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[[p, k]], m[[q, k]]);
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[[k, p]], v[[k, q]]);
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a_, &b_| m[[b_, b_]].partial_cmp(&m[[a_, a_]]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&k| m[[k, k]]).collect();
    let mut vecs = Array2::zeros((n, n));
    for (col, &k) in order.iter().enumerate() {
        for r in 0..n {
            vecs[[r, col]] = v[[r, k]];
        }
    }
    (vals, vecs)
}

fn orthonormalize_columns(v: &mut Array2<f64>) {
    let (n, q) = (v.nrows(), v.ncols());
    for j in 0..q {
        for _pass in 0..2 {
            for k in 0..j {
                let mut dot = 0.0;
                for r in 0..n {
                    dot += v[[r, k]] * v[[r, j]];
                }
                for r in 0..n {
                    v[[r, j]] -= dot * v[[r, k]];
                }
            }
        }
        let norm: f64 = (0..n).map(|r| v[[r, j]] * v[[r, j]]).sum::<f64>().sqrt();
        for r in 0..n {
            v[[r, j]] /= norm;
        }
    }
}

/// Leading eigenvalues of a dense symmetric PSD matrix by subspace iteration
/// with Rayleigh-Ritz extraction. Deterministic seeded start.
pub fn sym_top_eigenvalues(k: &Array2<f64>, count: usize) -> Vec<f64> {
    let n = k.nrows();
    let q = (count + 8).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut v = Array2::from_shape_fn((n, q), |_| rng.gen_range(-1.0..1.0f64));
    orthonormalize_columns(&mut v);
    let mut prev = vec![f64::INFINITY; count];
    for _it in 0..500 {
        let w = crate::linalg::par_matmul(k.view(), v.view());
        // Ritz step on the projected matrix
        let h = crate::linalg::par_matmul(v.t(), w.view());
        let (theta, s) = jacobi_eig(&h);
        let mut next = crate::linalg::par_matmul(w.view(), s.view());
        orthonormalize_columns(&mut next);
        v = next;
        let close = theta
            .iter()
            .take(count)
            .zip(&prev)
            .all(|(t, p)| (t - p).abs() <= 1e-11 * t.abs().max(1e-300));
        prev = theta.iter().take(count).copied().collect();
        if close {
            break;
        }
    }
    // final Rayleigh-Ritz values
    let w = crate::linalg::par_matmul(k.view(), v.view());
    let h = crate::linalg::par_matmul(v.t(), w.view());
    let (theta, _) = jacobi_eig(&h);
    theta.into_iter().take(count).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn kron_small() {
        let a = array![[1.0, 2.0], [3.0, 4.0]];
        let b = array![[0.0, 1.0], [1.0, 0.0]];
        let k = dense_kron(a.view(), b.view());
        assert_eq!(k[[0, 1]], 1.0);
        assert_eq!(k[[0, 3]], 2.0);
        assert_eq!(k[[2, 1]], 3.0);
        assert_eq!(k.nrows(), 4);
    }

    #[test]
    fn gauss_solve_roundtrip() {
        let a = array![[2.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 4.0]];
        let x = gauss_solve(a.view(), &[1.0, 2.0, 3.0]).unwrap();
        let ax: Vec<f64> = (0..3)
            .map(|i| (0..3).map(|j| a[[i, j]] * x[j]).sum())
            .collect();
        for (u, v) in ax.iter().zip(&[1.0, 2.0, 3.0]) {
            assert_relative_eq!(u, v, epsilon = 1e-13);
        }
    }

    #[test]
    fn jacobi_recovers_known_spectrum() {
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let (vals, vecs) = jacobi_eig(&a);
        assert_relative_eq!(vals[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(vals[1], 1.0, epsilon = 1e-12);
        // eigenvector of 3 is (1,1)/sqrt(2) up to sign
        assert_relative_eq!(vecs[[0, 0]].abs(), vecs[[1, 0]].abs(), epsilon = 1e-12);
    }

    #[test]
    fn subspace_iteration_on_diagonal_matrix() {
        let n = 50;
        let k = Array2::from_shape_fn((n, n), |(i, j)| {
            if i == j {
                1.0 / (i as f64 + 1.0)
            } else {
                0.0
            }
        });
        let top = sym_top_eigenvalues(&k, 5);
        for (rank, v) in top.iter().enumerate() {
            assert_relative_eq!(*v, 1.0 / (rank as f64 + 1.0), epsilon = 1e-9);
        }
    }

    #[test]
    fn nystrom_1d_trace_is_interval_length() {
        let vals = nystrom_1d_eigenvalues(1.0, (-1.0, 1.0), 200, 40);
        let partial: f64 = vals.iter().sum();
        assert!(partial < 2.0 && partial > 1.9);
    }
}
