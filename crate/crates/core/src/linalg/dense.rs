//! Dense factorizations and the few dense kernels the reduced solves need.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// LU factorization with partial pivoting, PA = LU. Right-looking blocked
/// elimination; trailing updates run as parallel GEMMs, so factoring the
/// dense reduced coupled systems (dimension ~10^4) stays usable.
#[derive(Debug, Clone)]
pub struct DenseLu {
    lu: Array2<f64>,
    piv: Vec<usize>,
}

const LU_BLOCK: usize = 64;

impl DenseLu {
    pub fn factor(a: &Array2<f64>) -> Result<DenseLu> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: a.ncols(),
            });
        }
        let mut lu = a.clone();
        let mut piv = vec![0usize; n];
        let mut k0 = 0;
        while k0 < n {
            let k1 = (k0 + LU_BLOCK).min(n);
            // panel factorization (columns k0..k1)
            for k in k0..k1 {
                let mut p = k;
                let mut pmax = lu[[k, k]].abs();
                for i in k + 1..n {
                    let v = lu[[i, k]].abs();
                    if v > pmax {
                        pmax = v;
                        p = i;
                    }
                }
                if pmax == 0.0 {
                    return Err(Error::Singular(format!("zero pivot at column {k}")));
                }
                piv[k] = p;
                if p != k {
                    for j in 0..n {
                        lu.swap([k, j], [p, j]);
                    }
                }
                let pivot = lu[[k, k]];
                for i in k + 1..n {
                    let m = lu[[i, k]] / pivot;
                    lu[[i, k]] = m;
                    for j in k + 1..k1 {
                        lu[[i, j]] -= m * lu[[k, j]];
                    }
                }
            }
            if k1 < n {
                // U12 = L11^{-1} A12 (unit lower triangular solve by rows)
                for k in k0..k1 {
                    for i in k + 1..k1 {
                        let m = lu[[i, k]];
                        if m != 0.0 {
                            let (row_k, mut row_i) =
                                lu.multi_slice_mut((s![k, k1..], s![i, k1..]));
                            row_i.scaled_add(-m, &row_k);
                        }
                    }
                }
                // trailing update A22 -= L21 U12
                let l21 = lu.slice(s![k1.., k0..k1]).to_owned();
                let u12 = lu.slice(s![k0..k1, k1..]).to_owned();
                let mut a22 = lu.slice_mut(s![k1.., k1..]);
                a22.axis_chunks_iter_mut(Axis(0), 128)
                    .into_par_iter()
                    .zip(l21.axis_chunks_iter(Axis(0), 128).into_par_iter())
                    .for_each(|(mut ablk, lblk)| {
                        ablk.scaled_add(-1.0, &lblk.dot(&u12));
                    });
            }
            k0 = k1;
        }
        Ok(DenseLu { lu, piv })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.lu.nrows();
        assert_eq!(b.len(), n);
        for k in 0..n {
            b.swap(k, self.piv[k]);
        }
        for k in 0..n {
            for i in 0..k {
                b[k] -= self.lu[[k, i]] * b[i];
            }
        }
        for k in (0..n).rev() {
            for i in k + 1..n {
                b[k] -= self.lu[[k, i]] * b[i];
            }
            b[k] /= self.lu[[k, k]];
        }
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Columnwise solve A X = B.
    pub fn solve_mat(&self, b: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros(b.raw_dim());
        for (j, col) in b.axis_iter(Axis(1)).enumerate() {
            let x = self.solve_vec(col.to_vec().as_slice());
            for (i, v) in x.into_iter().enumerate() {
                out[[i, j]] = v;
            }
        }
        out
    }
}

/// Cholesky factorization A = L Lᵀ for symmetric positive definite input.
#[derive(Debug, Clone)]
pub struct DenseCholesky {
    l: Array2<f64>,
}

impl DenseCholesky {
    pub fn factor(a: &Array2<f64>) -> Result<DenseCholesky> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: a.ncols(),
            });
        }
        let mut l = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..=i {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]];
                }
                if i == j {
                    if s <= 0.0 {
                        return Err(Error::Singular(format!(
                            "non-positive pivot {s:.3e} at row {i}"
                        )));
                    }
                    l[[i, i]] = s.sqrt();
                } else {
                    l[[i, j]] = s / l[[j, j]];
                }
            }
        }
        Ok(DenseCholesky { l })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.l.nrows();
        assert_eq!(b.len(), n);
        for i in 0..n {
            for k in 0..i {
                b[i] -= self.l[[i, k]] * b[k];
            }
            b[i] /= self.l[[i, i]];
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                b[i] -= self.l[[k, i]] * b[k];
            }
            b[i] /= self.l[[i, i]];
        }
    }
}

/// Back substitution for an upper-triangular system R x = b.
pub fn solve_upper_triangular(r: ArrayView2<'_, f64>, b: &[f64]) -> Result<Vec<f64>> {
    let n = r.nrows();
    assert_eq!(b.len(), n);
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        for k in i + 1..n {
            x[i] -= r[[i, k]] * x[k];
        }
        let d = r[[i, i]];
        if d == 0.0 {
            return Err(Error::Singular(format!("zero diagonal at row {i}")));
        }
        x[i] /= d;
    }
    Ok(x)
}

// Row-chunked parallel GEMM. The chunk size is fixed so results do not depend
// on the thread count.
const MATMUL_CHUNK: usize = 128;

/// C = A B, parallel over row blocks of A.
pub fn par_matmul(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    assert_eq!(a.ncols(), b.nrows(), "par_matmul dimension mismatch");
    let mut c = Array2::zeros((a.nrows(), b.ncols()));
    c.axis_chunks_iter_mut(Axis(0), MATMUL_CHUNK)
        .into_par_iter()
        .zip(a.axis_chunks_iter(Axis(0), MATMUL_CHUNK).into_par_iter())
        .for_each(|(mut cblk, ablk)| {
            cblk.assign(&ablk.dot(&b));
        });
    c
}

/// C += w * A B, parallel over row blocks.
pub fn par_matmul_acc(
    c: &mut Array2<f64>,
    w: f64,
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
) {
    assert_eq!(a.ncols(), b.nrows());
    assert_eq!(c.nrows(), a.nrows());
    assert_eq!(c.ncols(), b.ncols());
    c.axis_chunks_iter_mut(Axis(0), MATMUL_CHUNK)
        .into_par_iter()
        .zip(a.axis_chunks_iter(Axis(0), MATMUL_CHUNK).into_par_iter())
        .for_each(|(mut cblk, ablk)| {
            cblk.scaled_add(w, &ablk.dot(&b));
        });
}

pub fn frobenius_norm(x: &Array2<f64>) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn frobenius_dot(x: &Array2<f64>, y: &Array2<f64>) -> f64 {
    debug_assert_eq!(x.raw_dim(), y.raw_dim());
    x.iter().zip(y.iter()).map(|(a, b)| a * b).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Stack columns, matching the usual vec(·) convention.
pub fn vec_of(x: ArrayView2<'_, f64>) -> Array1<f64> {
    let mut out = Array1::zeros(x.nrows() * x.ncols());
    let mut k = 0;
    for col in x.axis_iter(Axis(1)) {
        for &v in col.iter() {
            out[k] = v;
            k += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn lu_solves_random_system() {
        let a = array![[4.0, 2.0, 1.0], [2.0, 5.0, -1.0], [1.0, -1.0, 3.0]];
        let lu = DenseLu::factor(&a).unwrap();
        let x = lu.solve_vec(&[1.0, 2.0, 3.0]);
        let ax = a.dot(&Array1::from_vec(x));
        assert_relative_eq!(ax[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(ax[1], 2.0, epsilon = 1e-12);
        assert_relative_eq!(ax[2], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn lu_rejects_singular() {
        let a = array![[1.0, 2.0], [2.0, 4.0]];
        assert!(DenseLu::factor(&a).is_err());
    }

    #[test]
    fn cholesky_roundtrip() {
        let a = array![[4.0, 1.0], [1.0, 3.0]];
        let ch = DenseCholesky::factor(&a).unwrap();
        let mut b = vec![1.0, -1.0];
        ch.solve_in_place(&mut b);
        let ax = a.dot(&Array1::from_vec(b));
        assert_relative_eq!(ax[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(ax[1], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(DenseCholesky::factor(&a).is_err());
    }

    #[test]
    fn upper_triangular_solve() {
        let r = array![[2.0, 1.0], [0.0, 4.0]];
        let x = solve_upper_triangular(r.view(), &[4.0, 8.0]).unwrap();
        assert_relative_eq!(x[1], 2.0, epsilon = 1e-14);
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn par_matmul_matches_dot() {
        let a = Array2::from_shape_fn((200, 37), |(i, j)| (i as f64 + 1.0) * 0.1 - j as f64 * 0.03);
        let b = Array2::from_shape_fn((37, 19), |(i, j)| (j as f64 - i as f64) * 0.05);
        let c = par_matmul(a.view(), b.view());
        let d = a.dot(&b);
        assert!(frobenius_norm(&(&c - &d)) < 1e-12);
    }

    #[test]
    fn vec_stacks_columns() {
        let x = array![[1.0, 3.0], [2.0, 4.0]];
        let v = vec_of(x.view());
        assert_eq!(v.to_vec(), vec![1.0, 2.0, 3.0, 4.0]);
    }
}
