//! Banded direct factorizations.
//!
//! Every physical-space matrix here lives on a tensor grid, so its profile is
//! a band of width n+1; a banded Cholesky/LU is the natural sparse direct
//! solver for that structure. The LU variant does partial pivoting within the
//! band (fill grows the upper bandwidth to kl+ku, as usual).

use crate::error::{Error, Result};
use crate::linalg::csr::CsrMatrix;

/// Banded Cholesky A = L Lᵀ, lower band stored row-wise.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    // l[i * (bw+1) + d] = L[i, i-d], d = 0..=bw
    l: Vec<f64>,
}

impl BandedCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<BandedCholesky> {
        a.check_square()?;
        let n = a.nrows();
        let bw = a.bandwidth();
        let w = bw + 1;
        let mut l = vec![0.0; n * w];
        // load lower triangle
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j <= i {
                    l[i * w + (i - j)] = v;
                }
            }
        }
        for j in 0..n {
            let imax = (j + bw).min(n - 1);
            for i in j..=imax {
                let kmin = i.saturating_sub(bw).max(j.saturating_sub(bw));
                let mut s = l[i * w + (i - j)];
                for k in kmin..j {
                    s -= l[i * w + (i - k)] * l[j * w + (j - k)];
                }
                if i == j {
                    if s <= 0.0 {
                        return Err(Error::Singular(format!(
                            "non-positive pivot {s:.3e} at row {i}"
                        )));
                    }
                    l[j * w + 0] = s.sqrt();
                } else {
                    l[i * w + (i - j)] = s / l[j * w + 0];
                }
            }
        }
        Ok(BandedCholesky { n, bw, l })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let w = self.bw + 1;
        for i in 0..self.n {
            let jmin = i.saturating_sub(self.bw);
            let mut s = b[i];
            for j in jmin..i {
                s -= self.l[i * w + (i - j)] * b[j];
            }
            b[i] = s / self.l[i * w];
        }
        for i in (0..self.n).rev() {
            let jmax = (i + self.bw).min(self.n - 1);
            let mut s = b[i];
            for j in i + 1..=jmax {
                s -= self.l[j * w + (j - i)] * b[j];
            }
            b[i] = s / self.l[i * w];
        }
    }
}

/// Banded LU with partial pivoting (LAPACK gbtrf-style band storage).
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize, // effective upper bandwidth after fill: original + kl
    // ab[(kl + ku + i - j) * n + j] = entry (i, j)
    ab: Vec<f64>,
    piv: Vec<usize>,
}

impl BandedLu {
    pub fn factor(a: &CsrMatrix) -> Result<BandedLu> {
        a.check_square()?;
        let n = a.nrows();
        let kl = a.bandwidth();
        let ku = kl + kl; // original upper bandwidth plus fill from pivoting
        let rows = kl + ku + 1;
        let mut ab = vec![0.0; rows * n];
        // entry (i, j) sits at band row ku + i - j, valid for -ku <= i-j <= kl
        let idx = |i: usize, j: usize| (ku + i - j) * n + j;
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                ab[idx(i, j)] = v;
            }
        }
        let mut piv = Vec::with_capacity(n);
        for j in 0..n {
            let imax = (j + kl).min(n - 1);
            let mut p = j;
            let mut pmax = ab[idx(j, j)].abs();
            for i in j + 1..=imax {
                let v = ab[idx(i, j)].abs();
                if v > pmax {
                    pmax = v;
                    p = i;
                }
            }
            if pmax == 0.0 {
                return Err(Error::Singular(format!("zero pivot at column {j}")));
            }
            piv.push(p);
            let cmax = (j + ku).min(n - 1);
            if p != j {
                for c in j..=cmax {
                    ab.swap(idx(j, c), idx(p, c));
                }
            }
            let pivot = ab[idx(j, j)];
            for i in j + 1..=imax {
                let m = ab[idx(i, j)] / pivot;
                ab[idx(i, j)] = m;
                if m != 0.0 {
                    for c in j + 1..=cmax {
                        let u = ab[idx(j, c)];
                        if u != 0.0 {
                            ab[idx(i, c)] -= m * u;
                        }
                    }
                }
            }
        }
        Ok(BandedLu { n, kl, ku, ab, piv })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let idx = |i: usize, j: usize| (self.ku + i - j) * self.n + j;
        for j in 0..self.n {
            b.swap(j, self.piv[j]);
            let imax = (j + self.kl).min(self.n - 1);
            let bj = b[j];
            if bj != 0.0 {
                for i in j + 1..=imax {
                    b[i] -= self.ab[idx(i, j)] * bj;
                }
            }
        }
        for i in (0..self.n).rev() {
            let jmax = (i + self.ku).min(self.n - 1);
            let mut s = b[i];
            for j in i + 1..=jmax {
                s -= self.ab[idx(i, j)] * b[j];
            }
            b[i] = s / self.ab[idx(i, i)];
        }
    }
}

/// A direct factorization of a banded sparse matrix: Cholesky when the matrix
/// is SPD, LU with partial pivoting otherwise.
#[derive(Debug, Clone)]
pub enum SparseDirect {
    Cholesky(BandedCholesky),
    Lu(BandedLu),
}

impl SparseDirect {
    /// Attempt Cholesky first; fall back to LU on a non-positive pivot.
    pub fn factor(a: &CsrMatrix) -> Result<SparseDirect> {
        match BandedCholesky::factor(a) {
            Ok(ch) => Ok(SparseDirect::Cholesky(ch)),
            Err(Error::Singular(_)) => Ok(SparseDirect::Lu(BandedLu::factor(a)?)),
            Err(e) => Err(e),
        }
    }

    pub fn factor_lu(a: &CsrMatrix) -> Result<SparseDirect> {
        Ok(SparseDirect::Lu(BandedLu::factor(a)?))
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        match self {
            SparseDirect::Cholesky(c) => c.solve_in_place(b),
            SparseDirect::Lu(l) => l.solve_in_place(b),
        }
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn is_cholesky(&self) -> bool {
        matches!(self, SparseDirect::Cholesky(_))
    }
}
