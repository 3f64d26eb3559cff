//! Compressed sparse row matrices and the dense kernels that pair with them.
//!
//! All solver-facing sparse operators (stiffness, weighted mass, stochastic
//! Galerkin couplings) are stored in this layout. Construction goes through
//! triplets with a stable sort so that repeated assembly of the same data is
//! bit-identical.

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use std::io::Write;

use crate::error::{Error, Result};

/// Sparse matrix in compressed row storage.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from (row, col, value) triplets. Duplicates are summed in input
    /// order (stable), exact zeros produced by cancellation are kept out.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> CsrMatrix {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&k| (triplets[k].0, triplets[k].1));

        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::new();
        let mut values = Vec::new();

        let mut k = 0;
        while k < order.len() {
            let (r, c, _) = triplets[order[k]];
            assert!(r < nrows && c < ncols, "triplet out of bounds");
            let mut v = 0.0;
            while k < order.len() {
                let (rr, cc, vv) = triplets[order[k]];
                if rr != r || cc != c {
                    break;
                }
                v += vv;
                k += 1;
            }
            indices.push(c);
            values.push(v);
            indptr[r + 1] += 1;
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn identity(n: usize) -> CsrMatrix {
        CsrMatrix {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> CsrMatrix {
        CsrMatrix {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of one row.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let lo = self.indptr[r];
        let hi = self.indptr[r + 1];
        (&self.indices[lo..hi], &self.values[lo..hi])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                triplets.push((c, r, v));
            }
        }
        CsrMatrix::from_triplets(self.ncols, self.nrows, &triplets)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest |i - j| over stored entries.
    pub fn bandwidth(&self) -> usize {
        let mut bw = 0usize;
        for r in 0..self.nrows {
            let (cols, _) = self.row(r);
            for &c in cols {
                bw = bw.max(r.abs_diff(c));
            }
        }
        bw
    }

    /// y = A x for a plain vector.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "matvec dimension mismatch");
        let mut y = vec![0.0; self.nrows];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let mut acc = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c];
            }
            y[r] = acc;
        }
        y
    }

    /// Weighted sum of matrices with identical shapes (patterns may differ).
    pub fn linear_combination(terms: &[(f64, &CsrMatrix)]) -> CsrMatrix {
        assert!(!terms.is_empty());
        let nrows = terms[0].1.nrows;
        let ncols = terms[0].1.ncols;
        for (_, m) in terms {
            assert_eq!((m.nrows, m.ncols), (nrows, ncols));
        }
        // Merge row-by-row through a scatter buffer; column order is restored
        // by sorting the touched set, so the result is deterministic.
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut scratch = vec![0.0; ncols];
        let mut touched: Vec<usize> = Vec::new();
        for r in 0..nrows {
            touched.clear();
            for &(w, m) in terms {
                let (cols, vals) = m.row(r);
                for (&c, &v) in cols.iter().zip(vals) {
                    if scratch[c] == 0.0 && !touched.contains(&c) {
                        touched.push(c);
                    }
                    scratch[c] += w * v;
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                indices.push(c);
                values.push(scratch[c]);
                scratch[c] = 0.0;
            }
            indptr[r + 1] = indices.len();
        }
        CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn scaled(&self, w: f64) -> CsrMatrix {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= w;
        }
        out
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut d = Array2::zeros((self.nrows, self.ncols));
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                d[[r, c]] = v;
            }
        }
        d
    }

    /// MatrixMarket coordinate text, for debugging.
    pub fn write_matrix_market<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                writeln!(w, "{} {} {:.16e}", r + 1, c + 1, v)?;
            }
        }
        Ok(())
    }

    pub fn check_square(&self) -> Result<()> {
        if self.nrows != self.ncols {
            return Err(Error::DimensionMismatch {
                expected: self.nrows,
                found: self.ncols,
            });
        }
        Ok(())
    }
}

/// Y = A X with A sparse and X dense, parallel over output rows.
pub fn csr_mul_dense(a: &CsrMatrix, x: ArrayView2<'_, f64>) -> Array2<f64> {
    assert_eq!(a.ncols, x.nrows(), "csr_mul_dense dimension mismatch");
    let ncols = x.ncols();
    let mut y = Array2::zeros((a.nrows, ncols));
    y.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(r, mut yrow)| {
            let (cols, vals) = a.row(r);
            for (&k, &v) in cols.iter().zip(vals) {
                let xrow = x.row(k);
                for (ye, &xe) in yrow.iter_mut().zip(xrow.iter()) {
                    *ye += v * xe;
                }
            }
        });
    y
}

/// Y = X Gᵀ with G sparse, i.e. Y(s, l) = Σ_n X(s, n) G(l, n).
pub fn dense_mul_csr_t(x: ArrayView2<'_, f64>, g: &CsrMatrix) -> Array2<f64> {
    assert_eq!(x.ncols(), g.ncols, "dense_mul_csr_t dimension mismatch");
    let mut y = Array2::zeros((x.nrows(), g.nrows));
    y.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(s, mut yrow)| {
            let xrow = x.row(s);
            for l in 0..g.nrows {
                let (cols, vals) = g.row(l);
                let mut acc = 0.0;
                for (&n, &v) in cols.iter().zip(vals) {
                    acc += xrow[n] * v;
                }
                yrow[l] = acc;
            }
        });
    y
}

/// Accumulating version of [`csr_mul_dense`]: Y += w * A X.
pub fn csr_mul_dense_acc(y: &mut Array2<f64>, w: f64, a: &CsrMatrix, x: ArrayView2<'_, f64>) {
    assert_eq!(a.ncols, x.nrows());
    assert_eq!(y.nrows(), a.nrows);
    assert_eq!(y.ncols(), x.ncols());
    y.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(r, mut yrow)| {
            let (cols, vals) = a.row(r);
            for (&k, &v) in cols.iter().zip(vals) {
                let xrow = x.row(k);
                let wv = w * v;
                for (ye, &xe) in yrow.iter_mut().zip(xrow.iter()) {
                    *ye += wv * xe;
                }
            }
        });
}
