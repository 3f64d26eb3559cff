//! Generalized polynomial chaos bookkeeping for i.i.d. uniform variables on
//! [-1, 1] (orthonormal Legendre basis) and exact assembly of the stochastic
//! coupling matrices.
//!
//! The coupling matrices G_ij(l, n) = E[xi_i Phi_l xi_j Phi_n] (with xi_0 = 1)
//! are assembled analytically from the three-term recurrence of the
//! orthonormal family, never by quadrature: multiplication by one variable
//! maps a basis polynomial to a two-term combination, so every entry is a sum
//! of at most two exact recurrence products.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

/// Exponents of one multivariate basis polynomial.
pub type MultiIndex = Vec<u32>;

/// The gPC space of total degree <= p in m variables.
#[derive(Debug, Clone)]
pub struct GpcBasis {
    pub m: usize,
    pub p: usize,
    /// Graded ordering (total degree ascending), descending lexicographic
    /// within each degree; the constant polynomial is first.
    pub indices: Vec<MultiIndex>,
    pub n_p: usize,
}

/// Recurrence coefficient of the orthonormal Legendre family on uniform
/// [-1, 1]: xi phi_k = beta_{k+1} phi_{k+1} + beta_k phi_{k-1}.
pub fn legendre_beta(k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument(
            "recurrence coefficient index must be >= 1".into(),
        ));
    }
    let kf = k as f64;
    Ok(kf / (4.0 * kf * kf - 1.0).sqrt())
}

/// Enumerate the multi-index set of total degree <= p in m variables.
pub fn enumerate_indices(m: usize, p: usize) -> Result<GpcBasis> {
    if m == 0 {
        return Err(Error::InvalidArgument(
            "number of random variables must be >= 1".into(),
        ));
    }
    let mut indices = Vec::new();
    let mut current = vec![0u32; m];
    for degree in 0..=p {
        push_degree(&mut current, 0, degree as u32, &mut indices);
    }
    let n_p = indices.len();
    debug_assert_eq!(n_p, binomial(m + p, p));
    Ok(GpcBasis { m, p, indices, n_p })
}

fn push_degree(current: &mut [u32], dim: usize, remaining: u32, out: &mut Vec<MultiIndex>) {
    if dim + 1 == current.len() {
        current[dim] = remaining;
        out.push(current.to_vec());
        return;
    }
    // descending loop keeps the within-degree order lexicographically largest
    // first, e.g. (2,0), (1,1), (0,2)
    for v in (0..=remaining).rev() {
        current[dim] = v;
        push_degree(current, dim + 1, remaining - v, out);
    }
}

pub fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as usize
}

impl GpcBasis {
    pub fn total_degree(&self, l: usize) -> u32 {
        self.indices[l].iter().sum()
    }

    /// Tabulate all basis polynomials at a realization.
    pub fn evaluate(&self, xi: &[f64]) -> Result<Vec<f64>> {
        if xi.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                found: xi.len(),
            });
        }
        // 1D orthonormal values per variable and degree
        let mut table = vec![vec![0.0; self.p + 1]; self.m];
        for (d, col) in table.iter_mut().enumerate() {
            col[0] = 1.0;
            if self.p >= 1 {
                col[1] = 3f64.sqrt() * xi[d];
            }
            for k in 1..self.p {
                let bk = legendre_beta(k).unwrap();
                let bk1 = legendre_beta(k + 1).unwrap();
                col[k + 1] = (xi[d] * col[k] - bk * col[k - 1]) / bk1;
            }
        }
        Ok(self
            .indices
            .iter()
            .map(|alpha| {
                alpha
                    .iter()
                    .enumerate()
                    .map(|(d, &a)| table[d][a as usize])
                    .product()
            })
            .collect())
    }
}

/// Expansion of xi_i * Phi_alpha in the orthonormal family (sparse, <= 2
/// terms). `i` is 1-based; i = 0 means multiplication by 1.
fn raise_lower(alpha: &MultiIndex, i: usize) -> Vec<(MultiIndex, f64)> {
    if i == 0 {
        return vec![(alpha.clone(), 1.0)];
    }
    let c = i - 1;
    let a = alpha[c] as usize;
    let mut out = Vec::with_capacity(2);
    let mut up = alpha.clone();
    up[c] += 1;
    out.push((up, legendre_beta(a + 1).unwrap()));
    if a > 0 {
        let mut down = alpha.clone();
        down[c] -= 1;
        out.push((down, legendre_beta(a).unwrap()));
    }
    out
}

/// Assemble G_ij(l, n) = E[xi_i Phi_l xi_j Phi_n], 0 <= i, j <= m.
///
/// Both sides are expanded with the recurrence; matching happens in the
/// extended index space (degree p+1 terms contribute to diagonal blocks even
/// though they lie outside the basis). Targets are visited in sorted order so
/// that G_ij(l, n) and G_ji(n, l) accumulate the identical floating-point sum.
pub fn assemble_g(i: usize, j: usize, basis: &GpcBasis) -> Result<CsrMatrix> {
    if i > basis.m || j > basis.m {
        return Err(Error::InvalidArgument(format!(
            "coordinate index out of range: ({i}, {j}) with m = {}",
            basis.m
        )));
    }
    // target multi-index -> (sources from the l side, sources from the n side)
    let mut targets: BTreeMap<MultiIndex, (Vec<(usize, f64)>, Vec<(usize, f64)>)> =
        BTreeMap::new();
    for (l, alpha) in basis.indices.iter().enumerate() {
        for (t, c) in raise_lower(alpha, i) {
            targets.entry(t).or_default().0.push((l, c));
        }
    }
    for (n, alpha) in basis.indices.iter().enumerate() {
        for (t, c) in raise_lower(alpha, j) {
            targets.entry(t).or_default().1.push((n, c));
        }
    }
    let mut triplets = Vec::new();
    for (_, (left, right)) in targets.iter() {
        for &(l, cl) in left {
            for &(n, cn) in right {
                triplets.push((l, n, cl * cn));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(basis.n_p, basis.n_p, &triplets))
}

/// h(l) = E[Phi_l]: the first standard unit vector.
pub fn assemble_h(basis: &GpcBasis) -> Vec<f64> {
    let mut h = vec![0.0; basis.n_p];
    h[0] = 1.0;
    h
}

/// All coupling matrices of one basis, indexed by the coordinate pair.
#[derive(Debug, Clone)]
pub struct StochGalerkinMatrices {
    pub m: usize,
    g: Vec<CsrMatrix>, // row-major over (i, j), (m+1) x (m+1)
    pub h: Vec<f64>,
}

impl StochGalerkinMatrices {
    pub fn assemble(basis: &GpcBasis) -> Result<StochGalerkinMatrices> {
        let m = basis.m;
        let mut g = Vec::with_capacity((m + 1) * (m + 1));
        for i in 0..=m {
            for j in 0..=m {
                g.push(assemble_g(i, j, basis)?);
            }
        }
        Ok(StochGalerkinMatrices {
            m,
            g,
            h: assemble_h(basis),
        })
    }

    pub fn g(&self, i: usize, j: usize) -> &CsrMatrix {
        &self.g[i * (self.m + 1) + j]
    }

    pub fn n_p(&self) -> usize {
        self.h.len()
    }
}
