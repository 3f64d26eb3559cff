//! Assembly of the affine operator families for the two problem classes:
//! diffusion with a KL-expanded coefficient, and a real-valued indefinite
//! Helmholtz-type problem with a KL-expanded wavenumber, both with
//! homogeneous Dirichlet boundary conditions.

use crate::error::{Error, Result};
use crate::fem::{self, GridMesh};
use crate::gpc::{GpcBasis, StochGalerkinMatrices};
use crate::linalg::CsrMatrix;
use crate::randfield::KlField;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    /// -div(a grad u) = f with a = KL field (no reaction term).
    Diffusion,
    /// -lap u - kappa^2 u = f with kappa = KL field.
    HelmholtzDirichlet,
}

/// The xi-independent physical-space building blocks.
#[derive(Debug, Clone)]
pub struct PhysicalOperators {
    /// A_0..A_m, interior DOFs, symmetric.
    pub a_mats: Vec<CsrMatrix>,
    /// B_ij stored once per i <= j (B_ij = B_ji since the weight product
    /// commutes); empty when there is no reaction term.
    pub b_mats: Vec<(usize, usize, CsrMatrix)>,
    pub load: Vec<f64>,
}

impl PhysicalOperators {
    pub fn m(&self) -> usize {
        self.a_mats.len() - 1
    }

    pub fn n_h(&self) -> usize {
        self.load.len()
    }

    pub fn b(&self, i: usize, j: usize) -> Option<&CsrMatrix> {
        let key = (i.min(j), i.max(j));
        self.b_mats
            .iter()
            .find(|(bi, bj, _)| (*bi, *bj) == key)
            .map(|(_, _, m)| m)
    }

    /// A_xi = sum_i A_i xi_i - sum_ij B_ij xi_i xi_j, with xi_0 = 1.
    pub fn parameter_matrix(&self, xi: &[f64]) -> Result<CsrMatrix> {
        if xi.len() != self.m() {
            return Err(Error::DimensionMismatch {
                expected: self.m(),
                found: xi.len(),
            });
        }
        let coeff = |i: usize| if i == 0 { 1.0 } else { xi[i - 1] };
        let mut terms: Vec<(f64, &CsrMatrix)> = Vec::new();
        for (i, a) in self.a_mats.iter().enumerate() {
            let w = coeff(i);
            if w != 0.0 && a.nnz() > 0 {
                terms.push((w, a));
            }
        }
        for (i, j, b) in &self.b_mats {
            let mut w = coeff(*i) * coeff(*j);
            if i != j {
                w *= 2.0; // (i, j) and (j, i) contribute equally
            }
            if w != 0.0 {
                terms.push((-w, b));
            }
        }
        Ok(CsrMatrix::linear_combination(&terms))
    }

    /// The operator at the mean parameter xi = 0: A_0 - B_00.
    pub fn mean_matrix(&self) -> CsrMatrix {
        match self.b(0, 0) {
            Some(b00) => CsrMatrix::linear_combination(&[(1.0, &self.a_mats[0]), (-1.0, b00)]),
            None => self.a_mats[0].clone(),
        }
    }
}

/// A fully assembled problem: mesh, random field, gPC basis and both matrix
/// families.
#[derive(Debug, Clone)]
pub struct AffineProblem {
    pub kind: ProblemKind,
    pub mesh: GridMesh,
    pub field: KlField,
    pub basis: GpcBasis,
    pub ops: PhysicalOperators,
    pub gmats: StochGalerkinMatrices,
}

impl AffineProblem {
    pub fn n_h(&self) -> usize {
        self.ops.n_h()
    }

    pub fn n_p(&self) -> usize {
        self.basis.n_p
    }

    pub fn m(&self) -> usize {
        self.field.m
    }
}

/// Diffusion problem: A_i = stiffness with the i-th affine coefficient,
/// no B matrices.
pub fn build_diffusion(
    mesh: GridMesh,
    field: KlField,
    basis: GpcBasis,
    source: &dyn Fn(f64, f64) -> f64,
) -> Result<AffineProblem> {
    check_problem_dims(&mesh, &field, &basis)?;
    let margin = field.min_coefficient_margin();
    if margin <= 0.0 {
        // Worst-case corners of [-1,1]^m make the truncated field dip
        // negative; the coupled Galerkin matrix usually stays SPD anyway and
        // PCG reports a breakdown if it does not.
        log::warn!(
            "diffusion coefficient not uniformly positive: worst-case margin {margin:.4e}"
        );
    }
    let gmats = StochGalerkinMatrices::assemble(&basis)?;
    let coeffs = field.affine_coefficients();
    let mut a_mats = Vec::with_capacity(field.m + 1);
    for c in &coeffs {
        a_mats.push(fem::assemble_stiffness(&mesh, c)?);
    }
    let load = fem::assemble_load(&mesh, source);
    Ok(AffineProblem {
        kind: ProblemKind::Diffusion,
        mesh,
        field,
        basis,
        ops: PhysicalOperators {
            a_mats,
            b_mats: Vec::new(),
            load,
        },
        gmats,
    })
}

/// Helmholtz-type problem: A_0 is the plain Laplacian, A_i = 0 for i >= 1,
/// B_ij = mass weighted by kappa_i kappa_j.
pub fn build_helmholtz(
    mesh: GridMesh,
    field: KlField,
    basis: GpcBasis,
    source: &dyn Fn(f64, f64) -> f64,
) -> Result<AffineProblem> {
    check_problem_dims(&mesh, &field, &basis)?;
    let gmats = StochGalerkinMatrices::assemble(&basis)?;
    let n_h = mesh.interior_count();
    let ones = vec![1.0; mesh.node_count()];
    let mut a_mats = vec![fem::assemble_stiffness(&mesh, &ones)?];
    for _ in 0..field.m {
        a_mats.push(CsrMatrix::zeros(n_h, n_h));
    }
    let kappas = field.affine_coefficients();
    let mut b_mats = Vec::with_capacity((field.m + 1) * (field.m + 2) / 2);
    for i in 0..=field.m {
        for j in i..=field.m {
            b_mats.push((i, j, fem::assemble_weighted_mass(&mesh, &kappas[i], &kappas[j])?));
        }
    }
    let load = fem::assemble_load(&mesh, source);
    Ok(AffineProblem {
        kind: ProblemKind::HelmholtzDirichlet,
        mesh,
        field,
        basis,
        ops: PhysicalOperators {
            a_mats,
            b_mats,
            load,
        },
        gmats,
    })
}

fn check_problem_dims(mesh: &GridMesh, field: &KlField, basis: &GpcBasis) -> Result<()> {
    if field.modes[0].len() != mesh.node_count() {
        return Err(Error::DimensionMismatch {
            expected: mesh.node_count(),
            found: field.modes[0].len(),
        });
    }
    if basis.m != field.m {
        return Err(Error::DimensionMismatch {
            expected: field.m,
            found: basis.m,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::build_mesh;
    use crate::gpc::enumerate_indices;
    use crate::randfield::kl_2d;

    pub(crate) fn small_diffusion(n: usize, m: usize, p: usize) -> AffineProblem {
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

    pub(crate) fn small_helmholtz(n: usize, m: usize, p: usize) -> AffineProblem {
        let mesh = build_mesh((0.0, 1.0), (0.0, 1.0), n).unwrap();
        let mu = 8.0 * std::f64::consts::PI;
        let field = kl_2d(
            [4.0, 4.0],
            (0.0, 1.0),
            (0.0, 1.0),
            m,
            &mesh.xs,
            &mesh.ys,
            mu,
            0.1 * mu,
        )
        .unwrap();
        let basis = enumerate_indices(m, p).unwrap();
        let s = 32.0;
        build_helmholtz(mesh, field, basis, &move |x, y| {
            (-(s * s) * ((x - 0.5).powi(2) + (y - 0.5).powi(2))).exp()
        })
        .unwrap()
    }

    #[test]
    fn diffusion_shapes() {
        let p = small_diffusion(5, 2, 2);
        assert_eq!(p.n_h(), 9);
        assert_eq!(p.n_p(), 6);
        assert_eq!(p.ops.a_mats.len(), 3);
        assert!(p.ops.b_mats.is_empty());
        assert_eq!(p.gmats.n_p(), 6);
    }

    #[test]
    fn helmholtz_shapes() {
        let p = small_helmholtz(5, 2, 2);
        assert_eq!(p.ops.a_mats.len(), 3);
        assert_eq!(p.ops.a_mats[1].nnz(), 0);
        assert_eq!(p.ops.b_mats.len(), 6);
        assert!(p.ops.b(1, 0).is_some());
        assert_eq!(
            p.ops.b(1, 0).unwrap() as *const _,
            p.ops.b(0, 1).unwrap() as *const _
        );
    }

    #[test]
    fn parameter_matrix_at_zero_is_mean_matrix() {
        for prob in [small_diffusion(5, 2, 1), small_helmholtz(5, 2, 1)] {
            let a0 = prob.ops.parameter_matrix(&[0.0, 0.0]).unwrap();
            let mean = prob.ops.mean_matrix();
            for r in 0..a0.nrows() {
                for c in 0..a0.ncols() {
                    assert!((a0.get(r, c) - mean.get(r, c)).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn parameter_matrix_matches_direct_sum() {
        let prob = small_helmholtz(4, 2, 1);
        let xi = [0.7, -0.4];
        let a = prob.ops.parameter_matrix(&xi).unwrap();
        // direct evaluation with the full (i, j) double loop
        let coeff = |i: usize| if i == 0 { 1.0 } else { xi[i - 1] };
        let nh = prob.n_h();
        let mut dense = ndarray::Array2::<f64>::zeros((nh, nh));
        for (i, am) in prob.ops.a_mats.iter().enumerate() {
            dense.scaled_add(coeff(i), &am.to_dense());
        }
        for i in 0..=2usize {
            for j in 0..=2usize {
                dense.scaled_add(-coeff(i) * coeff(j), &prob.ops.b(i, j).unwrap().to_dense());
            }
        }
        for r in 0..nh {
            for c in 0..nh {
                assert!((a.get(r, c) - dense[[r, c]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mean_helmholtz_operator_is_indefinite() {
        // kappa_0 = 8*pi on the unit square sits well inside the Laplacian
        // spectrum, so A_0 - B_00 must be indefinite (LU, not Cholesky).
        let prob = small_helmholtz(17, 2, 1);
        let mean = prob.ops.mean_matrix();
        assert!(crate::linalg::BandedCholesky::factor(&mean).is_err());
        assert!(crate::linalg::BandedLu::factor(&mean).is_ok());
    }

    #[test]
    fn field_modes_have_unit_discrete_norm_under_fem_mass() {
        // validates that the per-axis normalization in randfield agrees with
        // the assembled 2D unit mass matrix
        let mesh = build_mesh((-1.0, 1.0), (-1.0, 1.0), 9).unwrap();
        let field = kl_2d(
            [1.0, 1.0],
            (-1.0, 1.0),
            (-1.0, 1.0),
            4,
            &mesh.xs,
            &mesh.ys,
            0.2,
            0.1,
        )
        .unwrap();
        let ones = vec![1.0; mesh.node_count()];
        let mass = fem::assemble_weighted_mass_full(&mesh, &ones, &ones).unwrap();
        for mode in &field.modes {
            let mv = mass.mul_vec(mode);
            let norm2: f64 = mv.iter().zip(mode).map(|(a, b)| a * b).sum();
            assert!((norm2.sqrt() - 1.0).abs() < 1e-8, "{}", norm2.sqrt());
        }
    }
}
