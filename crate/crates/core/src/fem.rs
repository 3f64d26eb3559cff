//! Bilinear (Q1) finite elements on uniform tensor grids with homogeneous
//! Dirichlet boundary conditions imposed by eliminating boundary nodes.
//!
//! Coefficients enter as nodal vectors and are interpolated bilinearly per
//! element. Stiffness and load use 2x2 Gauss quadrature; the weighted mass
//! uses 3x3 because the product of two bilinear weights and two shape
//! functions is quartic per direction.

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::quadrature::gauss_legendre;

/// Uniform grid of n x n nodes on a rectangle; node id = iy * n + ix.
#[derive(Debug, Clone)]
pub struct GridMesh {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    /// Nodes per side; the nominal DOF count quoted in reports is n².
    pub n: usize,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// node id -> interior DOF id (boundary nodes have none)
    interior_of_node: Vec<Option<usize>>,
    /// interior DOF id -> node id
    node_of_interior: Vec<usize>,
}

pub fn build_mesh(x_range: (f64, f64), y_range: (f64, f64), n: usize) -> Result<GridMesh> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 nodes per side, got {n}"
        )));
    }
    if x_range.0 >= x_range.1 || y_range.0 >= y_range.1 {
        return Err(Error::InvalidArgument("empty rectangle".into()));
    }
    let grid = |r: (f64, f64)| -> Vec<f64> {
        (0..n)
            .map(|k| r.0 + (r.1 - r.0) * k as f64 / (n - 1) as f64)
            .collect()
    };
    let xs = grid(x_range);
    let ys = grid(y_range);
    let mut interior_of_node = vec![None; n * n];
    let mut node_of_interior = Vec::with_capacity((n - 2) * (n - 2));
    for iy in 1..n - 1 {
        for ix in 1..n - 1 {
            let node = iy * n + ix;
            interior_of_node[node] = Some(node_of_interior.len());
            node_of_interior.push(node);
        }
    }
    Ok(GridMesh {
        x_range,
        y_range,
        n,
        xs,
        ys,
        interior_of_node,
        node_of_interior,
    })
}

impl GridMesh {
    pub fn node_count(&self) -> usize {
        self.n * self.n
    }

    pub fn element_count(&self) -> usize {
        (self.n - 1) * (self.n - 1)
    }

    pub fn interior_count(&self) -> usize {
        self.node_of_interior.len()
    }

    pub fn hx(&self) -> f64 {
        (self.x_range.1 - self.x_range.0) / (self.n - 1) as f64
    }

    pub fn hy(&self) -> f64 {
        (self.y_range.1 - self.y_range.0) / (self.n - 1) as f64
    }

    pub fn node_coords(&self, node: usize) -> (f64, f64) {
        (self.xs[node % self.n], self.ys[node / self.n])
    }

    pub fn interior_node(&self, dof: usize) -> usize {
        self.node_of_interior[dof]
    }

    pub fn interior_dof(&self, node: usize) -> Option<usize> {
        self.interior_of_node[node]
    }

    /// Corner nodes of element (ex, ey), counterclockwise from lower-left.
    fn element_nodes(&self, ex: usize, ey: usize) -> [usize; 4] {
        let n = self.n;
        [
            ey * n + ex,
            ey * n + ex + 1,
            (ey + 1) * n + ex + 1,
            (ey + 1) * n + ex,
        ]
    }

    /// Keep interior values of a full nodal vector.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.node_of_interior.iter().map(|&s| full[s]).collect()
    }

    /// Scatter interior values into a full nodal vector with zero boundary.
    pub fn prolong(&self, interior: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.node_count()];
        for (dof, &node) in self.node_of_interior.iter().enumerate() {
            full[node] = interior[dof];
        }
        full
    }
}

// Q1 shape functions and reference-coordinate gradients at (xi, eta).
const CORNERS: [(f64, f64); 4] = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];

fn shape(xi: f64, eta: f64) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (a, &(cx, cy)) in CORNERS.iter().enumerate() {
        out[a] = 0.25 * (1.0 + cx * xi) * (1.0 + cy * eta);
    }
    out
}

fn shape_grad(xi: f64, eta: f64) -> [(f64, f64); 4] {
    let mut out = [(0.0, 0.0); 4];
    for (a, &(cx, cy)) in CORNERS.iter().enumerate() {
        out[a] = (0.25 * cx * (1.0 + cy * eta), 0.25 * cy * (1.0 + cx * xi));
    }
    out
}

/// Element stiffness with bilinearly interpolated coefficient, 2x2 Gauss.
fn element_stiffness(hx: f64, hy: f64, coeff: [f64; 4]) -> [[f64; 4]; 4] {
    let (pts, wts) = gauss_legendre(2);
    let jac = hx * hy / 4.0;
    let mut k = [[0.0; 4]; 4];
    for (iq, &xi) in pts.iter().enumerate() {
        for (jq, &eta) in pts.iter().enumerate() {
            let w = wts[iq] * wts[jq] * jac;
            let nv = shape(xi, eta);
            let c: f64 = (0..4).map(|a| nv[a] * coeff[a]).sum();
            let g = shape_grad(xi, eta);
            let phys: Vec<(f64, f64)> =
                g.iter().map(|&(gx, gy)| (gx * 2.0 / hx, gy * 2.0 / hy)).collect();
            for a in 0..4 {
                for b in 0..4 {
                    k[a][b] += w * c * (phys[a].0 * phys[b].0 + phys[a].1 * phys[b].1);
                }
            }
        }
    }
    k
}

/// Element mass with the product weight kappa_i kappa_j, 3x3 Gauss.
fn element_weighted_mass(hx: f64, hy: f64, ci: [f64; 4], cj: [f64; 4]) -> [[f64; 4]; 4] {
    let (pts, wts) = gauss_legendre(3);
    let jac = hx * hy / 4.0;
    let mut m = [[0.0; 4]; 4];
    for (iq, &xi) in pts.iter().enumerate() {
        for (jq, &eta) in pts.iter().enumerate() {
            let w = wts[iq] * wts[jq] * jac;
            let nv = shape(xi, eta);
            let wi: f64 = (0..4).map(|a| nv[a] * ci[a]).sum();
            let wj: f64 = (0..4).map(|a| nv[a] * cj[a]).sum();
            // multiply the weights first so swapping ci and cj is exact
            let wij = wi * wj;
            for a in 0..4 {
                for b in 0..4 {
                    m[a][b] += w * wij * nv[a] * nv[b];
                }
            }
        }
    }
    m
}

fn gather(coeff: &[f64], nodes: [usize; 4]) -> [f64; 4] {
    [coeff[nodes[0]], coeff[nodes[1]], coeff[nodes[2]], coeff[nodes[3]]]
}

fn assemble_elementwise(
    mesh: &GridMesh,
    interior_only: bool,
    mut element_matrix: impl FnMut(usize, usize, [usize; 4]) -> [[f64; 4]; 4],
) -> CsrMatrix {
    let mut triplets = Vec::new();
    for ey in 0..mesh.n - 1 {
        for ex in 0..mesh.n - 1 {
            let nodes = mesh.element_nodes(ex, ey);
            let ke = element_matrix(ex, ey, nodes);
            for a in 0..4 {
                for b in 0..4 {
                    if interior_only {
                        if let (Some(r), Some(c)) = (
                            mesh.interior_of_node[nodes[a]],
                            mesh.interior_of_node[nodes[b]],
                        ) {
                            triplets.push((r, c, ke[a][b]));
                        }
                    } else {
                        triplets.push((nodes[a], nodes[b], ke[a][b]));
                    }
                }
            }
        }
    }
    let dim = if interior_only {
        mesh.interior_count()
    } else {
        mesh.node_count()
    };
    CsrMatrix::from_triplets(dim, dim, &triplets)
}

fn check_nodal(mesh: &GridMesh, coeff: &[f64]) -> Result<()> {
    if coeff.len() != mesh.node_count() {
        return Err(Error::DimensionMismatch {
            expected: mesh.node_count(),
            found: coeff.len(),
        });
    }
    Ok(())
}

/// Stiffness matrix ∫ a ∇v_s·∇v_t restricted to interior DOFs.
pub fn assemble_stiffness(mesh: &GridMesh, coeff: &[f64]) -> Result<CsrMatrix> {
    check_nodal(mesh, coeff)?;
    Ok(assemble_elementwise(mesh, true, |_, _, nodes| {
        element_stiffness(mesh.hx(), mesh.hy(), gather(coeff, nodes))
    }))
}

/// Stiffness over all nodes, before boundary elimination.
pub fn assemble_stiffness_full(mesh: &GridMesh, coeff: &[f64]) -> Result<CsrMatrix> {
    check_nodal(mesh, coeff)?;
    Ok(assemble_elementwise(mesh, false, |_, _, nodes| {
        element_stiffness(mesh.hx(), mesh.hy(), gather(coeff, nodes))
    }))
}

/// Weighted mass matrix ∫ κ_i κ_j v_s v_t restricted to interior DOFs.
pub fn assemble_weighted_mass(mesh: &GridMesh, ci: &[f64], cj: &[f64]) -> Result<CsrMatrix> {
    check_nodal(mesh, ci)?;
    check_nodal(mesh, cj)?;
    Ok(assemble_elementwise(mesh, true, |_, _, nodes| {
        element_weighted_mass(mesh.hx(), mesh.hy(), gather(ci, nodes), gather(cj, nodes))
    }))
}

/// Weighted mass over all nodes.
pub fn assemble_weighted_mass_full(mesh: &GridMesh, ci: &[f64], cj: &[f64]) -> Result<CsrMatrix> {
    check_nodal(mesh, ci)?;
    check_nodal(mesh, cj)?;
    Ok(assemble_elementwise(mesh, false, |_, _, nodes| {
        element_weighted_mass(mesh.hx(), mesh.hy(), gather(ci, nodes), gather(cj, nodes))
    }))
}

/// The unit-coefficient mass matrix on interior DOFs (discrete L2 norms).
pub fn assemble_unit_mass(mesh: &GridMesh) -> CsrMatrix {
    let ones = vec![1.0; mesh.node_count()];
    assemble_weighted_mass(mesh, &ones, &ones).expect("unit mass")
}

fn load_vector(mesh: &GridMesh, source: &dyn Fn(f64, f64) -> f64) -> Vec<f64> {
    let (pts, wts) = gauss_legendre(2);
    let jac = mesh.hx() * mesh.hy() / 4.0;
    let mut full = vec![0.0; mesh.node_count()];
    for ey in 0..mesh.n - 1 {
        for ex in 0..mesh.n - 1 {
            let nodes = mesh.element_nodes(ex, ey);
            let x0 = mesh.xs[ex];
            let y0 = mesh.ys[ey];
            for (iq, &xi) in pts.iter().enumerate() {
                for (jq, &eta) in pts.iter().enumerate() {
                    let w = wts[iq] * wts[jq] * jac;
                    let x = x0 + 0.5 * (xi + 1.0) * mesh.hx();
                    let y = y0 + 0.5 * (eta + 1.0) * mesh.hy();
                    let f = source(x, y);
                    let nv = shape(xi, eta);
                    for a in 0..4 {
                        full[nodes[a]] += w * f * nv[a];
                    }
                }
            }
        }
    }
    full
}

/// Load vector ∫ f v_s on interior DOFs.
pub fn assemble_load(mesh: &GridMesh, source: &dyn Fn(f64, f64) -> f64) -> Vec<f64> {
    mesh.restrict(&load_vector(mesh, source))
}

/// Load vector over all nodes.
pub fn assemble_load_full(mesh: &GridMesh, source: &dyn Fn(f64, f64) -> f64) -> Vec<f64> {
    load_vector(mesh, source)
}
