//! Bilinear quadrilateral element integrals and global assembly.

use nalgebra_sparse::CsrMatrix;
use rayon::prelude::*;

use super::permeability::PermeabilityField;
use super::sparse::csr_from_triplets;
use crate::error::Result;
use crate::grid::StructuredMesh;

/// 2-point Gauss abscissae on [0, 1]; each carries weight 1/2.
pub(crate) fn gauss2() -> [f64; 2] {
    let d = 0.5 / 3f64.sqrt();
    [0.5 - d, 0.5 + d]
}

/// Bilinear shape functions at reference point (ξ, η) in [0,1]², corner order
/// matching [`StructuredMesh::cell_nodes`].
#[inline]
pub(crate) fn shape(xi: f64, eta: f64) -> [f64; 4] {
    [
        (1.0 - xi) * (1.0 - eta),
        xi * (1.0 - eta),
        xi * eta,
        (1.0 - xi) * eta,
    ]
}

/// Reference gradients (d/dξ, d/dη) of the shape functions.
#[inline]
pub(crate) fn shape_grad(xi: f64, eta: f64) -> [[f64; 2]; 4] {
    [
        [-(1.0 - eta), -(1.0 - xi)],
        [1.0 - eta, -xi],
        [eta, xi],
        [-eta, 1.0 - xi],
    ]
}

/// Element mass and unit-coefficient stiffness for an `hx × hy` cell.
#[derive(Debug, Clone, Copy)]
pub struct ElementMatrices {
    pub mass: [[f64; 4]; 4],
    pub stiffness: [[f64; 4]; 4],
}

impl ElementMatrices {
    pub fn new(hx: f64, hy: f64) -> Self {
        let g = gauss2();
        let w = 0.25 * hx * hy;
        let mut mass = [[0.0; 4]; 4];
        let mut stiffness = [[0.0; 4]; 4];
        for &xi in &g {
            for &eta in &g {
                let n = shape(xi, eta);
                let dn = shape_grad(xi, eta);
                for a in 0..4 {
                    for b in 0..4 {
                        mass[a][b] += w * n[a] * n[b];
                        stiffness[a][b] += w
                            * (dn[a][0] * dn[b][0] / (hx * hx) + dn[a][1] * dn[b][1] / (hy * hy));
                    }
                }
            }
        }
        Self { mass, stiffness }
    }

    pub fn for_mesh(mesh: &StructuredMesh) -> Self {
        Self::new(mesh.hx(), mesh.hy())
    }
}

#[derive(Debug, Clone, Copy)]
pub enum ElementKind {
    Mass,
    Stiffness,
}

/// Assembles `Σ_cells weight(cell) · element` over all fine cells. Work is
/// split into row bands in parallel and the triplets are concatenated in band
/// order, so the result does not depend on the thread count.
fn assemble_global(
    mesh: &StructuredMesh,
    kind: ElementKind,
    weight: impl Fn(usize) -> f64 + Sync,
) -> CsrMatrix<f64> {
    let el = ElementMatrices::for_mesh(mesh);
    let local = match kind {
        ElementKind::Mass => el.mass,
        ElementKind::Stiffness => el.stiffness,
    };
    let bands: Vec<Vec<(usize, usize, f64)>> = (0..mesh.ny)
        .into_par_iter()
        .map(|cj| {
            let mut t = Vec::with_capacity(16 * mesh.nx);
            for ci in 0..mesh.nx {
                let cell = mesh.cell_id(ci, cj);
                let w = weight(cell);
                let nodes = mesh.cell_nodes(cell);
                for a in 0..4 {
                    for b in 0..4 {
                        t.push((nodes[a], nodes[b], w * local[a][b]));
                    }
                }
            }
            t
        })
        .collect();
    let n = mesh.node_count();
    csr_from_triplets(n, n, bands.into_iter().flatten())
}

/// Consistent mass matrix on all fine nodes.
pub fn assemble_mass(mesh: &StructuredMesh) -> CsrMatrix<f64> {
    assemble_global(mesh, ElementKind::Mass, |_| 1.0)
}

/// Stiffness matrix with κ constant on each fine cell.
pub fn assemble_stiffness(mesh: &StructuredMesh, kappa: &PermeabilityField) -> Result<CsrMatrix<f64>> {
    kappa.check_mesh(mesh)?;
    Ok(assemble_global(mesh, ElementKind::Stiffness, |c| kappa.cell(c)))
}

/// Assembles over a subset of cells into a local numbering. `local_index`
/// maps a global node to its local row, or `None` to drop it (used to impose
/// homogeneous Dirichlet data on a subdomain boundary).
pub fn assemble_local(
    mesh: &StructuredMesh,
    cells: &[usize],
    n_local: usize,
    local_index: impl Fn(usize) -> Option<usize>,
    kind: ElementKind,
    weight: impl Fn(usize) -> f64,
) -> CsrMatrix<f64> {
    let el = ElementMatrices::for_mesh(mesh);
    let local = match kind {
        ElementKind::Mass => el.mass,
        ElementKind::Stiffness => el.stiffness,
    };
    let mut t = Vec::with_capacity(16 * cells.len());
    for &cell in cells {
        let w = weight(cell);
        let nodes = mesh.cell_nodes(cell).map(&local_index);
        for a in 0..4 {
            let Some(ra) = nodes[a] else { continue };
            for b in 0..4 {
                let Some(rb) = nodes[b] else { continue };
                t.push((ra, rb, w * local[a][b]));
            }
        }
    }
    csr_from_triplets(n_local, n_local, t)
}
