//! Fine-grid finite element operators.

pub mod assembly;
pub mod permeability;
pub mod reference;
pub mod sparse;

use nalgebra::DVector;
use nalgebra_sparse::CsrMatrix;

pub use assembly::{assemble_mass, assemble_stiffness, ElementMatrices};
pub use permeability::PermeabilityField;
pub use reference::{solve_reference, FineSystem};

use crate::error::Result;
use crate::grid::StructuredMesh;
use sparse::{spmv, submatrix, SparseCholesky};

/// Fine mass and stiffness matrices on all nodes plus the Dirichlet split.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub mesh: StructuredMesh,
    pub mass: CsrMatrix<f64>,
    pub stiffness: CsrMatrix<f64>,
    pub boundary: Vec<usize>,
    pub interior: Vec<usize>,
}

impl OperatorSet {
    pub fn assemble(mesh: &StructuredMesh, kappa: &PermeabilityField) -> Result<Self> {
        Ok(Self {
            mesh: *mesh,
            mass: assemble_mass(mesh),
            stiffness: assemble_stiffness(mesh, kappa)?,
            boundary: mesh.boundary_nodes(),
            interior: mesh.interior_nodes(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.mesh.node_count()
    }

    /// `M f` for a nodal field `f`.
    pub fn load_vector(&self, f: &[f64]) -> DVector<f64> {
        spmv(&self.mass, f)
    }

    /// Restricts `matrix` and `rhs` to interior nodes (homogeneous Dirichlet data).
    pub fn apply_dirichlet(&self, matrix: &CsrMatrix<f64>, rhs: &[f64]) -> DirichletSystem {
        DirichletSystem {
            matrix: submatrix(matrix, &self.interior, &self.interior),
            rhs: DVector::from_iterator(self.interior.len(), self.interior.iter().map(|&i| rhs[i])),
            interior: self.interior.clone(),
            node_count: self.node_count(),
        }
    }
}

/// A linear system on interior unknowns with zero boundary values.
#[derive(Debug, Clone)]
pub struct DirichletSystem {
    pub matrix: CsrMatrix<f64>,
    pub rhs: DVector<f64>,
    pub interior: Vec<usize>,
    pub node_count: usize,
}

impl DirichletSystem {
    pub fn unknowns(&self) -> usize {
        self.interior.len()
    }

    /// Solves the (symmetric positive definite) system and returns the full
    /// nodal field with zeros on the boundary.
    pub fn solve(&self) -> Result<DVector<f64>> {
        let mut x = self.rhs.as_slice().to_vec();
        SparseCholesky::factor(&self.matrix)?.solve_in_place(&mut x);
        Ok(self.expand(&x))
    }

    pub fn expand(&self, x: &[f64]) -> DVector<f64> {
        let mut full = DVector::zeros(self.node_count);
        for (&node, &v) in self.interior.iter().zip(x) {
            full[node] = v;
        }
        full
    }
}
