//! Constraint energy minimizing multiscale basis.
//!
//! Each coarse block carries a local spectral problem `a_i φ = λ s_i φ` whose
//! lowest eigenfunctions form the auxiliary space. A basis column for the
//! auxiliary function `(i, j)` is the energy minimizer on the oversampled
//! region `K_i^m`, vanishing on its boundary, that is `s`-orthogonal to every
//! auxiliary function of the blocks inside `K_i^m` except `(i, j)`, with
//! `s(φ, φ_j^{(i)}) = 1`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fem::assembly::{assemble_local, gauss2, shape_grad, ElementKind};
use crate::fem::sparse::{spmm, to_dense, SparseCholesky};
use crate::fem::{OperatorSet, PermeabilityField};
use crate::grid::{OversampleRegion, StructuredMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisParams {
    /// Auxiliary eigenfunctions kept per block.
    pub eigen_count: usize,
    /// Oversampling layers.
    pub layers: usize,
}

impl Default for BasisParams {
    fn default() -> Self {
        Self {
            eigen_count: 4,
            layers: 4,
        }
    }
}

/// Bilinear coarse hat functions as fine nodal fields, one per coarse node.
pub fn partition_of_unity(mesh: &StructuredMesh) -> Vec<DVector<f64>> {
    let (tx, ty) = mesh.block_tile();
    let mut out = Vec::with_capacity(mesh.coarse_node_count());
    for cj in 0..=mesh.ncy {
        for ci in 0..=mesh.ncx {
            let v = DVector::from_fn(mesh.node_count(), |id, _| {
                let (i, j) = mesh.node_ij(id);
                let sx = (i as f64 / tx as f64 - ci as f64).abs();
                let sy = (j as f64 / ty as f64 - cj as f64).abs();
                (1.0 - sx).max(0.0) * (1.0 - sy).max(0.0)
            });
            out.push(v);
        }
    }
    out
}

/// Cell averages of `κ Σ_i |∇χ_i|²`. Inside one coarse block only its four
/// corner hats are active, and their gradients are bilinear, so 2×2 Gauss
/// integrates the squared sum exactly.
pub fn kappa_tilde(mesh: &StructuredMesh, kappa: &PermeabilityField) -> Result<Vec<f64>> {
    kappa.check_mesh(mesh)?;
    let (tx, ty) = mesh.block_tile();
    let (hx_c, hy_c) = (1.0 / mesh.ncx as f64, 1.0 / mesh.ncy as f64);
    let g = gauss2();
    Ok((0..mesh.cell_count())
        .map(|cell| {
            let (ci, cj) = mesh.cell_ij(cell);
            let mut acc = 0.0;
            for &xi in &g {
                for &eta in &g {
                    // Local coordinates of the quadrature point inside its coarse block.
                    let s = ((ci % tx) as f64 + xi) / tx as f64;
                    let t = ((cj % ty) as f64 + eta) / ty as f64;
                    let grad_sq: f64 = shape_grad(s, t)
                        .iter()
                        .map(|d| (d[0] / hx_c).powi(2) + (d[1] / hy_c).powi(2))
                        .sum();
                    acc += 0.25 * grad_sq;
                }
            }
            kappa.cell(cell) * acc
        })
        .collect())
}

/// Retained eigenpairs of one block's auxiliary problem.
#[derive(Debug, Clone)]
pub struct BlockEigen {
    pub block: usize,
    /// Fine nodes of the closed block, ascending; rows of `vectors` and of the
    /// local matrices follow this order.
    pub nodes: Vec<usize>,
    pub values: Vec<f64>,
    /// First discarded eigenvalue `λ_{L+1}`.
    pub next: f64,
    pub vectors: DMatrix<f64>,
    /// Local `s_i` matrix (dense).
    pub s: DMatrix<f64>,
    /// Local `a_i` matrix (dense).
    pub a: DMatrix<f64>,
}

impl BlockEigen {
    /// `s_i φ_j` as a local vector.
    pub fn weighted(&self, j: usize) -> DVector<f64> {
        &self.s * self.vectors.column(j)
    }
}

#[derive(Debug, Clone)]
pub struct AuxiliarySpace {
    pub blocks: Vec<BlockEigen>,
    pub kappa_tilde: Vec<f64>,
    /// `min_i λ_{L+1}^{(i)}`.
    pub lambda: f64,
}

fn block_local_matrices(
    mesh: &StructuredMesh,
    kappa: &PermeabilityField,
    kt: &[f64],
    block: usize,
) -> (Vec<usize>, DMatrix<f64>, DMatrix<f64>) {
    let nodes = mesh.block_nodes(block);
    let cells = mesh.block_cells(block);
    let index = |g: usize| nodes.binary_search(&g).ok();
    let a = assemble_local(mesh, &cells, nodes.len(), index, ElementKind::Stiffness, |c| kappa.cell(c));
    let s = assemble_local(mesh, &cells, nodes.len(), index, ElementKind::Mass, |c| kt[c]);
    (nodes, to_dense(&a), to_dense(&s))
}

/// Dense symmetric-definite eigensolve through the Cholesky factor of `s`.
fn generalized_eigen(a: &DMatrix<f64>, s: &DMatrix<f64>, block: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let chol = s.clone().cholesky().ok_or_else(|| Error::Eigen {
        block,
        reason: "weighted mass matrix is not positive definite".into(),
    })?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Eigen {
            block,
            reason: "singular Cholesky factor".into(),
        })?;
    let c = &l_inv * a * l_inv.transpose();
    let c = 0.5 * (&c + c.transpose());
    let dim = c.nrows();
    let eig = c.symmetric_eigen();
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen {
            block,
            reason: "non-finite eigenvalue".into(),
        });
    }
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&p, &q| eig.eigenvalues[p].total_cmp(&eig.eigenvalues[q]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let y = DMatrix::from_fn(dim, order.len(), |r, k| eig.eigenvectors[(r, order[k])]);
    let mut vecs = l_inv.transpose() * y;
    for mut col in vecs.column_iter_mut() {
        let imax = col.iamax();
        if col[imax] < 0.0 {
            col.neg_mut();
        }
    }
    Ok((values, vecs))
}

/// Lowest `count` eigenpairs of block `block` plus the next eigenvalue.
pub fn solve_auxiliary_spectral(
    mesh: &StructuredMesh,
    kappa: &PermeabilityField,
    kt: &[f64],
    block: usize,
    count: usize,
) -> Result<BlockEigen> {
    let (nodes, a, s) = block_local_matrices(mesh, kappa, kt, block);
    if count + 1 > nodes.len() {
        return Err(Error::Config(format!(
            "block {block} has {} nodes, cannot keep {count} eigenfunctions plus one discarded",
            nodes.len()
        )));
    }
    let (values, vecs) = generalized_eigen(&a, &s, block)?;
    Ok(BlockEigen {
        block,
        nodes,
        values: values[..count].to_vec(),
        next: values[count],
        vectors: vecs.columns(0, count).into_owned(),
        s,
        a,
    })
}

pub fn build_auxiliary_space(
    mesh: &StructuredMesh,
    kappa: &PermeabilityField,
    count: usize,
) -> Result<AuxiliarySpace> {
    let kt = kappa_tilde(mesh, kappa)?;
    let blocks = (0..mesh.block_count())
        .into_par_iter()
        .map(|b| solve_auxiliary_spectral(mesh, kappa, &kt, b, count))
        .collect::<Result<Vec<_>>>()?;
    let lambda = blocks.iter().map(|b| b.next).fold(f64::INFINITY, f64::min);
    Ok(AuxiliarySpace {
        blocks,
        kappa_tilde: kt,
        lambda,
    })
}

/// Basis columns for all auxiliary functions of `block`, as
/// `(interior nodes of K_i^m, values)` with one column per eigenfunction.
///
/// The saddle system `[A Bᵀ; B 0]` is reduced to its Schur complement
/// `B A⁻¹ Bᵀ`, which is positive definite exactly when `B` has full row rank.
pub fn solve_constrained_minimization(
    mesh: &StructuredMesh,
    kappa: &PermeabilityField,
    aux: &AuxiliarySpace,
    block: usize,
    layers: usize,
) -> Result<(Vec<usize>, DMatrix<f64>)> {
    let region = mesh.oversample(block, layers)?;
    let inner = region.blocks(mesh);
    minimize_on(mesh, kappa, aux, block, &region, &inner)
}

/// Minimizer over `region` with constraints from the auxiliary functions of
/// `constrained` (which must contain `block`).
fn minimize_on(
    mesh: &StructuredMesh,
    kappa: &PermeabilityField,
    aux: &AuxiliarySpace,
    block: usize,
    region: &OversampleRegion,
    constrained: &[usize],
) -> Result<(Vec<usize>, DMatrix<f64>)> {
    let interior = &region.interior;
    let cells = region.cells(mesh);
    let index = |g: usize| interior.binary_search(&g).ok();
    let a = assemble_local(mesh, &cells, interior.len(), index, ElementKind::Stiffness, |c| kappa.cell(c));

    let l = aux.blocks[block].values.len();
    let ncon = constrained.len() * l;
    let mut bt = DMatrix::<f64>::zeros(interior.len(), ncon);
    let mut own = None;
    for (k, &b) in constrained.iter().enumerate() {
        if b == block {
            own = Some(k * l);
        }
        let eig = &aux.blocks[b];
        for j in 0..l {
            let w = eig.weighted(j);
            for (r, &node) in eig.nodes.iter().enumerate() {
                if let Some(row) = index(node) {
                    bt[(row, k * l + j)] = w[r];
                }
            }
        }
    }
    let own = own.ok_or_else(|| Error::Config(format!("block {block} is not among its own constraints")))?;

    let chol = SparseCholesky::factor(&a)?;
    let mut z = bt.clone();
    chol.solve_matrix_in_place(&mut z);
    let mut schur = bt.transpose() * &z;
    schur = 0.5 * (&schur + schur.transpose());
    let sc = schur.cholesky().ok_or(Error::SingularSaddle {
        block,
        constraints: ncon,
    })?;
    let mut rhs = DMatrix::<f64>::zeros(ncon, l);
    for j in 0..l {
        rhs[(own + j, j)] = 1.0;
    }
    let mu = sc.solve(&rhs);
    Ok((interior.clone(), z * mu))
}

/// Column metadata of `R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnInfo {
    pub block: usize,
    pub local: usize,
    pub layers: usize,
}

#[derive(Debug, Clone)]
pub struct MultiscaleSpace {
    pub mesh: StructuredMesh,
    pub params: BasisParams,
    /// `R`, fine nodes × coarse dofs; zero rows on the Dirichlet boundary.
    pub basis: DMatrix<f64>,
    pub columns: Vec<ColumnInfo>,
    pub lambda: f64,
    pub kappa_checksum: [u8; 32],
    /// Present when built in this process; not stored in the cache file.
    pub auxiliary: Option<AuxiliarySpace>,
}

pub fn kappa_checksum(kappa: &PermeabilityField) -> [u8; 32] {
    let mut h = Sha256::new();
    let (nx, ny) = kappa.dims();
    h.update((nx as u64).to_le_bytes());
    h.update((ny as u64).to_le_bytes());
    h.update(kappa.to_le_bytes());
    h.finalize().into()
}

pub fn build_multiscale_space(
    mesh: &StructuredMesh,
    kappa: &PermeabilityField,
    params: BasisParams,
) -> Result<MultiscaleSpace> {
    if params.eigen_count == 0 {
        return Err(Error::Config("at least one auxiliary function per block is required".into()));
    }
    let aux = build_auxiliary_space(mesh, kappa, params.eigen_count)?;
    let per_block = (0..mesh.block_count())
        .into_par_iter()
        .map(|b| solve_constrained_minimization(mesh, kappa, &aux, b, params.layers))
        .collect::<Result<Vec<_>>>()?;
    let l = params.eigen_count;
    let nr = mesh.block_count() * l;
    let mut basis = DMatrix::<f64>::zeros(mesh.node_count(), nr);
    let mut columns = Vec::with_capacity(nr);
    for (b, (nodes, vals)) in per_block.into_iter().enumerate() {
        for j in 0..l {
            let col = b * l + j;
            for (r, &node) in nodes.iter().enumerate() {
                basis[(node, col)] = vals[(r, j)];
            }
            columns.push(ColumnInfo {
                block: b,
                local: j,
                layers: params.layers,
            });
        }
    }
    Ok(MultiscaleSpace {
        mesh: *mesh,
        params,
        basis,
        columns,
        lambda: aux.lambda,
        kappa_checksum: kappa_checksum(kappa),
        auxiliary: Some(aux),
    })
}

/// Galerkin operators of a multiscale space.
#[derive(Debug, Clone)]
pub struct CoarseOperators {
    /// `RᵀMR`.
    pub mass: DMatrix<f64>,
    /// `RᵀAR`.
    pub stiffness: DMatrix<f64>,
    /// `MR`, used to project nodal loads: `Rᵀ M f = (MR)ᵀ f`.
    pub mass_basis: DMatrix<f64>,
}

impl MultiscaleSpace {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn coarse_operators(&self, ops: &OperatorSet) -> CoarseOperators {
        let mr = spmm(&ops.mass, &self.basis);
        let ar = spmm(&ops.stiffness, &self.basis);
        let sym = |m: DMatrix<f64>| 0.5 * (&m + m.transpose());
        CoarseOperators {
            mass: sym(self.basis.transpose() * &mr),
            stiffness: sym(self.basis.transpose() * &ar),
            mass_basis: mr,
        }
    }

    /// Fine nodal field `R c`.
    pub fn prolong(&self, c: &DVector<f64>) -> DVector<f64> {
        &self.basis * c
    }

    /// `s(column, φ_{j'}^{(i')})` for every auxiliary function, as a dense
    /// matrix (auxiliary functions × columns). Ideally the identity restricted
    /// to each column's oversampling region.
    pub fn constraint_matrix(&self) -> Option<DMatrix<f64>> {
        let aux = self.auxiliary.as_ref()?;
        let l = self.params.eigen_count;
        let mut out = DMatrix::zeros(aux.blocks.len() * l, self.dim());
        for eig in &aux.blocks {
            for j in 0..l {
                let w = eig.weighted(j);
                for col in 0..self.dim() {
                    let v: f64 = eig
                        .nodes
                        .iter()
                        .zip(w.iter())
                        .map(|(&n, &wv)| self.basis[(n, col)] * wv)
                        .sum();
                    out[(eig.block * l + j, col)] = v;
                }
            }
        }
        Some(out)
    }

    /// For each column, the fraction of its energy `a(φ, φ)` carried by the
    /// outermost coarse layer of its oversampling region. Small values
    /// indicate the exponential decay the localization relies on.
    pub fn outer_layer_energy(&self, kappa: &PermeabilityField) -> Result<Vec<f64>> {
        let mesh = &self.mesh;
        let mut out = Vec::with_capacity(self.dim());
        for (col, info) in self.columns.iter().enumerate() {
            if info.layers == 0 {
                out.push(1.0);
                continue;
            }
            let outer = mesh.oversample(info.block, info.layers)?;
            let inner = mesh.oversample(info.block, info.layers - 1)?;
            let inner_cells = inner.cells(mesh);
            let el = crate::fem::ElementMatrices::for_mesh(mesh).stiffness;
            let (mut total, mut ring) = (0.0, 0.0);
            for cell in outer.cells(mesh) {
                let nodes = mesh.cell_nodes(cell);
                let mut e = 0.0;
                for a in 0..4 {
                    for b in 0..4 {
                        e += self.basis[(nodes[a], col)] * el[a][b] * self.basis[(nodes[b], col)];
                    }
                }
                e *= kappa.cell(cell);
                total += e;
                if inner_cells.binary_search(&cell).is_err() {
                    ring += e;
                }
            }
            out.push(if total > 0.0 { ring / total } else { 0.0 });
        }
        Ok(out)
    }
}

const BASIS_MAGIC: &[u8; 8] = b"MSBASIS1";

/// Writes the basis with a header of mesh dimensions, `L`, `m`, the κ
/// checksum and `Λ`, followed by `R` in column-major order.
pub fn save_basis_cache(space: &MultiscaleSpace, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(BASIS_MAGIC)?;
    let m = &space.mesh;
    for v in [m.nx, m.ny, m.ncx, m.ncy, space.params.eigen_count, space.params.layers] {
        w.write_u64::<LittleEndian>(v as u64)?;
    }
    w.write_all(&space.kappa_checksum)?;
    w.write_f64::<LittleEndian>(space.lambda)?;
    w.write_u64::<LittleEndian>(space.basis.nrows() as u64)?;
    w.write_u64::<LittleEndian>(space.basis.ncols() as u64)?;
    for &v in space.basis.as_slice() {
        w.write_f64::<LittleEndian>(v)?;
    }
    w.flush()?;
    Ok(())
}

/// Loads a cached basis, rejecting it if the mesh, parameters or κ differ
/// from what the caller expects.
pub fn load_basis_cache(
    path: &Path,
    mesh: &StructuredMesh,
    kappa: &PermeabilityField,
    params: BasisParams,
) -> Result<MultiscaleSpace> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != BASIS_MAGIC {
        return Err(Error::Format("not a basis cache".into()));
    }
    let mut dims = [0usize; 6];
    for d in dims.iter_mut() {
        *d = r.read_u64::<LittleEndian>()? as usize;
    }
    let expected = [mesh.nx, mesh.ny, mesh.ncx, mesh.ncy, params.eigen_count, params.layers];
    if dims != expected {
        return Err(Error::Format(format!(
            "basis cache dimensions {dims:?} do not match {expected:?}"
        )));
    }
    let mut sum = [0u8; 32];
    r.read_exact(&mut sum)?;
    if sum != kappa_checksum(kappa) {
        return Err(Error::Format("basis cache was built for a different permeability field".into()));
    }
    let lambda = r.read_f64::<LittleEndian>()?;
    let nrows = r.read_u64::<LittleEndian>()? as usize;
    let ncols = r.read_u64::<LittleEndian>()? as usize;
    if nrows != mesh.node_count() || ncols != mesh.block_count() * params.eigen_count {
        return Err(Error::Format(format!("basis cache holds a {nrows}x{ncols} matrix")));
    }
    let mut data = vec![0.0; nrows * ncols];
    r.read_f64_into::<LittleEndian>(&mut data)?;
    let l = params.eigen_count;
    Ok(MultiscaleSpace {
        mesh: *mesh,
        params,
        basis: DMatrix::from_vec(nrows, ncols, data),
        columns: (0..ncols)
            .map(|c| ColumnInfo {
                block: c / l,
                local: c % l,
                layers: params.layers,
            })
            .collect(),
        lambda,
        kappa_checksum: sum,
        auxiliary: None,
    })
}
