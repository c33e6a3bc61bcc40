//! Thin layer over `nalgebra-sparse` storage and `faer` sparse factorizations.

use std::sync::Once;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLlt, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::{MatMut, Par, Side};
use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};

use crate::error::{Error, Result};

static SEQUENTIAL: Once = Once::new();

// faer reads a process-wide parallelism setting inside its factorizations;
// pinning it keeps results independent of the host thread count.
fn pin_sequential() {
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(Par::Seq));
}

pub fn csr_from_triplets(
    nrows: usize,
    ncols: usize,
    triplets: impl IntoIterator<Item = (usize, usize, f64)>,
) -> CsrMatrix<f64> {
    let mut coo = CooMatrix::new(nrows, ncols);
    for (i, j, v) in triplets {
        coo.push(i, j, v);
    }
    CsrMatrix::from(&coo)
}

pub fn spmv(a: &CsrMatrix<f64>, x: &[f64]) -> DVector<f64> {
    debug_assert_eq!(a.ncols(), x.len());
    let mut y = DVector::zeros(a.nrows());
    for (i, row) in a.row_iter().enumerate() {
        let mut acc = 0.0;
        for (&j, &v) in row.col_indices().iter().zip(row.values()) {
            acc += v * x[j];
        }
        y[i] = acc;
    }
    y
}

/// Sparse times dense, column by column.
pub fn spmm(a: &CsrMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), b.ncols());
    for c in 0..b.ncols() {
        let col = b.column(c);
        let mut dst = out.column_mut(c);
        for (i, row) in a.row_iter().enumerate() {
            let mut acc = 0.0;
            for (&j, &v) in row.col_indices().iter().zip(row.values()) {
                acc += v * col[j];
            }
            dst[i] = acc;
        }
    }
    out
}

/// `xᵀ A x`.
pub fn quadratic_form(a: &CsrMatrix<f64>, x: &[f64]) -> f64 {
    let ax = spmv(a, x);
    ax.iter().zip(x).map(|(p, q)| p * q).sum()
}

/// Extract `A[rows, cols]`, both index lists given in ascending global order.
pub fn submatrix(a: &CsrMatrix<f64>, rows: &[usize], cols: &[usize]) -> CsrMatrix<f64> {
    let mut col_map = vec![usize::MAX; a.ncols()];
    for (k, &c) in cols.iter().enumerate() {
        col_map[c] = k;
    }
    let mut triplets = Vec::new();
    for (ri, &r) in rows.iter().enumerate() {
        let row = a.row(r);
        for (&j, &v) in row.col_indices().iter().zip(row.values()) {
            let cj = col_map[j];
            if cj != usize::MAX {
                triplets.push((ri, cj, v));
            }
        }
    }
    csr_from_triplets(rows.len(), cols.len(), triplets)
}

/// `a + alpha * b` for matrices of equal shape.
pub fn add_scaled(a: &CsrMatrix<f64>, alpha: f64, b: &CsrMatrix<f64>) -> CsrMatrix<f64> {
    let triplets = a
        .triplet_iter()
        .map(|(i, j, &v)| (i, j, v))
        .chain(b.triplet_iter().map(|(i, j, &v)| (i, j, alpha * v)));
    csr_from_triplets(a.nrows(), a.ncols(), triplets)
}

pub fn to_dense(a: &CsrMatrix<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, j, &v) in a.triplet_iter() {
        d[(i, j)] += v;
    }
    d
}

fn to_faer(a: &CsrMatrix<f64>) -> Result<SparseColMat<usize, f64>> {
    let triplets: Vec<_> = a
        .triplet_iter()
        .map(|(i, j, &v)| Triplet::new(i, j, v))
        .collect();
    SparseColMat::try_new_from_triplets(a.nrows(), a.ncols(), &triplets)
        .map_err(|e| Error::Linear(format!("sparse conversion failed: {e:?}")))
}

/// Sparse LU with partial pivoting.
pub struct SparseLu {
    lu: Lu<usize, f64>,
    n: usize,
}

/// Symbolic analysis shared by every matrix with the same sparsity pattern.
#[derive(Clone)]
pub struct LuPattern {
    symbolic: SymbolicLu<usize>,
}

impl LuPattern {
    pub fn analyze(a: &CsrMatrix<f64>) -> Result<Self> {
        pin_sequential();
        let m = to_faer(a)?;
        let symbolic = SymbolicLu::try_new(m.symbolic())
            .map_err(|e| Error::Linear(format!("symbolic LU failed: {e:?}")))?;
        Ok(Self { symbolic })
    }

    pub fn factor(&self, a: &CsrMatrix<f64>) -> Result<SparseLu> {
        let m = to_faer(a)?;
        let lu = Lu::try_new_with_symbolic(self.symbolic.clone(), m.as_ref())
            .map_err(|e| Error::Linear(format!("numeric LU failed: {e:?}")))?;
        Ok(SparseLu { lu, n: a.nrows() })
    }
}

impl SparseLu {
    pub fn factor(a: &CsrMatrix<f64>) -> Result<Self> {
        LuPattern::analyze(a)?.factor(a)
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.n;
        self.lu
            .solve_in_place(MatMut::from_column_major_slice_mut(rhs, n, 1));
    }
}

/// Sparse Cholesky for symmetric positive definite matrices.
pub struct SparseCholesky {
    llt: Llt<usize, f64>,
    n: usize,
}

impl SparseCholesky {
    pub fn factor(a: &CsrMatrix<f64>) -> Result<Self> {
        pin_sequential();
        let m = to_faer(a)?;
        let symbolic = SymbolicLlt::try_new(m.symbolic(), Side::Lower)
            .map_err(|e| Error::Linear(format!("symbolic Cholesky failed: {e:?}")))?;
        let llt = Llt::try_new_with_symbolic(symbolic, m.as_ref(), Side::Lower)
            .map_err(|e| Error::Linear(format!("Cholesky failed: {e:?}")))?;
        Ok(Self { llt, n: a.nrows() })
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.n;
        self.llt
            .solve_in_place(MatMut::from_column_major_slice_mut(rhs, n, 1));
    }

    /// Solves for every column of `rhs` at once.
    pub fn solve_matrix_in_place(&self, rhs: &mut DMatrix<f64>) {
        let (n, k) = rhs.shape();
        debug_assert_eq!(n, self.n);
        self.llt
            .solve_in_place(MatMut::from_column_major_slice_mut(rhs.as_mut_slice(), n, k));
    }
}
