//! Structured fine/coarse meshes of the unit square.
//!
//! Nodes are numbered row-major with x fastest: node `(i, j)` has id
//! `j * (nx + 1) + i`. Cells use the same convention with `nx` columns, and
//! coarse blocks with `ncx` columns.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StructuredMesh {
    pub nx: usize,
    pub ny: usize,
    pub ncx: usize,
    pub ncy: usize,
}

impl StructuredMesh {
    pub fn new(nx: usize, ny: usize, ncx: usize, ncy: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || ncx == 0 || ncy == 0 {
            return Err(Error::Config(format!(
                "mesh counts must be positive, got fine {nx}x{ny}, coarse {ncx}x{ncy}"
            )));
        }
        if !nx.is_multiple_of(ncx) || !ny.is_multiple_of(ncy) {
            return Err(Error::Config(format!(
                "fine grid {nx}x{ny} is not an integer tiling of coarse grid {ncx}x{ncy}"
            )));
        }
        Ok(Self { nx, ny, ncx, ncy })
    }

    pub fn hx(&self) -> f64 {
        1.0 / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        1.0 / self.ny as f64
    }

    pub fn node_count(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn block_count(&self) -> usize {
        self.ncx * self.ncy
    }

    /// Fine cells per coarse block along x and y.
    pub fn block_tile(&self) -> (usize, usize) {
        (self.nx / self.ncx, self.ny / self.ncy)
    }

    #[inline]
    pub fn node_id(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    #[inline]
    pub fn node_ij(&self, id: usize) -> (usize, usize) {
        (id % (self.nx + 1), id / (self.nx + 1))
    }

    pub fn node_coords(&self, id: usize) -> (f64, f64) {
        let (i, j) = self.node_ij(id);
        (i as f64 * self.hx(), j as f64 * self.hy())
    }

    pub fn is_boundary_node(&self, id: usize) -> bool {
        let (i, j) = self.node_ij(id);
        i == 0 || j == 0 || i == self.nx || j == self.ny
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.node_count())
            .filter(|&id| self.is_boundary_node(id))
            .collect()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.node_count())
            .filter(|&id| !self.is_boundary_node(id))
            .collect()
    }

    #[inline]
    pub fn cell_id(&self, ci: usize, cj: usize) -> usize {
        cj * self.nx + ci
    }

    #[inline]
    pub fn cell_ij(&self, cell: usize) -> (usize, usize) {
        (cell % self.nx, cell / self.nx)
    }

    /// Corner nodes of a cell, counterclockwise from the lower-left corner.
    #[inline]
    pub fn cell_nodes(&self, cell: usize) -> [usize; 4] {
        let (ci, cj) = self.cell_ij(cell);
        [
            self.node_id(ci, cj),
            self.node_id(ci + 1, cj),
            self.node_id(ci + 1, cj + 1),
            self.node_id(ci, cj + 1),
        ]
    }

    #[inline]
    pub fn block_ij(&self, block: usize) -> (usize, usize) {
        (block % self.ncx, block / self.ncx)
    }

    #[inline]
    pub fn block_id(&self, bi: usize, bj: usize) -> usize {
        bj * self.ncx + bi
    }

    pub fn block_of_cell(&self, cell: usize) -> usize {
        let (ci, cj) = self.cell_ij(cell);
        let (tx, ty) = self.block_tile();
        self.block_id(ci / tx, cj / ty)
    }

    /// Fine cells of a coarse block in row-major order.
    pub fn block_cells(&self, block: usize) -> Vec<usize> {
        let (bi, bj) = self.block_ij(block);
        let (tx, ty) = self.block_tile();
        let mut cells = Vec::with_capacity(tx * ty);
        for cj in bj * ty..(bj + 1) * ty {
            for ci in bi * tx..(bi + 1) * tx {
                cells.push(self.cell_id(ci, cj));
            }
        }
        cells
    }

    /// Fine nodes of a coarse block (closed rectangle), sorted ascending.
    pub fn block_nodes(&self, block: usize) -> Vec<usize> {
        let (bi, bj) = self.block_ij(block);
        let (tx, ty) = self.block_tile();
        rect_nodes(self, bi * tx, (bi + 1) * tx, bj * ty, (bj + 1) * ty)
    }

    /// Coarse grid nodes, `(ncx + 1) * (ncy + 1)` of them, in row-major order.
    pub fn coarse_node_count(&self) -> usize {
        (self.ncx + 1) * (self.ncy + 1)
    }

    /// The coarse block enlarged by `layers` coarse layers, clipped to the domain.
    pub fn oversample(&self, block: usize, layers: usize) -> Result<OversampleRegion> {
        if block >= self.block_count() {
            return Err(Error::Config(format!(
                "block index {block} out of range (mesh has {} blocks)",
                self.block_count()
            )));
        }
        let (bi, bj) = self.block_ij(block);
        let bx0 = bi.saturating_sub(layers);
        let by0 = bj.saturating_sub(layers);
        let bx1 = (bi + layers).min(self.ncx - 1);
        let by1 = (bj + layers).min(self.ncy - 1);
        let (tx, ty) = self.block_tile();
        let (cx0, cx1, cy0, cy1) = (bx0 * tx, (bx1 + 1) * tx, by0 * ty, (by1 + 1) * ty);
        let nodes = rect_nodes(self, cx0, cx1, cy0, cy1);
        let interior = nodes
            .iter()
            .copied()
            .filter(|&id| {
                let (i, j) = self.node_ij(id);
                i > cx0 && i < cx1 && j > cy0 && j < cy1
            })
            .collect();
        Ok(OversampleRegion {
            block,
            layers,
            blocks_x: (bx0, bx1),
            blocks_y: (by0, by1),
            cells_x: (cx0, cx1),
            cells_y: (cy0, cy1),
            nodes,
            interior,
        })
    }
}

fn rect_nodes(mesh: &StructuredMesh, x0: usize, x1: usize, y0: usize, y1: usize) -> Vec<usize> {
    let mut nodes = Vec::with_capacity((x1 - x0 + 1) * (y1 - y0 + 1));
    for j in y0..=y1 {
        for i in x0..=x1 {
            nodes.push(mesh.node_id(i, j));
        }
    }
    nodes
}

/// Oversampling domain `K_i^m`: a coarse block plus `layers` rings of
/// neighbouring blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OversampleRegion {
    pub block: usize,
    pub layers: usize,
    /// Inclusive coarse block ranges.
    pub blocks_x: (usize, usize),
    pub blocks_y: (usize, usize),
    /// Half-open fine cell ranges.
    pub cells_x: (usize, usize),
    pub cells_y: (usize, usize),
    /// All fine nodes of the closed region, ascending.
    pub nodes: Vec<usize>,
    /// Nodes strictly inside the region (not on its boundary), ascending.
    pub interior: Vec<usize>,
}

impl OversampleRegion {
    /// Number of coarse blocks spanned along each axis.
    pub fn span(&self) -> (usize, usize) {
        (
            self.blocks_x.1 - self.blocks_x.0 + 1,
            self.blocks_y.1 - self.blocks_y.0 + 1,
        )
    }

    pub fn blocks(&self, mesh: &StructuredMesh) -> Vec<usize> {
        let mut out = Vec::new();
        for bj in self.blocks_y.0..=self.blocks_y.1 {
            for bi in self.blocks_x.0..=self.blocks_x.1 {
                out.push(mesh.block_id(bi, bj));
            }
        }
        out
    }

    pub fn cells(&self, mesh: &StructuredMesh) -> Vec<usize> {
        let mut out = Vec::new();
        for cj in self.cells_y.0..self.cells_y.1 {
            for ci in self.cells_x.0..self.cells_x.1 {
                out.push(mesh.cell_id(ci, cj));
            }
        }
        out
    }
}
