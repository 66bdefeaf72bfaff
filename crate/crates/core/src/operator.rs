//! Dense operators with named block structure.
//!
//! A [`LinearOperator`] is a plain dense matrix plus row/column block
//! partitions, used for coboundaries, Laplacians, their sub-blocks and the
//! discrepancy operator. The partitions make per-vertex / per-edge block
//! access explicit and let constructors validate that block sizes add up.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SheafError};
use crate::linalg;
use crate::scalar::Real;

/// Contiguous block partition of one axis of an operator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLayout {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl BlockLayout {
    pub fn new(sizes: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut total = 0;
        for &s in &sizes {
            offsets.push(total);
            total += s;
        }
        Self {
            sizes,
            offsets,
            total,
        }
    }

    /// Single block covering the whole axis.
    pub fn flat(total: usize) -> Self {
        Self::new(vec![total])
    }

    pub fn block_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn size(&self, block: usize) -> usize {
        self.sizes[block]
    }

    pub fn offset(&self, block: usize) -> usize {
        self.offsets[block]
    }

    pub fn range(&self, block: usize) -> std::ops::Range<usize> {
        let o = self.offsets[block];
        o..o + self.sizes[block]
    }

    pub fn total(&self) -> usize {
        self.total
    }
}

/// Dense matrix with block-partitioned rows and columns.
#[derive(Debug, Clone)]
pub struct LinearOperator<T: Real> {
    matrix: DMatrix<T>,
    row_blocks: BlockLayout,
    col_blocks: BlockLayout,
}

impl<T: Real> LinearOperator<T> {
    pub fn new(
        matrix: DMatrix<T>,
        row_blocks: BlockLayout,
        col_blocks: BlockLayout,
    ) -> Result<Self> {
        if row_blocks.total() != matrix.nrows() {
            return Err(SheafError::Conformance {
                location: "operator row partition".into(),
                expected: matrix.nrows(),
                found: row_blocks.total(),
            });
        }
        if col_blocks.total() != matrix.ncols() {
            return Err(SheafError::Conformance {
                location: "operator column partition".into(),
                expected: matrix.ncols(),
                found: col_blocks.total(),
            });
        }
        Ok(Self {
            matrix,
            row_blocks,
            col_blocks,
        })
    }

    /// Wraps a matrix with trivial one-block partitions.
    pub fn from_matrix(matrix: DMatrix<T>) -> Self {
        let row_blocks = BlockLayout::flat(matrix.nrows());
        let col_blocks = BlockLayout::flat(matrix.ncols());
        Self {
            matrix,
            row_blocks,
            col_blocks,
        }
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.matrix
    }

    pub fn row_blocks(&self) -> &BlockLayout {
        &self.row_blocks
    }

    pub fn col_blocks(&self) -> &BlockLayout {
        &self.col_blocks
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn apply(&self, x: &DVector<T>) -> DVector<T> {
        &self.matrix * x
    }

    pub fn transpose(&self) -> LinearOperator<T> {
        LinearOperator {
            matrix: self.matrix.transpose(),
            row_blocks: self.col_blocks.clone(),
            col_blocks: self.row_blocks.clone(),
        }
    }

    /// Copy of the `(i, j)` block.
    pub fn block(&self, row_block: usize, col_block: usize) -> DMatrix<T> {
        let r = self.row_blocks.range(row_block);
        let c = self.col_blocks.range(col_block);
        self.matrix
            .view((r.start, c.start), (r.len(), c.len()))
            .into_owned()
    }

    /// Minimum-norm least-squares solve; `cutoff` defaults to the numerical
    /// rank convention.
    pub fn pinv_apply(&self, b: &DVector<T>, cutoff: Option<T>) -> DVector<T> {
        linalg::pinv_apply(&self.matrix, b, cutoff)
    }

    pub fn kernel_basis(&self, cutoff: Option<T>) -> DMatrix<T> {
        linalg::kernel_basis(&self.matrix, cutoff)
    }

    pub fn rank(&self, cutoff: Option<T>) -> usize {
        linalg::rank(&self.matrix, cutoff)
    }
}
