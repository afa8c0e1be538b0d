//! Symmetric block-sparse matrices over a vertex graph and their Cholesky
//! factorization.

mod cholesky;
mod ordering;

pub use cholesky::{BlockCholesky, NotPositiveDefinite};
pub use ordering::minimum_degree;

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{self, Matrix};
use crate::math;

/// Block CSR storage of a structurally symmetric matrix with `k × k` blocks.
/// Every block row stores its diagonal block; column indices ascend.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSparse {
    n: usize,
    k: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    blocks: Vec<f64>,
}

impl BlockSparse {
    /// Zero matrix with the sparsity of `neighbors` plus the diagonal.
    pub fn with_pattern(neighbors: &[Vec<usize>], k: usize) -> Self {
        let n = neighbors.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for (r, nb) in neighbors.iter().enumerate() {
            let mut row: Vec<usize> = nb.iter().copied().chain(core::iter::once(r)).collect();
            row.sort_unstable();
            row.dedup();
            cols.extend_from_slice(&row);
            row_ptr.push(cols.len());
        }
        let blocks = vec![0.0; cols.len() * k * k];
        Self { n, k, row_ptr, cols, blocks }
    }

    #[inline]
    pub fn block_rows(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn block_size(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n * self.k
    }

    pub fn num_blocks(&self) -> usize {
        self.cols.len()
    }

    #[inline]
    pub fn row_cols(&self, r: usize) -> &[usize] {
        &self.cols[self.row_ptr[r]..self.row_ptr[r + 1]]
    }

    fn position(&self, r: usize, c: usize) -> Option<usize> {
        let start = self.row_ptr[r];
        self.row_cols(r).binary_search(&c).ok().map(|i| start + i)
    }

    pub fn block(&self, r: usize, c: usize) -> Option<&[f64]> {
        let kk = self.k * self.k;
        self.position(r, c).map(|p| &self.blocks[p * kk..(p + 1) * kk])
    }

    /// `A[r, c] += scale · block`. Panics if `(r, c)` is outside the pattern.
    pub fn add_block(&mut self, r: usize, c: usize, block: &[f64], scale: f64) {
        let kk = self.k * self.k;
        let p = self.position(r, c).expect("block outside sparsity pattern");
        for (dst, &src) in self.blocks[p * kk..(p + 1) * kk].iter_mut().zip(block) {
            *dst += scale * src;
        }
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let (k, kk) = (self.k, self.k * self.k);
        y.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..self.n {
            let yr = &mut y[r * k..(r + 1) * k];
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[p];
                linalg::block_matvec_add(&self.blocks[p * kk..(p + 1) * kk], k, &x[c * k..(c + 1) * k], yr);
            }
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        math::sqrt(self.blocks.iter().map(|v| v * v).sum())
    }

    pub fn trace(&self) -> f64 {
        (0..self.n)
            .map(|r| {
                let b = self.block(r, r).unwrap();
                (0..self.k).map(|i| b[i * self.k + i]).sum::<f64>()
            })
            .sum()
    }

    pub fn to_dense(&self) -> Matrix {
        let (k, kk) = (self.k, self.k * self.k);
        let mut m = Matrix::zeros(self.dim(), self.dim());
        for r in 0..self.n {
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[p];
                let b = &self.blocks[p * kk..(p + 1) * kk];
                for i in 0..k {
                    for j in 0..k {
                        m.set(r * k + i, c * k + j, b[i * k + j]);
                    }
                }
            }
        }
        m
    }

    /// Stored entries as `(row, col, value)` in block-row order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let (k, kk) = (self.k, self.k * self.k);
        let mut out = Vec::with_capacity(self.blocks.len());
        for r in 0..self.n {
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[p];
                for i in 0..k {
                    for j in 0..k {
                        out.push((r * k + i, c * k + j, self.blocks[p * kk + i * k + j]));
                    }
                }
            }
        }
        out
    }
}
