use alloc::vec;
use alloc::vec::Vec;

use super::{minimum_degree, BlockSparse};
use crate::linalg;

/// The pivot block that failed to factor, in original block-row numbering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NotPositiveDefinite {
    pub block: usize,
}

/// Block Cholesky factor `P A Pᵀ = L Lᵀ` of a symmetric positive definite
/// [`BlockSparse`] matrix under a minimum-degree permutation.
#[derive(Debug, Clone)]
pub struct BlockCholesky {
    n: usize,
    k: usize,
    order: Vec<usize>,
    col_ptr: Vec<usize>,
    rows: Vec<usize>,
    diag: Vec<f64>,
    off: Vec<f64>,
}

impl BlockCholesky {
    pub fn factor(a: &BlockSparse) -> Result<Self, NotPositiveDefinite> {
        let (n, k) = (a.block_rows(), a.block_size());
        let kk = k * k;
        let graph: Vec<Vec<usize>> = (0..n).map(|r| a.row_cols(r).to_vec()).collect();
        let (order, structure) = minimum_degree(&graph);

        let mut col_ptr = Vec::with_capacity(n + 1);
        col_ptr.push(0);
        let mut rows = Vec::new();
        for s in &structure {
            rows.extend_from_slice(s);
            col_ptr.push(rows.len());
        }

        let mut diag = vec![0.0; n * kk];
        let mut off = vec![0.0; rows.len() * kk];
        for p in 0..n {
            let v = order[p];
            diag[p * kk..(p + 1) * kk].copy_from_slice(a.block(v, v).unwrap());
            for q in col_ptr[p]..col_ptr[p + 1] {
                if let Some(b) = a.block(order[rows[q]], v) {
                    off[q * kk..(q + 1) * kk].copy_from_slice(b);
                }
            }
        }

        let mut tmp = vec![0.0; kk];
        for p in 0..n {
            let lpp = &mut diag[p * kk..(p + 1) * kk];
            if linalg::cholesky_lower(lpp, k).is_err() {
                return Err(NotPositiveDefinite { block: order[p] });
            }
            let lpp: Vec<f64> = lpp.to_vec();
            let (c0, c1) = (col_ptr[p], col_ptr[p + 1]);
            // L_ip = A_ip L_ppᵀ⁻¹, one row at a time.
            for q in c0..c1 {
                for r in 0..k {
                    linalg::solve_lower(&lpp, k, &mut off[q * kk + r * k..q * kk + (r + 1) * k]);
                }
            }
            for qa in c0..c1 {
                let i = rows[qa];
                let lip: Vec<f64> = off[qa * kk..(qa + 1) * kk].to_vec();
                sub_outer(&lip, &lip, k, &mut diag[i * kk..(i + 1) * kk], &mut tmp);
                let mut cursor = col_ptr[i];
                for qb in qa + 1..c1 {
                    let j = rows[qb];
                    while rows[cursor] != j {
                        cursor += 1;
                    }
                    // Column i starts after column p, so the target follows qb.
                    let (lo, hi) = off.split_at_mut(cursor * kk);
                    sub_outer(&lo[qb * kk..(qb + 1) * kk], &lip, k, &mut hi[..kk], &mut tmp);
                }
            }
        }
        Ok(Self { n, k, order, col_ptr, rows, diag, off })
    }

    pub fn dim(&self) -> usize {
        self.n * self.k
    }

    /// Overwrites `b` with `A⁻¹ b`.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (k, kk) = (self.k, self.k * self.k);
        let mut z = vec![0.0; b.len()];
        for (p, &v) in self.order.iter().enumerate() {
            z[p * k..(p + 1) * k].copy_from_slice(&b[v * k..(v + 1) * k]);
        }
        for p in 0..self.n {
            let (head, tail) = z.split_at_mut((p + 1) * k);
            let zp = &mut head[p * k..];
            linalg::solve_lower(&self.diag[p * kk..(p + 1) * kk], k, zp);
            for q in self.col_ptr[p]..self.col_ptr[p + 1] {
                let i = self.rows[q] - p - 1;
                let l = &self.off[q * kk..(q + 1) * kk];
                let zi = &mut tail[i * k..(i + 1) * k];
                for r in 0..k {
                    zi[r] -= linalg::dot(&l[r * k..(r + 1) * k], zp);
                }
            }
        }
        for p in (0..self.n).rev() {
            let (head, tail) = z.split_at_mut((p + 1) * k);
            let zp = &mut head[p * k..];
            for q in self.col_ptr[p]..self.col_ptr[p + 1] {
                let i = self.rows[q] - p - 1;
                let l = &self.off[q * kk..(q + 1) * kk];
                let zi = &tail[i * k..(i + 1) * k];
                for r in 0..k {
                    for c in 0..k {
                        zp[c] -= l[r * k + c] * zi[r];
                    }
                }
            }
            linalg::solve_lower_t(&self.diag[p * kk..(p + 1) * kk], k, zp);
        }
        for (p, &v) in self.order.iter().enumerate() {
            b[v * k..(v + 1) * k].copy_from_slice(&z[p * k..(p + 1) * k]);
        }
    }

    /// Number of stored off-diagonal blocks in the factor.
    pub fn fill(&self) -> usize {
        self.rows.len()
    }
}

/// `dst -= a bᵀ` for k×k blocks.
fn sub_outer(a: &[f64], b: &[f64], k: usize, dst: &mut [f64], tmp: &mut [f64]) {
    for r in 0..k {
        for c in 0..k {
            tmp[r * k + c] = linalg::dot(&a[r * k..(r + 1) * k], &b[c * k..(c + 1) * k]);
        }
    }
    for (d, t) in dst.iter_mut().zip(tmp.iter()) {
        *d -= t;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::mesh::shapes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd_on(mesh: &crate::mesh::Mesh, k: usize, seed: u64) -> BlockSparse {
        let nb = mesh.vertex_neighbors();
        let mut a = BlockSparse::with_pattern(&nb, k);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for &[u, v] in mesh.edges() {
            let g: Vec<f64> = (0..k * k).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut s = vec![0.0; k * k];
            linalg::add_gram(&g, k, &mut s);
            a.add_block(u, u, &s, 1.0);
            a.add_block(v, v, &s, 1.0);
            a.add_block(u, v, &s, -1.0);
            a.add_block(v, u, &s, -1.0);
        }
        let id: Vec<f64> = Matrix::identity(k).into_vec();
        for v in 0..mesh.num_vertices() {
            a.add_block(v, v, &id, 0.1);
        }
        a
    }

    #[test]
    fn solve_inverts_matvec() {
        for (mesh, k) in [(shapes::icosphere(2), 3), (shapes::grid(9, 7, 1.0, 1.0), 2), (shapes::icosahedron(), 4)] {
            let a = random_spd_on(&mesh, k, 7);
            let f = BlockCholesky::factor(&a).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let x: Vec<f64> = (0..a.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut b = vec![0.0; a.dim()];
            a.matvec(&x, &mut b);
            f.solve_in_place(&mut b);
            let err = x.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            assert!(err < 1e-9, "err {err}");
        }
    }

    #[test]
    fn rejects_indefinite() {
        let nb = vec![vec![1], vec![0]];
        let mut a = BlockSparse::with_pattern(&nb, 1);
        a.add_block(0, 0, &[1.0], 1.0);
        a.add_block(1, 1, &[1.0], 1.0);
        a.add_block(0, 1, &[2.0], 1.0);
        a.add_block(1, 0, &[2.0], 1.0);
        assert!(BlockCholesky::factor(&a).is_err());
    }
}
