//! Sign-agnostic spectral features and max pooling.
//!
//! Per vertex `v` and channel `j`, `G_v^j = Σᵢ H_ij xⁱ_v xⁱ_vᵀ` is a `k × k`
//! block built from outer products, so flipping the sign of any eigenvector
//! leaves it bit-identical. Blocks are flattened row-major into a row of
//! width `n·k²` at offset `j·k² + ℓ·k + m`.

use alloc::vec;
use alloc::vec::Vec;

use crate::eig::EigenSystem;
use crate::linalg::Matrix;
use crate::mesh::Mesh;
use crate::spectral_grad::SpectralCotangents;

/// `G` for the first `m` kept eigenpairs of `sys`; `h` is `m × n`.
pub fn vertex_features(sys: &EigenSystem, m: usize, h: &Matrix) -> Matrix {
    let k = sys.k;
    let kk = k * k;
    let n = h.cols();
    let nv = sys.vectors.cols() / k;
    let z = sys.zero_mode_count;
    let mut g = Matrix::zeros(nv, n * kk);
    let mut outer = vec![0.0; kk];
    for v in 0..nv {
        let row = g.row_mut(v);
        for i in 0..m {
            let xv = &sys.x(z + i)[v * k..(v + 1) * k];
            for l in 0..k {
                for c in 0..k {
                    outer[l * k + c] = xv[l] * xv[c];
                }
            }
            let hi = h.row(i);
            for j in 0..n {
                let hij = hi[j];
                for (dst, o) in row[j * kk..(j + 1) * kk].iter_mut().zip(&outer) {
                    *dst += hij * o;
                }
            }
        }
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolTarget {
    Face,
    Mesh,
}

/// Pooled rows and, per entry, the vertex that supplied the maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct Pooled {
    pub values: Matrix,
    pub argmax: Vec<usize>,
}

fn pool_rows(g: &Matrix, vertices: impl Iterator<Item = usize>, out: &mut [f64], arg: &mut [usize]) {
    let mut first = true;
    for v in vertices {
        for (c, &val) in g.row(v).iter().enumerate() {
            // Strict comparison keeps the earliest vertex on ties; callers
            // visit vertices in ascending order.
            if first || val > out[c] {
                out[c] = val;
                arg[c] = v;
            }
        }
        first = false;
    }
}

/// Componentwise max over each face's vertices or over the whole mesh.
/// Ties go to the lowest vertex index.
pub fn pool(g: &Matrix, target: PoolTarget, mesh: &Mesh) -> Pooled {
    let width = g.cols();
    match target {
        PoolTarget::Face => {
            let nt = mesh.num_triangles();
            let mut values = Matrix::zeros(nt, width);
            let mut argmax = vec![0; nt * width];
            for (t, tri) in mesh.triangles().iter().enumerate() {
                let mut sorted = *tri;
                sorted.sort_unstable();
                pool_rows(g, sorted.into_iter(), values.row_mut(t), &mut argmax[t * width..(t + 1) * width]);
            }
            Pooled { values, argmax }
        }
        PoolTarget::Mesh => {
            let mut values = Matrix::zeros(1, width);
            let mut argmax = vec![0; width];
            pool_rows(g, 0..g.rows(), values.row_mut(0), &mut argmax);
            Pooled { values, argmax }
        }
    }
}

/// Routes pooled gradients back to the argmax vertices.
pub fn pool_backward(pooled: &Pooled, d_pooled: &Matrix, num_vertices: usize) -> Matrix {
    let width = pooled.values.cols();
    let mut dg = Matrix::zeros(num_vertices, width);
    for r in 0..d_pooled.rows() {
        for (c, &d) in d_pooled.row(r).iter().enumerate() {
            if d != 0.0 {
                dg.add_to(pooled.argmax[r * width + c], c, d);
            }
        }
    }
    dg
}

/// Gradients of the features with respect to the kept eigenvectors (first
/// `m`; the remaining kept pairs get zero) and to `H`. `d_lambda` is left
/// zero; it is filled from the backward pass of the network producing `H`.
pub fn features_backward(sys: &EigenSystem, m: usize, h: &Matrix, dg: &Matrix) -> (SpectralCotangents, Matrix) {
    let k = sys.k;
    let kk = k * k;
    let n = h.cols();
    let nv = dg.rows();
    let z = sys.zero_mode_count;
    let mut cot = SpectralCotangents::zeros(sys.num_kept(), sys.vectors.cols());
    let mut dh = Matrix::zeros(m, n);
    // Symmetrized upstream block per (v, j), weighted by H, summed over j.
    let mut sym = vec![0.0; kk];
    for i in 0..m {
        let x = sys.x(z + i);
        let hi = h.row(i);
        let dxi = cot.d_x.row_mut(i);
        for v in 0..nv {
            let xv = &x[v * k..(v + 1) * k];
            let row = dg.row(v);
            sym.iter_mut().for_each(|s| *s = 0.0);
            for j in 0..n {
                let blk = &row[j * kk..(j + 1) * kk];
                let mut acc = 0.0;
                for l in 0..k {
                    for c in 0..k {
                        acc += blk[l * k + c] * xv[l] * xv[c];
                    }
                }
                dh.add_to(i, j, acc);
                let hij = hi[j];
                if hij != 0.0 {
                    for (s, b) in sym.iter_mut().zip(blk) {
                        *s += hij * b;
                    }
                }
            }
            for l in 0..k {
                let mut acc = 0.0;
                for c in 0..k {
                    acc += (sym[l * k + c] + sym[c * k + l]) * xv[c];
                }
                dxi[v * k + l] = acc;
            }
        }
    }
    (cot, dh)
}
