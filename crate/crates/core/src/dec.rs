//! Block differential `d` and learnable Hodge stars.
//!
//! Every vertex and edge carries a `k`-vector. `d` maps vertex values to
//! per-edge differences (`+I` at the larger endpoint, `−I` at the smaller),
//! and the stars are block diagonal with `k × k` blocks built from raw
//! network outputs as `εI + Σ fᵀf` (vertices) and `εI + gᵀg` (edges).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{self, Matrix};
use crate::mesh::{EdgeStencil, Mesh, VertexFeatures};
use crate::sparse::BlockSparse;
use crate::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-4;

/// Block incidence matrix of shape `k|E| × k|V|`.
#[derive(Debug, Clone, PartialEq)]
pub struct Differential {
    k: usize,
    num_vertices: usize,
    edges: Vec<[usize; 2]>,
}

pub fn build_differential(mesh: &Mesh, k: usize) -> Differential {
    Differential { k, num_vertices: mesh.num_vertices(), edges: mesh.edges().to_vec() }
}

impl Differential {
    pub fn block_size(&self) -> usize {
        self.k
    }

    pub fn rows(&self) -> usize {
        self.k * self.edges.len()
    }

    pub fn cols(&self) -> usize {
        self.k * self.num_vertices
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// `y = d x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let k = self.k;
        for (e, &[a, b]) in self.edges.iter().enumerate() {
            for c in 0..k {
                y[e * k + c] = x[b * k + c] - x[a * k + c];
            }
        }
    }

    /// `x = dᵀ y`.
    pub fn apply_t(&self, y: &[f64], x: &mut [f64]) {
        let k = self.k;
        x.iter_mut().for_each(|v| *v = 0.0);
        for (e, &[a, b]) in self.edges.iter().enumerate() {
            for c in 0..k {
                x[b * k + c] += y[e * k + c];
                x[a * k + c] -= y[e * k + c];
            }
        }
    }

    /// Nonzero entries as `(row, col, value)`, two per scalar row.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let k = self.k;
        let mut out = Vec::with_capacity(2 * self.rows());
        for (e, &[a, b]) in self.edges.iter().enumerate() {
            for c in 0..k {
                out.push((e * k + c, a * k + c, -1.0));
                out.push((e * k + c, b * k + c, 1.0));
            }
        }
        out
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows(), self.cols());
        for (r, c, v) in self.triplets() {
            m.set(r, c, v);
        }
        m
    }
}

/// Per-vertex star blocks with the per-triangle raw outputs they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct HodgeStar0 {
    k: usize,
    eps: f64,
    blocks: Vec<f64>,
    raw: Vec<f64>,
}

/// Per-edge star blocks with their raw outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct HodgeStar1 {
    k: usize,
    eps: f64,
    blocks: Vec<f64>,
    raw: Vec<f64>,
}

macro_rules! star_accessors {
    ($t:ty) => {
        impl $t {
            pub fn block_size(&self) -> usize {
                self.k
            }

            pub fn eps(&self) -> f64 {
                self.eps
            }

            pub fn len(&self) -> usize {
                self.blocks.len() / (self.k * self.k)
            }

            pub fn is_empty(&self) -> bool {
                self.blocks.is_empty()
            }

            pub fn block(&self, i: usize) -> &[f64] {
                let kk = self.k * self.k;
                &self.blocks[i * kk..(i + 1) * kk]
            }

            pub fn blocks(&self) -> &[f64] {
                &self.blocks
            }

            pub fn raw(&self) -> &[f64] {
                &self.raw
            }

            pub fn raw_block(&self, i: usize) -> &[f64] {
                let kk = self.k * self.k;
                &self.raw[i * kk..(i + 1) * kk]
            }

            /// `y = ⋆ x` for the block-diagonal operator.
            pub fn apply(&self, x: &[f64], y: &mut [f64]) {
                let k = self.k;
                y.iter_mut().for_each(|v| *v = 0.0);
                for i in 0..self.len() {
                    linalg::block_matvec_add(self.block(i), k, &x[i * k..(i + 1) * k], &mut y[i * k..(i + 1) * k]);
                }
            }

            /// Copy with `delta` added to entries `(r, c)` and `(c, r)` of
            /// block `i`; the raw factors are left unchanged.
            pub fn perturbed(&self, i: usize, r: usize, c: usize, delta: f64) -> Self {
                let mut out = self.clone();
                let k = self.k;
                out.blocks[i * k * k + r * k + c] += delta;
                if r != c {
                    out.blocks[i * k * k + c * k + r] += delta;
                }
                out
            }

            pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
                let k = self.k;
                let mut out = Vec::with_capacity(self.blocks.len());
                for i in 0..self.len() {
                    let b = self.block(i);
                    for r in 0..k {
                        for c in 0..k {
                            out.push((i * k + r, i * k + c, b[r * k + c]));
                        }
                    }
                }
                out
            }
        }
    };
}

star_accessors!(HodgeStar0);

impl HodgeStar0 {
    #[cfg(test)]
    pub(crate) fn with_blocks(mut self, blocks: Vec<f64>) -> Self {
        self.blocks = blocks;
        self
    }
}
star_accessors!(HodgeStar1);

fn identity_blocks(count: usize, k: usize, eps: f64) -> Vec<f64> {
    let mut blocks = vec![0.0; count * k * k];
    for i in 0..count {
        for c in 0..k {
            blocks[i * k * k + c * k + c] = eps;
        }
    }
    blocks
}

/// `⋆₀_v = εI + Σ_{t ∋ v} f_tᵀ f_t` from one row-major `k × k` output per
/// triangle.
pub fn assemble_star0(mesh: &Mesh, f_out: &[f64], k: usize, eps: f64) -> Result<HodgeStar0> {
    let kk = k * k;
    if f_out.len() != mesh.num_triangles() * kk {
        return Err(Error::Contract(format!("star0 expects {} raw entries, got {}", mesh.num_triangles() * kk, f_out.len())));
    }
    let mut blocks = identity_blocks(mesh.num_vertices(), k, eps);
    let mut gram = vec![0.0; kk];
    let mut touched = vec![false; mesh.num_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        gram.iter_mut().for_each(|v| *v = 0.0);
        linalg::add_gram(&f_out[t * kk..(t + 1) * kk], k, &mut gram);
        for &v in tri {
            touched[v] = true;
            for (dst, src) in blocks[v * kk..(v + 1) * kk].iter_mut().zip(&gram) {
                *dst += src;
            }
        }
    }
    if let Some(v) = touched.iter().position(|&t| !t) {
        log::warn!("vertex {v} has no incident triangle; its mass block is eps·I");
    }
    Ok(HodgeStar0 { k, eps, blocks, raw: f_out.to_vec() })
}

/// `⋆₁_e = εI + g_eᵀ g_e`. Interior and boundary outputs are each listed in
/// ascending edge order.
pub fn assemble_star1(mesh: &Mesh, g_out: &[f64], g_bdry_out: &[f64], k: usize, eps: f64) -> Result<HodgeStar1> {
    let kk = k * k;
    let nb = mesh.num_boundary_edges();
    let ni = mesh.num_edges() - nb;
    if g_out.len() != ni * kk || g_bdry_out.len() != nb * kk {
        return Err(Error::Contract(format!("star1 expects {}+{} raw entries, got {}+{}", ni * kk, nb * kk, g_out.len(), g_bdry_out.len())));
    }
    let mut blocks = identity_blocks(mesh.num_edges(), k, eps);
    let mut raw = Vec::with_capacity(mesh.num_edges() * kk);
    let (mut i, mut b) = (0, 0);
    for (e, &bdry) in mesh.boundary_flags().iter().enumerate() {
        let g = if bdry {
            b += 1;
            &g_bdry_out[(b - 1) * kk..b * kk]
        } else {
            i += 1;
            &g_out[(i - 1) * kk..i * kk]
        };
        linalg::add_gram(g, k, &mut blocks[e * kk..(e + 1) * kk]);
        raw.extend_from_slice(g);
    }
    Ok(HodgeStar1 { k, eps, blocks, raw })
}

/// Network input rows for the three operator networks.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilInputs {
    /// `|T| × 3D`: each triangle rotated to start at its lowest index.
    pub triangles: Matrix,
    /// `|E_int| × 4D` in ascending edge order.
    pub interior: Matrix,
    /// `|E_bdry| × 3D` in ascending edge order.
    pub boundary: Matrix,
}

/// Concatenated vertex features per triangle and per edge stencil.
pub fn ordered_edge_inputs(mesh: &Mesh, features: &VertexFeatures) -> StencilInputs {
    let dim = features.dim();
    let gather = |ids: &[usize], out: &mut Vec<f64>| {
        for &v in ids {
            out.extend_from_slice(features.row(v));
        }
    };
    let mut tri = Vec::with_capacity(mesh.num_triangles() * 3 * dim);
    for t in 0..mesh.num_triangles() {
        gather(&mesh.canonical_triangle(t), &mut tri);
    }
    let (mut int, mut bdry) = (Vec::new(), Vec::new());
    for e in 0..mesh.num_edges() {
        match mesh.edge_stencil(e) {
            EdgeStencil::Interior(ids) => gather(&ids, &mut int),
            EdgeStencil::Boundary(ids) => gather(&ids, &mut bdry),
        }
    }
    StencilInputs {
        triangles: Matrix::from_vec(mesh.num_triangles(), 3 * dim, tri),
        interior: Matrix::from_vec(int.len() / (4 * dim), 4 * dim, int),
        boundary: Matrix::from_vec(bdry.len() / (3 * dim), 3 * dim, bdry),
    }
}

/// `d`, `⋆₀`, `⋆₁` for one mesh; the operator is `⋆₀⁻¹ dᵀ ⋆₁ d`.
#[derive(Debug, Clone)]
pub struct OperatorBundle {
    pub d: Differential,
    pub star0: HodgeStar0,
    pub star1: HodgeStar1,
    pub eps: f64,
    neighbors: Vec<Vec<usize>>,
}

impl OperatorBundle {
    pub fn new(mesh: &Mesh, star0: HodgeStar0, star1: HodgeStar1) -> Result<Self> {
        let k = star0.block_size();
        if star1.block_size() != k || star0.len() != mesh.num_vertices() || star1.len() != mesh.num_edges() {
            return Err(Error::Contract("star shapes do not match the mesh".into()));
        }
        let eps = star0.eps();
        Ok(Self { d: build_differential(mesh, k), star0, star1, eps, neighbors: mesh.vertex_neighbors() })
    }

    /// Builds both stars from raw outputs.
    pub fn from_raw(mesh: &Mesh, k: usize, eps: f64, f_out: &[f64], g_out: &[f64], g_bdry_out: &[f64]) -> Result<Self> {
        let star0 = assemble_star0(mesh, f_out, k, eps)?;
        let star1 = assemble_star1(mesh, g_out, g_bdry_out, k, eps)?;
        Self::new(mesh, star0, star1)
    }

    pub fn block_size(&self) -> usize {
        self.d.block_size()
    }

    pub fn dim(&self) -> usize {
        self.d.cols()
    }

    pub fn neighbors(&self) -> &[Vec<usize>] {
        &self.neighbors
    }

    /// `dᵀ ⋆₁ d` on the vertex graph.
    pub fn stiffness(&self) -> BlockSparse {
        let k = self.block_size();
        let mut a = BlockSparse::with_pattern(&self.neighbors, k);
        for (e, &[u, v]) in self.d.edges().iter().enumerate() {
            let s = self.star1.block(e);
            a.add_block(u, u, s, 1.0);
            a.add_block(v, v, s, 1.0);
            a.add_block(u, v, s, -1.0);
            a.add_block(v, u, s, -1.0);
        }
        a
    }

    /// `⋆₀` with the stiffness sparsity pattern, for shifted factorizations.
    pub fn mass(&self) -> BlockSparse {
        let mut b = BlockSparse::with_pattern(&self.neighbors, self.block_size());
        for v in 0..self.star0.len() {
            b.add_block(v, v, self.star0.block(v), 1.0);
        }
        b
    }
}
