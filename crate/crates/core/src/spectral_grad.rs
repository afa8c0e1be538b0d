//! Closed-form backpropagation from eigenpairs to the Hodge star blocks.
//!
//! For `A xⁱ = λⁱ B xⁱ` with `A = dᵀ⋆₁d`, `B = ⋆₀` and `Xᵀ B X = I`, write
//! `Pᵢⱼ = ∂L/∂xⁱ · xʲ`. Then
//!
//! ```text
//! ∂L/∂⋆₁ₑ = Σᵢ ∂L/∂λⁱ yⁱₑ yⁱₑᵀ + Σᵢⱼ Pᵢⱼ Mᵢⱼ yʲₑ yⁱₑᵀ
//! ∂L/∂⋆₀ᵥ = −Σᵢ ∂L/∂λⁱ λⁱ xⁱᵥ xⁱᵥᵀ + Σᵢⱼ Pᵢⱼ Nᵢⱼ xʲᵥ xⁱᵥᵀ
//! ```
//!
//! with `Mᵢⱼ = 1/(λⁱ − λʲ)`, `Nᵢⱼ = λⁱ/(λʲ − λⁱ)`, `Nᵢᵢ = −½`. The `j` sums
//! run over every stored eigenpair, zero modes included; storing fewer pairs
//! truncates them. Gradients are with respect to independent block entries,
//! so only their symmetric part is meaningful.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dec::{HodgeStar0, HodgeStar1};
use crate::eig::EigenSystem;
use crate::linalg::{self, Matrix};
use crate::mesh::Mesh;
use crate::{Error, Result};

/// Loss sensitivities for the kept (non-zero-mode) eigenpairs, in order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCotangents {
    pub d_lambda: Vec<f64>,
    /// Row `i` is `∂L/∂xⁱ` for kept pair `i`.
    pub d_x: Matrix,
}

impl SpectralCotangents {
    pub fn zeros(num_kept: usize, dim: usize) -> Self {
        Self { d_lambda: vec![0.0; num_kept], d_x: Matrix::zeros(num_kept, dim) }
    }
}

/// Coupling coefficients over all stored pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct BackpropWorkspace {
    pub m: Matrix,
    pub n: Matrix,
}

pub fn degeneracy_tolerance(sys: &EigenSystem) -> f64 {
    1e-8 * sys.kept_values().iter().fold(1.0f64, |a, &l| a.max(l))
}

pub fn build_workspace(sys: &EigenSystem) -> BackpropWorkspace {
    let len = sys.len();
    let delta = degeneracy_tolerance(sys);
    let lam = &sys.values;
    let mut m = Matrix::zeros(len, len);
    let mut n = Matrix::zeros(len, len);
    for i in 0..len {
        n.set(i, i, -0.5);
        for j in 0..len {
            if i == j || (lam[i] - lam[j]).abs() < delta {
                continue;
            }
            m.set(i, j, 1.0 / (lam[i] - lam[j]));
            n.set(i, j, lam[i] / (lam[j] - lam[i]));
        }
    }
    BackpropWorkspace { m, n }
}

/// Gradients with respect to the star block entries.
#[derive(Debug, Clone, PartialEq)]
pub struct StarGradients {
    pub k: usize,
    /// Row-major `k × k` block per vertex.
    pub star0: Vec<f64>,
    /// Row-major `k × k` block per edge.
    pub star1: Vec<f64>,
}

/// `out[w] += Σ_i u_i[w] v_i[w]ᵀ` over blocks of size `k`.
fn add_block_outer(us: &[Vec<f64>], vs: &[&[f64]], k: usize, out: &mut [f64]) {
    for (u, v) in us.iter().zip(vs) {
        for ((o, ub), vb) in out.chunks_mut(k * k).zip(u.chunks(k)).zip(v.chunks(k)) {
            for r in 0..k {
                if ub[r] == 0.0 {
                    continue;
                }
                for c in 0..k {
                    o[r * k + c] += ub[r] * vb[c];
                }
            }
        }
    }
}

pub fn backward_stars(sys: &EigenSystem, cot: &SpectralCotangents, ws: &BackpropWorkspace) -> Result<StarGradients> {
    let (k, len, z) = (sys.k, sys.len(), sys.zero_mode_count);
    let kept = sys.num_kept();
    let n = sys.vectors.cols();
    let ne = sys.y.cols();
    if cot.d_lambda.len() != kept || cot.d_x.rows() != kept || cot.d_x.cols() != n {
        return Err(Error::Contract(format!(
            "cotangents cover {}/{} pairs of length {}, system has {kept} kept pairs of length {n}",
            cot.d_lambda.len(),
            cot.d_x.rows(),
            cot.d_x.cols()
        )));
    }
    if ws.m.rows() != len {
        return Err(Error::Contract(format!("workspace is {0}×{0}, system has {len} pairs", ws.m.rows())));
    }

    let mut star0 = vec![0.0; n * k];
    let mut star1 = vec![0.0; ne * k];

    // Eigenvalue path.
    let mut ux = Vec::new();
    let mut uy = Vec::new();
    let mut vx: Vec<&[f64]> = Vec::new();
    let mut vy: Vec<&[f64]> = Vec::new();
    for (a, &gl) in cot.d_lambda.iter().enumerate() {
        if gl == 0.0 {
            continue;
        }
        let i = z + a;
        ux.push(sys.x(i).iter().map(|v| -gl * sys.values[i] * v).collect::<Vec<f64>>());
        vx.push(sys.x(i));
        uy.push(sys.y(i).iter().map(|v| gl * v).collect::<Vec<f64>>());
        vy.push(sys.y(i));
    }
    add_block_outer(&ux, &vx, k, &mut star0);
    add_block_outer(&uy, &vy, k, &mut star1);

    // Eigenvector path, contracting over j first.
    for a in 0..kept {
        let gx = cot.d_x.row(a);
        if gx.iter().all(|&v| v == 0.0) {
            continue;
        }
        let i = z + a;
        let mut ui = vec![0.0; n];
        let mut wi = vec![0.0; ne];
        for j in 0..len {
            let p = linalg::dot(gx, sys.x(j));
            let (cn, cm) = (p * ws.n.get(i, j), p * ws.m.get(i, j));
            if cn != 0.0 {
                linalg::axpy(cn, sys.x(j), &mut ui);
            }
            if cm != 0.0 {
                linalg::axpy(cm, sys.y(j), &mut wi);
            }
        }
        add_block_outer(&[ui], &[sys.x(i)], k, &mut star0);
        add_block_outer(&[wi], &[sys.y(i)], k, &mut star1);
    }
    Ok(StarGradients { k, star0, star1 })
}

/// Gradients with respect to the raw network outputs, split like the
/// network inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RawGradients {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub g_bdry: Vec<f64>,
}

/// `out = a (G + Gᵀ)` for k×k blocks, accumulated.
fn add_sym_product(a: &[f64], g: &[f64], k: usize, out: &mut [f64]) {
    for r in 0..k {
        for c in 0..k {
            let mut s = 0.0;
            for p in 0..k {
                s += a[r * k + p] * (g[p * k + c] + g[c * k + p]);
            }
            out[r * k + c] += s;
        }
    }
}

pub fn chain_to_raw(mesh: &Mesh, grads: &StarGradients, star0: &HodgeStar0, star1: &HodgeStar1) -> RawGradients {
    let k = grads.k;
    let kk = k * k;
    let mut f = vec![0.0; mesh.num_triangles() * kk];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let mut gsum = vec![0.0; kk];
        for &v in tri {
            for (s, g) in gsum.iter_mut().zip(&grads.star0[v * kk..(v + 1) * kk]) {
                *s += g;
            }
        }
        add_sym_product(star0.raw_block(t), &gsum, k, &mut f[t * kk..(t + 1) * kk]);
    }
    let nb = mesh.num_boundary_edges();
    let mut g = Vec::with_capacity((mesh.num_edges() - nb) * kk);
    let mut g_bdry = Vec::with_capacity(nb * kk);
    let mut block = vec![0.0; kk];
    for (e, &bdry) in mesh.boundary_flags().iter().enumerate() {
        block.iter_mut().for_each(|v| *v = 0.0);
        add_sym_product(star1.raw_block(e), &grads.star1[e * kk..(e + 1) * kk], k, &mut block);
        if bdry { &mut g_bdry } else { &mut g }.extend_from_slice(&block);
    }
    RawGradients { f, g, g_bdry }
}

/// `⟨approx, exact⟩`; positive when `approx` is a descent direction for
/// the loss whose gradient is `exact`.
pub fn descent_check(approx: &[f64], exact: &[f64]) -> f64 {
    linalg::dot(approx, exact)
}

/// The first `count` stored pairs, for comparing truncated sums against a
/// fuller system.
pub fn truncate(sys: &EigenSystem, count: usize) -> EigenSystem {
    let count = count.min(sys.len());
    EigenSystem {
        k: sys.k,
        values: sys.values[..count].to_vec(),
        vectors: sys.vectors.slice_rows(0, count),
        y: sys.y.slice_rows(0, count),
        residuals: sys.residuals[..count].to_vec(),
        zero_mode_count: sys.zero_mode_count.min(count),
    }
}
