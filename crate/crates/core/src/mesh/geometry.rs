use alloc::vec;
use alloc::vec::Vec;

use super::{Mesh, MeshError};
use crate::math::{self, Vec3};

/// Centers the mesh on its vertex mean and scales it so the farthest vertex
/// sits on the unit sphere. Connectivity is untouched.
pub fn normalize(mesh: &Mesh) -> Result<Mesh, MeshError> {
    let verts = mesh.vertices();
    if verts.is_empty() {
        return Err(MeshError::Degenerate("mesh has no vertices"));
    }
    let inv_n = 1.0 / verts.len() as f64;
    let mut center = [0.0; 3];
    for v in verts {
        center = math::add(center, *v);
    }
    center = math::scale(center, inv_n);
    let extent = verts.iter().flatten().fold(1.0f64, |m, c| m.max(c.abs()));
    let centered: Vec<Vec3> = verts.iter().map(|&v| math::sub(v, center)).collect();
    let radius = centered.iter().map(|&v| math::norm(v)).fold(0.0, f64::max);
    if !(radius > 1e-12 * extent) {
        return Err(MeshError::Degenerate("all vertices coincide"));
    }
    let s = 1.0 / radius;
    Ok(mesh.with_vertices(centered.into_iter().map(|v| math::scale(v, s)).collect()))
}

/// How a vertex normal was obtained when the area-weighted sum vanished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalFallback {
    /// Unweighted mean of incident unit face normals.
    Unweighted,
    /// Nothing usable around the vertex; `+z` was substituted.
    Arbitrary,
}

/// Area-weighted vertex normals, with the fallbacks that were needed.
pub fn vertex_normals(mesh: &Mesh) -> (Vec<Vec3>, Vec<(usize, NormalFallback)>) {
    let nv = mesh.num_vertices();
    let mut weighted = vec![[0.0; 3]; nv];
    let mut unit_sum = vec![[0.0; 3]; nv];
    for t in 0..mesh.num_triangles() {
        let raw = mesh.triangle_normal_raw(t);
        let unit = math::normalized(raw);
        for &v in &mesh.triangles()[t] {
            weighted[v] = math::add(weighted[v], raw);
            if let Some(u) = unit {
                unit_sum[v] = math::add(unit_sum[v], u);
            }
        }
    }
    let mut fallbacks = Vec::new();
    let normals = (0..nv)
        .map(|v| {
            if let Some(n) = math::normalized(weighted[v]) {
                n
            } else if let Some(n) = math::normalized(unit_sum[v]) {
                fallbacks.push((v, NormalFallback::Unweighted));
                n
            } else {
                log::warn!("vertex {v}: no usable incident face normal, substituting +z");
                fallbacks.push((v, NormalFallback::Arbitrary));
                [0.0, 0.0, 1.0]
            }
        })
        .collect();
    (normals, fallbacks)
}

/// Which per-vertex quantities feed the operator networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    Positions,
    PositionsNormals,
}

impl FeatureKind {
    pub fn dim(self) -> usize {
        match self {
            FeatureKind::Positions => 3,
            FeatureKind::PositionsNormals => 6,
        }
    }
}

/// Row-major `|V| × D` matrix of per-vertex input features.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexFeatures {
    dim: usize,
    data: Vec<f64>,
}

impl VertexFeatures {
    pub fn new(dim: usize, data: Vec<f64>) -> Self {
        assert!(dim > 0 && data.len() % dim == 0, "feature matrix shape");
        Self { dim, data }
    }

    pub fn from_mesh(mesh: &Mesh, kind: FeatureKind) -> Self {
        let mut data = Vec::with_capacity(mesh.num_vertices() * kind.dim());
        match kind {
            FeatureKind::Positions => {
                for v in mesh.vertices() {
                    data.extend_from_slice(v);
                }
            }
            FeatureKind::PositionsNormals => {
                let (normals, _) = vertex_normals(mesh);
                for (v, n) in mesh.vertices().iter().zip(&normals) {
                    data.extend_from_slice(v);
                    data.extend_from_slice(n);
                }
            }
        }
        Self { dim: kind.dim(), data }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn num_rows(&self) -> usize {
        self.data.len() / self.dim
    }

    #[inline]
    pub fn row(&self, v: usize) -> &[f64] {
        &self.data[v * self.dim..(v + 1) * self.dim]
    }
}
