//! Oriented manifold triangle meshes and the combinatorial data derived
//! from them (sorted edge list, opposite vertices, boundary flags).

mod augment;
mod decimate;
mod geometry;
pub mod shapes;

pub use augment::{augment, AugmentConfig, AugmentRecord};
pub use decimate::{decimate, Decimated};
pub use geometry::{normalize, vertex_normals, FeatureKind, NormalFallback, VertexFeatures};

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::math::{self, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeshError {
    #[error("triangle {triangle} is invalid: {reason}")]
    InvalidTriangle { triangle: usize, reason: &'static str },
    /// Topology: an edge is shared by more than two triangles.
    #[error("edge ({0}, {1}) has more than two incident triangles")]
    NonManifoldEdge(usize, usize),
    /// Topology: two triangles traverse their shared edge in the same direction.
    #[error("triangles sharing edge ({0}, {1}) are inconsistently oriented")]
    InconsistentOrientation(usize, usize),
    #[error("degenerate mesh: {0}")]
    Degenerate(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Vertices opposite an edge `(v1, v2)` with `v1 < v2`.
///
/// `left` lies in the triangle that traverses `v1 → v2`, so `(v1, v2, left)`
/// is positively oriented; `right` lies in the triangle traversing `v2 → v1`,
/// so `(v2, v1, right)` is positively oriented. Boundary edges have exactly
/// one of the two.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeOpposites {
    pub left: Option<usize>,
    pub right: Option<usize>,
}

impl EdgeOpposites {
    pub fn is_boundary(&self) -> bool {
        self.left.is_none() || self.right.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    opposites: Vec<EdgeOpposites>,
    edge_triangles: Vec<[Option<usize>; 2]>,
    boundary: Vec<bool>,
}

impl Mesh {
    /// Validates connectivity and derives the edge structures. Orientation is
    /// taken as given; adjacent triangles must agree with each other.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        let nv = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(MeshError::InvalidTriangle { triangle: t, reason: "vertex index out of range" });
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(MeshError::InvalidTriangle { triangle: t, reason: "repeated vertex" });
            }
        }
        if vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(MeshError::Degenerate("non-finite vertex coordinate"));
        }

        // (lo, hi, forward, triangle, opposite) for every directed half-edge.
        let mut half: Vec<(usize, usize, bool, usize, usize)> = Vec::with_capacity(3 * triangles.len());
        for (t, &[a, b, c]) in triangles.iter().enumerate() {
            for (p, q, o) in [(a, b, c), (b, c, a), (c, a, b)] {
                half.push((p.min(q), p.max(q), p < q, t, o));
            }
        }
        half.sort_unstable();

        let mut edges = Vec::new();
        let mut opposites = Vec::new();
        let mut edge_triangles = Vec::new();
        let mut boundary = Vec::new();
        let mut i = 0;
        while i < half.len() {
            let (lo, hi) = (half[i].0, half[i].1);
            let mut j = i;
            while j < half.len() && half[j].0 == lo && half[j].1 == hi {
                j += 1;
            }
            if j - i > 2 {
                return Err(MeshError::NonManifoldEdge(lo, hi));
            }
            let mut opp = EdgeOpposites { left: None, right: None };
            let mut tris = [None, None];
            for &(_, _, forward, t, o) in &half[i..j] {
                let slot = if forward { 0 } else { 1 };
                if tris[slot].is_some() {
                    return Err(MeshError::InconsistentOrientation(lo, hi));
                }
                tris[slot] = Some(t);
                if forward {
                    opp.left = Some(o);
                } else {
                    opp.right = Some(o);
                }
            }
            edges.push([lo, hi]);
            boundary.push(opp.is_boundary());
            opposites.push(opp);
            edge_triangles.push(tris);
            i = j;
        }

        Ok(Self { vertices, triangles, edges, opposites, edge_triangles, boundary })
    }

    /// Same connectivity with new vertex positions.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Self {
        assert_eq!(vertices.len(), self.vertices.len(), "vertex count must not change");
        Self { vertices, ..self.clone() }
    }

    /// Reverses every triangle's orientation.
    pub fn flipped(&self) -> Self {
        let tris = self.triangles.iter().map(|&[a, b, c]| [a, c, b]).collect();
        Self::new(self.vertices.clone(), tris).expect("flipping preserves validity")
    }

    #[inline]
    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    #[inline]
    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Edges as `(lo, hi)` pairs sorted lexicographically.
    #[inline]
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    #[inline]
    pub fn edge_opposites(&self) -> &[EdgeOpposites] {
        &self.opposites
    }

    /// Triangles on the `left`/`right` side of each edge (see [`EdgeOpposites`]).
    #[inline]
    pub fn edge_triangles(&self) -> &[[Option<usize>; 2]] {
        &self.edge_triangles
    }

    #[inline]
    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    #[inline]
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    #[inline]
    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    #[inline]
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_boundary_edges(&self) -> usize {
        self.boundary.iter().filter(|&&b| b).count()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.num_vertices() as i64 - self.num_edges() as i64 + self.num_triangles() as i64
    }

    /// Number of closed boundary curves.
    pub fn boundary_loops(&self) -> usize {
        let mut uf = UnionFind::new(self.num_vertices());
        let mut on_boundary = vec![false; self.num_vertices()];
        for (e, &[a, b]) in self.edges.iter().enumerate() {
            if self.boundary[e] {
                uf.union(a, b);
                on_boundary[a] = true;
                on_boundary[b] = true;
            }
        }
        (0..self.num_vertices()).filter(|&v| on_boundary[v] && uf.find(v) == v).count()
    }

    /// Connected components counted over vertices referenced by triangles.
    pub fn connected_components(&self) -> usize {
        let mut uf = UnionFind::new(self.num_vertices());
        let mut used = vec![false; self.num_vertices()];
        for &[a, b, c] in &self.triangles {
            uf.union(a, b);
            uf.union(b, c);
            used[a] = true;
            used[b] = true;
            used[c] = true;
        }
        (0..self.num_vertices()).filter(|&v| used[v] && uf.find(v) == v).count()
    }

    /// Genus from `V − E + F = 2c − 2g − b`, assuming a single component.
    pub fn genus(&self) -> i64 {
        (2 - self.euler_characteristic() - self.boundary_loops() as i64) / 2
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        math::triangle_area(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    pub fn triangle_areas(&self) -> Vec<f64> {
        (0..self.num_triangles()).map(|t| self.triangle_area(t)).collect()
    }

    /// Non-normalized normal `(b − a) × (c − a)`; its length is twice the area.
    pub fn triangle_normal_raw(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        math::cross(math::sub(pb, pa), math::sub(pc, pa))
    }

    pub fn triangle_centroid(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.triangles[t];
        let s = math::add(math::add(self.vertices[a], self.vertices[b]), self.vertices[c]);
        math::scale(s, 1.0 / 3.0)
    }

    /// Triangle vertices rotated so the smallest index comes first, keeping
    /// the cyclic (orientation) order.
    pub fn canonical_triangle(&self, t: usize) -> [usize; 3] {
        let [a, b, c] = self.triangles[t];
        if a < b && a < c {
            [a, b, c]
        } else if b < c {
            [b, c, a]
        } else {
            [c, a, b]
        }
    }

    /// Vertex indices feeding the per-edge operator weight.
    ///
    /// Interior edges give `[v1, v2, v3, v4]` with `v1 < v2` and both
    /// `(v1, v2, v3)` and `(v2, v1, v4)` positively oriented. Boundary edges
    /// give the three vertices of their single triangle starting at the edge,
    /// in the triangle's orientation.
    pub fn edge_stencil(&self, e: usize) -> EdgeStencil {
        let [v1, v2] = self.edges[e];
        match (self.opposites[e].left, self.opposites[e].right) {
            (Some(v3), Some(v4)) => EdgeStencil::Interior([v1, v2, v3, v4]),
            (Some(v3), None) => EdgeStencil::Boundary([v1, v2, v3]),
            (None, Some(v4)) => EdgeStencil::Boundary([v2, v1, v4]),
            (None, None) => unreachable!("every edge has at least one triangle"),
        }
    }

    /// Sorted neighbor lists per vertex.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nbrs = vec![Vec::new(); self.num_vertices()];
        for &[a, b] in &self.edges {
            nbrs[a].push(b);
            nbrs[b].push(a);
        }
        for n in &mut nbrs {
            n.sort_unstable();
        }
        nbrs
    }

    /// Incident triangles per vertex, ascending.
    pub fn vertex_triangles(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_vertices()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                out[v].push(t);
            }
        }
        out
    }

    /// Relabels vertices: new index of old vertex `v` is `perm[v]`.
    pub fn permute_vertices(&self, perm: &[usize]) -> Result<Self, MeshError> {
        let mut verts = vec![[0.0; 3]; self.num_vertices()];
        for (v, &p) in perm.iter().enumerate() {
            verts[p] = self.vertices[v];
        }
        let tris = self.triangles.iter().map(|t| [perm[t[0]], perm[t[1]], perm[t[2]]]).collect();
        Self::new(verts, tris)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeStencil {
    Interior([usize; 4]),
    Boundary([usize; 3]),
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Smaller root wins so results do not depend on call order.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}
