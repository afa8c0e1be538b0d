//! Quadric-error edge collapse with randomized candidate selection.
//!
//! Each round scores every edge, draws collapses in random order from the
//! cheapest 5%, and applies those that keep the surface an oriented manifold.
//! Vertices touched by a collapse are frozen for the rest of the round so
//! the scores used stay valid.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Mesh, MeshError};
use crate::math::{self, Vec3};

const CANDIDATE_FRACTION: f64 = 0.05;
const BOUNDARY_WEIGHT: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Decimated {
    pub mesh: Mesh,
    /// Set when no legal collapse remained before reaching the target.
    pub best_effort: bool,
}

/// Reduces `mesh` to between `target_faces` and `target_faces + 2` faces.
pub fn decimate(mesh: &Mesh, target_faces: usize, seed: u64) -> Result<Decimated, MeshError> {
    if target_faces < 4 || target_faces > mesh.num_triangles() {
        return Err(MeshError::InvalidArgument(alloc::format!("target face count {target_faces} must lie in [4, {}]", mesh.num_triangles())));
    }
    if target_faces + 2 >= mesh.num_triangles() {
        return Ok(Decimated { mesh: mesh.clone(), best_effort: false });
    }
    let mut state = State::new(mesh);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best_effort = false;
    let limit = target_faces + 2;

    while state.face_count > limit {
        let mut cands = state.candidates();
        cands.sort_by(|x, y| x.cost.total_cmp(&y.cost).then((x.a, x.b).cmp(&(y.a, y.b))));
        let pool = (libm::ceil(cands.len() as f64 * CANDIDATE_FRACTION) as usize).clamp(1, cands.len().max(1));
        let split = pool.min(cands.len());
        let (head, tail) = cands.split_at_mut(split);
        head.shuffle(&mut rng);

        let mut frozen = vec![false; state.pos.len()];
        let mut collapsed = 0usize;
        for c in head.iter() {
            if state.face_count <= limit {
                break;
            }
            if frozen[c.a] || frozen[c.b] {
                continue;
            }
            if state.try_collapse(c.a, c.b, c.target) {
                collapsed += 1;
                frozen[c.a] = true;
                for &t in &state.vtris[c.a] {
                    for &v in &state.tris[t] {
                        frozen[v] = true;
                    }
                }
            }
        }
        if collapsed == 0 {
            // Nothing legal among the cheapest; fall back to the full ordering.
            let found = tail.iter().any(|c| state.try_collapse(c.a, c.b, c.target));
            if !found {
                log::warn!("decimation stopped at {} faces (target {target_faces}): no legal collapse left", state.face_count);
                best_effort = true;
                break;
            }
        }
    }
    Ok(Decimated { mesh: state.finish()?, best_effort })
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    a: usize,
    b: usize,
    cost: f64,
    target: Vec3,
}

/// Symmetric 4×4 quadric stored as its upper triangle.
#[derive(Debug, Clone, Copy, Default)]
struct Quadric([f64; 10]);

impl Quadric {
    fn plane(n: Vec3, d: f64, w: f64) -> Self {
        let p = [n[0], n[1], n[2], d];
        let mut q = [0.0; 10];
        let mut k = 0;
        for i in 0..4 {
            for j in i..4 {
                q[k] = w * p[i] * p[j];
                k += 1;
            }
        }
        Quadric(q)
    }

    fn add(&mut self, o: &Quadric) {
        for (a, b) in self.0.iter_mut().zip(o.0.iter()) {
            *a += b;
        }
    }

    fn sum(&self, o: &Quadric) -> Quadric {
        let mut s = *self;
        s.add(o);
        s
    }

    fn eval(&self, p: Vec3) -> f64 {
        let q = &self.0;
        let (x, y, z) = (p[0], p[1], p[2]);
        q[0] * x * x
            + 2.0 * q[1] * x * y
            + 2.0 * q[2] * x * z
            + 2.0 * q[3] * x
            + q[4] * y * y
            + 2.0 * q[5] * y * z
            + 2.0 * q[6] * y
            + q[7] * z * z
            + 2.0 * q[8] * z
            + q[9]
    }

    /// Minimizer of the quadric, when its 3×3 block is well conditioned.
    fn minimizer(&self) -> Option<Vec3> {
        let q = &self.0;
        let (a, b, c, d, e, f) = (q[0], q[1], q[2], q[4], q[5], q[7]);
        let rhs = [-q[3], -q[6], -q[8]];
        let det = a * (d * f - e * e) - b * (b * f - c * e) + c * (b * e - c * d);
        let scale = a.abs().max(d.abs()).max(f.abs());
        if !(det.abs() > 1e-10 * scale * scale * scale) {
            return None;
        }
        let inv = [[d * f - e * e, c * e - b * f, b * e - c * d], [c * e - b * f, a * f - c * c, b * c - a * e], [b * e - c * d, b * c - a * e, a * d - b * b]];
        let p = [math::dot(inv[0], rhs) / det, math::dot(inv[1], rhs) / det, math::dot(inv[2], rhs) / det];
        p.iter().all(|c| c.is_finite()).then_some(p)
    }
}

struct State {
    pos: Vec<Vec3>,
    tris: Vec<[usize; 3]>,
    tri_alive: Vec<bool>,
    vtris: Vec<Vec<usize>>,
    quadrics: Vec<Quadric>,
    face_count: usize,
}

impl State {
    fn new(mesh: &Mesh) -> Self {
        let pos = mesh.vertices().to_vec();
        let tris = mesh.triangles().to_vec();
        let mut quadrics = vec![Quadric::default(); pos.len()];
        for t in 0..tris.len() {
            let raw = mesh.triangle_normal_raw(t);
            let Some(n) = math::normalized(raw) else { continue };
            let area = 0.5 * math::norm(raw);
            let q = Quadric::plane(n, -math::dot(n, pos[tris[t][0]]), area);
            for &v in &tris[t] {
                quadrics[v].add(&q);
            }
        }
        for (e, &[a, b]) in mesh.edges().iter().enumerate() {
            if !mesh.boundary_flags()[e] {
                continue;
            }
            let t = mesh.edge_triangles()[e].iter().flatten().next().copied().unwrap();
            let Some(n) = math::normalized(mesh.triangle_normal_raw(t)) else { continue };
            let dir = math::sub(pos[b], pos[a]);
            let Some(side) = math::normalized(math::cross(dir, n)) else { continue };
            let q = Quadric::plane(side, -math::dot(side, pos[a]), BOUNDARY_WEIGHT * math::dot(dir, dir));
            quadrics[a].add(&q);
            quadrics[b].add(&q);
        }
        Self { vtris: mesh.vertex_triangles(), tri_alive: vec![true; tris.len()], face_count: tris.len(), pos, tris, quadrics }
    }

    fn candidates(&self) -> Vec<Candidate> {
        let mut edges: Vec<(usize, usize)> = Vec::with_capacity(3 * self.face_count);
        for (t, tri) in self.tris.iter().enumerate() {
            if !self.tri_alive[t] {
                continue;
            }
            for i in 0..3 {
                let (p, q) = (tri[i], tri[(i + 1) % 3]);
                edges.push((p.min(q), p.max(q)));
            }
        }
        edges.sort_unstable();
        edges.dedup();
        edges
            .into_iter()
            .map(|(a, b)| {
                let q = self.quadrics[a].sum(&self.quadrics[b]);
                let mid = math::scale(math::add(self.pos[a], self.pos[b]), 0.5);
                let mut best = (q.eval(mid), mid);
                for p in [q.minimizer(), Some(self.pos[a]), Some(self.pos[b])].into_iter().flatten() {
                    let c = q.eval(p);
                    if c < best.0 {
                        best = (c, p);
                    }
                }
                Candidate { a, b, cost: best.0.max(0.0), target: best.1 }
            })
            .collect()
    }

    fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut n: Vec<usize> = self.vtris[v].iter().flat_map(|&t| self.tris[t]).filter(|&u| u != v).collect();
        n.sort_unstable();
        n.dedup();
        n
    }

    fn is_boundary_vertex(&self, v: usize) -> bool {
        self.neighbors(v).into_iter().any(|u| self.vtris[v].iter().filter(|&&t| self.tris[t].contains(&u)).count() == 1)
    }

    fn is_boundary_edge(&self, a: usize, b: usize) -> bool {
        self.vtris[a].iter().filter(|&&t| self.tris[t].contains(&b)).count() == 1
    }

    fn try_collapse(&mut self, a: usize, b: usize, p: Vec3) -> bool {
        let shared: Vec<usize> = self.vtris[a].iter().copied().filter(|&t| self.tris[t].contains(&b)).collect();
        if shared.is_empty() {
            return false;
        }
        let mut opp: Vec<usize> = shared.iter().map(|&t| *self.tris[t].iter().find(|&&v| v != a && v != b).unwrap()).collect();
        opp.sort_unstable();

        // Link condition.
        let (na, nb) = (self.neighbors(a), self.neighbors(b));
        let common: Vec<usize> = na.iter().copied().filter(|v| nb.binary_search(v).is_ok()).collect();
        if common != opp {
            return false;
        }
        if shared.len() == 2 && self.is_boundary_vertex(a) && self.is_boundary_vertex(b) {
            return false;
        }
        if shared.len() == 1 {
            let o = opp[0];
            if self.is_boundary_edge(a, o) && self.is_boundary_edge(b, o) {
                return false;
            }
        }

        // Reject flipped or collapsed faces around the merged vertex.
        for &v in &[a, b] {
            for &t in &self.vtris[v] {
                if shared.contains(&t) {
                    continue;
                }
                let tri = self.tris[t];
                let old = self.normal_of(tri, None);
                let new = self.normal_of(tri, Some((a, b, p)));
                let (lo, ln) = (math::norm(old), math::norm(new));
                if !(math::dot(old, new) > 0.0) || ln <= 1e-12 * lo {
                    return false;
                }
            }
        }

        for &t in &shared {
            self.tri_alive[t] = false;
        }
        let moved = core::mem::take(&mut self.vtris[b]);
        for t in moved {
            if !self.tri_alive[t] {
                continue;
            }
            for v in &mut self.tris[t] {
                if *v == b {
                    *v = a;
                }
            }
            self.vtris[a].push(t);
        }
        let alive = &self.tri_alive;
        self.vtris[a].retain(|&t| alive[t]);
        self.vtris[a].sort_unstable();
        for &o in &opp {
            self.vtris[o].retain(|&t| alive[t]);
        }
        self.pos[a] = p;
        let qb = self.quadrics[b];
        self.quadrics[a].add(&qb);
        self.face_count -= shared.len();
        true
    }

    fn normal_of(&self, tri: [usize; 3], replace: Option<(usize, usize, Vec3)>) -> Vec3 {
        let at = |v: usize| match replace {
            Some((a, b, p)) if v == a || v == b => p,
            _ => self.pos[v],
        };
        let (p0, p1, p2) = (at(tri[0]), at(tri[1]), at(tri[2]));
        math::cross(math::sub(p1, p0), math::sub(p2, p0))
    }

    fn finish(self) -> Result<Mesh, MeshError> {
        let mut remap = vec![usize::MAX; self.pos.len()];
        let mut verts = Vec::new();
        let mut tris = Vec::with_capacity(self.face_count);
        for (t, tri) in self.tris.iter().enumerate() {
            if !self.tri_alive[t] {
                continue;
            }
            for &v in tri {
                if remap[v] == usize::MAX {
                    remap[v] = 0;
                }
            }
        }
        for (v, r) in remap.iter_mut().enumerate() {
            if *r == 0 {
                *r = verts.len();
                verts.push(self.pos[v]);
            }
        }
        for (t, tri) in self.tris.iter().enumerate() {
            if self.tri_alive[t] {
                tris.push([remap[tri[0]], remap[tri[1]], remap[tri[2]]]);
            }
        }
        Mesh::new(verts, tris)
    }
}
