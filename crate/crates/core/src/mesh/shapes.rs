//! Procedural meshes: platonic solids, subdivided spheres, flat grids and the
//! creased square used by the dihedral-angle task.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Mesh;
use crate::math::{self, Vec3};

/// Quads along the direction crossing the crease, and along the crease.
pub const DIHEDRAL_GRID: (usize, usize) = (10, 5);

pub fn tetrahedron() -> Mesh {
    let v = alloc::vec![[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]];
    Mesh::new(v, alloc::vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]]).expect("valid tetrahedron")
}

pub fn octahedron() -> Mesh {
    let v = alloc::vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, -1.0],];
    let t = alloc::vec![[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4], [1, 0, 5], [2, 1, 5], [3, 2, 5], [0, 3, 5]];
    Mesh::new(v, t).expect("valid octahedron")
}

/// Regular icosahedron with vertices on the unit sphere.
pub fn icosahedron() -> Mesh {
    let p = (1.0 + math::sqrt(5.0)) / 2.0;
    let raw: [Vec3; 12] = [
        [-1.0, p, 0.0],
        [1.0, p, 0.0],
        [-1.0, -p, 0.0],
        [1.0, -p, 0.0],
        [0.0, -1.0, p],
        [0.0, 1.0, p],
        [0.0, -1.0, -p],
        [0.0, 1.0, -p],
        [p, 0.0, -1.0],
        [p, 0.0, 1.0],
        [-p, 0.0, -1.0],
        [-p, 0.0, 1.0],
    ];
    let verts = raw.iter().map(|&v| math::normalized(v).unwrap()).collect();
    let tris = alloc::vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    Mesh::new(verts, tris).expect("valid icosahedron")
}

/// Icosahedron refined `levels` times by 1-to-4 splits, projected to the
/// unit sphere. Face count is `20 · 4^levels`.
pub fn icosphere(levels: usize) -> Mesh {
    let base = icosahedron();
    let mut verts: Vec<Vec3> = base.vertices().to_vec();
    let mut tris: Vec<[usize; 3]> = base.triangles().to_vec();
    for _ in 0..levels {
        let mut mid: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut next = Vec::with_capacity(tris.len() * 4);
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vec3>| -> usize {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let m = math::scale(math::add(verts[a], verts[b]), 0.5);
                verts.push(math::normalized(m).unwrap());
                verts.len() - 1
            })
        };
        for &[a, b, c] in &tris {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        tris = next;
    }
    Mesh::new(verts, tris).expect("valid icosphere")
}

/// Flat `nx × ny` quad grid of size `width × height` centered at the origin
/// in the `z = 0` plane, each quad split along the same diagonal, facing `+z`.
pub fn grid(nx: usize, ny: usize, width: f64, height: f64) -> Mesh {
    let mut verts = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let x = width * (i as f64 / nx as f64 - 0.5);
            let y = height * (j as f64 / ny as f64 - 0.5);
            verts.push([x, y, 0.0]);
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut tris = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            tris.push([a, b, c]);
            tris.push([a, c, d]);
        }
    }
    Mesh::new(verts, tris).expect("valid grid")
}

/// Square `[-1, 1]²` built from an `nx × ny` grid (`nx` even) and folded
/// along `x = 0` so the two halves meet at dihedral angle `theta`.
///
/// The half `x ≥ 0` stays in the `z = 0` plane. `theta = π` is flat; angles
/// below `π` fold the other half towards `+z`, above `π` towards `−z`.
pub fn creased_grid(nx: usize, ny: usize, theta: f64) -> Mesh {
    assert!(nx % 2 == 0, "crease must run along a vertex column");
    let flat = grid(nx, ny, 2.0, 2.0);
    let fold = core::f64::consts::PI - theta;
    let (c, s) = (math::cos(fold), math::sin(fold));
    let verts = flat.vertices().iter().map(|&[x, y, _]| if x < 0.0 { [x * c, y, -x * s] } else { [x, y, 0.0] }).collect();
    flat.with_vertices(verts)
}

/// The 100-face creased square used by the dihedral-angle task.
pub fn dihedral(theta: f64) -> Mesh {
    creased_grid(DIHEDRAL_GRID.0, DIHEDRAL_GRID.1, theta)
}

/// Adds independent uniform noise in `[-amount, amount]` to every coordinate.
pub fn jitter(mesh: &Mesh, amount: f64, seed: u64) -> Mesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let verts = mesh
        .vertices()
        .iter()
        .map(|v| {
            let mut p = *v;
            for c in &mut p {
                *c += rng.random_range(-amount..=amount);
            }
            p
        })
        .collect();
    mesh.with_vertices(verts)
}

/// Signed volume enclosed by a closed mesh (positive for outward orientation).
pub fn signed_volume(mesh: &Mesh) -> f64 {
    mesh.triangles()
        .iter()
        .map(|&[a, b, c]| {
            let v = mesh.vertices();
            math::dot(v[a], math::cross(v[b], v[c])) / 6.0
        })
        .sum()
}
