use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{normalize, Mesh, MeshError};
use crate::math::{self, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    /// Per-axis scale factors are drawn from `[1 − aniso_max, 1 + aniso_max]`.
    pub aniso_max: f64,
    pub rotate: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { aniso_max: 0.05, rotate: false }
    }
}

/// What was applied, for logging and reproduction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentRecord {
    pub scale: Vec3,
    /// Row-major rotation matrix (identity when rotation is off).
    pub rotation: [[f64; 3]; 3],
}

/// Anisotropic scaling, then an optional uniformly random rotation, then
/// re-normalization. A pure function of `(mesh, cfg, seed)`.
pub fn augment(mesh: &Mesh, cfg: &AugmentConfig, seed: u64) -> Result<(Mesh, AugmentRecord), MeshError> {
    if !(0.0..=0.5).contains(&cfg.aniso_max) {
        return Err(MeshError::InvalidArgument(alloc::format!("aniso_max must lie in [0, 0.5], got {}", cfg.aniso_max)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scale = [1.0; 3];
    if cfg.aniso_max > 0.0 {
        for s in &mut scale {
            *s = rng.random_range(1.0 - cfg.aniso_max..=1.0 + cfg.aniso_max);
        }
    }
    let rotation = if cfg.rotate { random_rotation(&mut rng) } else { IDENTITY };
    let verts = mesh
        .vertices()
        .iter()
        .map(|v| {
            let s = [v[0] * scale[0], v[1] * scale[1], v[2] * scale[2]];
            rotate(&rotation, s)
        })
        .collect();
    let out = normalize(&mesh.with_vertices(verts))?;
    Ok((out, AugmentRecord { scale, rotation }))
}

const IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

#[inline]
pub(crate) fn rotate(r: &[[f64; 3]; 3], v: Vec3) -> Vec3 {
    [math::dot(r[0], v), math::dot(r[1], v), math::dot(r[2], v)]
}

/// Haar-uniform rotation from a uniformly sampled unit quaternion.
pub(crate) fn random_rotation(rng: &mut impl Rng) -> [[f64; 3]; 3] {
    use core::f64::consts::TAU;
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let (a, b) = (math::sqrt(1.0 - u1), math::sqrt(u1));
    let (x, y, z, w) = (a * math::sin(TAU * u2), a * math::cos(TAU * u2), b * math::sin(TAU * u3), b * math::cos(TAU * u3));
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
        [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
        [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;

    fn extents(m: &Mesh) -> Vec3 {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in m.vertices() {
            for c in 0..3 {
                lo[c] = lo[c].min(v[c]);
                hi[c] = hi[c].max(v[c]);
            }
        }
        math::sub(hi, lo)
    }

    #[test]
    fn no_op_config_leaves_normalized_mesh() {
        let m = normalize(&shapes::jitter(&shapes::icosphere(1), 0.05, 3)).unwrap();
        let (a, rec) = augment(&m, &AugmentConfig { aniso_max: 0.0, rotate: false }, 9).unwrap();
        assert_eq!(rec.scale, [1.0; 3]);
        for (p, q) in m.vertices().iter().zip(a.vertices()) {
            assert!(math::norm(math::sub(*p, *q)) < 1e-12);
        }
    }

    #[test]
    fn rotation_is_an_isometry() {
        let m = normalize(&shapes::jitter(&shapes::icosphere(1), 0.05, 4)).unwrap();
        let (a, rec) = augment(&m, &AugmentConfig { aniso_max: 0.0, rotate: true }, 11).unwrap();
        let r = rec.rotation;
        for i in 0..3 {
            for j in 0..3 {
                let d = math::dot(r[i], r[j]);
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        let v0 = m.vertices();
        let v1 = a.vertices();
        for i in 0..v0.len() {
            for j in 0..i {
                let d0 = math::norm(math::sub(v0[i], v0[j]));
                let d1 = math::norm(math::sub(v1[i], v1[j]));
                assert!((d0 - d1).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn anisotropic_extents_stay_within_bounds() {
        let m = shapes::icosphere(2);
        for seed in 0..10 {
            let (a, rec) = augment(&m, &AugmentConfig { aniso_max: 0.05, rotate: false }, seed).unwrap();
            assert!(rec.scale.iter().all(|s| (0.95..=1.05).contains(s)));
            // Undo the uniform normalization factor using the x axis, then
            // every axis ratio must reproduce its drawn factor.
            let (e0, e1) = (extents(&m), extents(&a));
            let uniform = e1[0] / (e0[0] * rec.scale[0]);
            for c in 0..3 {
                let ratio = e1[c] / (e0[c] * uniform);
                assert!((ratio - rec.scale[c]).abs() < 1e-12);
                assert!((0.95..=1.05).contains(&ratio));
            }
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let m = shapes::icosphere(1);
        let cfg = AugmentConfig { aniso_max: 0.05, rotate: true };
        assert_eq!(augment(&m, &cfg, 5).unwrap(), augment(&m, &cfg, 5).unwrap());
        assert_ne!(augment(&m, &cfg, 5).unwrap().0, augment(&m, &cfg, 6).unwrap().0);
    }

    #[test]
    fn rejects_large_anisotropy() {
        let m = shapes::icosahedron();
        assert!(augment(&m, &AugmentConfig { aniso_max: 0.6, rotate: false }, 0).is_err());
    }
}
