//! Dataset manifests and per-epoch sample preparation.
//!
//! A manifest is TOML. Paths are relative to the manifest's directory.
//!
//! ```toml
//! task = "segmentation"     # segmentation | classification | dihedral
//!
//! [[sample]]
//! mesh = "meshes/a.obj"
//! labels = "labels/a.txt"   # segmentation: one class per face
//!
//! [[sample]]
//! mesh = "meshes/b.off"
//! class = 3                 # classification
//!
//! [[sample]]
//! mesh = "meshes/c.obj"
//! theta = 1.25              # dihedral: crease angle in radians
//! ```

use std::path::{Path, PathBuf};

use hodgenet_core::mesh::{augment, decimate, normalize, AugmentConfig, FeatureKind, Mesh, MeshError};
use hodgenet_core::model::{Example, Executor, Prepared};
use hodgenet_core::tasks::{transfer_labels, Label, Provenance, TaskError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{RunConfig, TaskName};
use crate::io::{load_labels, load_mesh, IoError};

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{path}: {msg}")]
    Manifest { path: PathBuf, msg: String },
    #[error("{path}: manifest lists no samples")]
    Empty { path: PathBuf },
    #[error("{name}: {source}")]
    Label { name: String, source: TaskError },
    #[error("{name}: {source}")]
    Mesh { name: String, source: MeshError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Entry {
    pub mesh: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub task: TaskName,
    #[serde(default, rename = "sample")]
    pub samples: Vec<Entry>,
}

impl Manifest {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}

/// A normalized mesh with its label; `name` is the mesh path as listed.
#[derive(Debug, Clone)]
pub struct Sample {
    pub name: String,
    pub mesh: Mesh,
    pub label: Label,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub task: TaskName,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Checks label kinds and ranges against the run configuration.
    pub fn check(&self, cfg: &RunConfig) -> Result<(), DataError> {
        let classes = (cfg.task.kind != TaskName::Dihedral).then_some(cfg.task.classes);
        for s in &self.samples {
            let sample = hodgenet_core::tasks::LabeledSample { mesh: s.mesh.clone(), label: s.label.clone(), provenance: Provenance::default() };
            sample.validate(classes).map_err(|source| DataError::Label { name: s.name.clone(), source })?;
        }
        Ok(())
    }
}

pub fn load_manifest(path: &Path) -> Result<Manifest, DataError> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Io { path: path.to_path_buf(), source })?;
    toml::from_str(&text).map_err(|e| DataError::Manifest { path: path.to_path_buf(), msg: e.to_string() })
}

/// Loads every listed mesh, normalized, with its label.
pub fn load_dataset(path: &Path) -> Result<Dataset, DataError> {
    let manifest = load_manifest(path)?;
    if manifest.samples.is_empty() {
        return Err(DataError::Empty { path: path.to_path_buf() });
    }
    let dir = path.parent().unwrap_or(Path::new(""));
    let mut samples = Vec::with_capacity(manifest.samples.len());
    for (i, e) in manifest.samples.iter().enumerate() {
        let bad = |msg: &str| DataError::Manifest { path: path.to_path_buf(), msg: format!("sample {i}: {msg}") };
        let label = match (manifest.task, &e.labels, e.class, e.theta) {
            (TaskName::Segmentation, Some(l), None, None) => Label::Faces(load_labels(&dir.join(l))?),
            (TaskName::Classification, None, Some(c), None) => Label::Class(c),
            (TaskName::Dihedral, None, None, Some(t)) => Label::Angle(t),
            _ => return Err(bad("needs exactly the label field of the manifest task")),
        };
        let name = e.mesh.display().to_string();
        let mesh = normalize(&load_mesh(&dir.join(&e.mesh))?).map_err(|source| DataError::Mesh { name: name.clone(), source })?;
        samples.push(Sample { name, mesh, label });
    }
    Ok(Dataset { task: manifest.task, samples })
}

/// Seed for `(run seed, epoch, sample)`.
pub fn sample_seed(seed: u64, epoch: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    rng.set_word_pos(u128::from(index) * 16);
    rng.random()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Augmentation {
    pub decimate: Option<[usize; 2]>,
    pub geometric: AugmentConfig,
}

impl Augmentation {
    pub fn is_identity(&self) -> bool {
        self.decimate.is_none() && self.geometric.aniso_max == 0.0 && !self.geometric.rotate
    }
}

fn prepare_one(s: &Sample, aug: &Augmentation, features: FeatureKind, seed: u64) -> Result<Example, DataError> {
    let mesh_err = |source| DataError::Mesh { name: s.name.clone(), source };
    let mut mesh = s.mesh.clone();
    let mut label = s.label.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if let Some([lo, hi]) = aug.decimate {
        let target = rng.random_range(lo..=hi);
        if target < mesh.num_triangles() {
            let d = decimate(&mesh, target, rng.random()).map_err(mesh_err)?;
            if let Label::Faces(l) = &label {
                label = Label::Faces(transfer_labels(&mesh, l, &d.mesh));
            }
            mesh = normalize(&d.mesh).map_err(mesh_err)?;
        }
    }
    if aug.geometric.aniso_max > 0.0 || aug.geometric.rotate {
        mesh = augment(&mesh, &aug.geometric, rng.random()).map_err(mesh_err)?.0;
    }
    Ok(Example { prepared: Prepared::new(mesh, features), label })
}

/// Network-ready examples for one epoch; sample `i` is augmented with
/// `sample_seed(seed, epoch, i)`.
pub fn prepare<E: Executor>(data: &Dataset, aug: &Augmentation, features: FeatureKind, seed: u64, epoch: u64, exec: &E) -> Result<Vec<Example>, DataError> {
    exec.map(data.len(), |i| prepare_one(&data.samples[i], aug, features, sample_seed(seed, epoch, i as u64))).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use hodgenet_core::mesh::shapes;
    use hodgenet_core::model::Sequential;

    fn sample(mesh: Mesh, label: Label) -> Sample {
        Sample { name: "s".into(), mesh, label }
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let a = sample_seed(1, 2, 3);
        assert_eq!(a, sample_seed(1, 2, 3));
        assert_ne!(a, sample_seed(1, 2, 4));
        assert_ne!(a, sample_seed(1, 3, 3));
        assert_ne!(a, sample_seed(2, 2, 3));
    }

    #[test]
    fn decimation_remaps_labels() {
        let mesh = normalize(&shapes::icosphere(2)).unwrap();
        let labels: Vec<usize> = mesh.triangles().iter().enumerate().map(|(t, _)| usize::from(mesh.triangle_centroid(t)[2] > 0.0)).collect();
        let data = Dataset { task: TaskName::Segmentation, samples: vec![sample(mesh, Label::Faces(labels))] };
        let aug = Augmentation { decimate: Some([100, 120]), geometric: AugmentConfig { aniso_max: 0.05, rotate: true } };
        let ex = prepare(&data, &aug, FeatureKind::PositionsNormals, 0, 0, &Sequential).unwrap();
        let Label::Faces(l) = &ex[0].label else { panic!() };
        let nt = ex[0].prepared.mesh.num_triangles();
        assert!((100..=120).contains(&nt), "{nt}");
        assert_eq!(l.len(), nt);
        assert!(l.contains(&0) && l.contains(&1));
        let again = prepare(&data, &aug, FeatureKind::PositionsNormals, 0, 0, &Sequential).unwrap();
        assert_eq!(again[0].prepared.mesh, ex[0].prepared.mesh);
    }

    #[test]
    fn identity_augmentation_keeps_mesh() {
        let mesh = normalize(&shapes::octahedron()).unwrap();
        let data = Dataset { task: TaskName::Classification, samples: vec![sample(mesh.clone(), Label::Class(1))] };
        let aug = Augmentation { decimate: None, geometric: AugmentConfig { aniso_max: 0.0, rotate: false } };
        assert!(aug.is_identity());
        let ex = prepare(&data, &aug, FeatureKind::Positions, 0, 5, &Sequential).unwrap();
        assert_eq!(ex[0].prepared.mesh, mesh);
    }
}
