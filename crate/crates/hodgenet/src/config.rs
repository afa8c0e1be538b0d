//! Run configuration, read from TOML. Every field has a default, so an empty
//! file is a valid configuration; `RunConfig::default().to_toml()` prints
//! the full set.

use std::path::PathBuf;

use hodgenet_core::eig::EigConfig;
use hodgenet_core::mesh::{AugmentConfig, FeatureKind};
use hodgenet_core::model::{ModelConfig, Spectrum, TaskKind};
use hodgenet_core::nn::AdamWConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskName {
    Segmentation,
    Classification,
    Dihedral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureName {
    Positions,
    PositionsNormals,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumName {
    Truncated,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSection {
    pub kind: TaskName,
    /// Ignored for the dihedral task.
    pub classes: usize,
}

impl Default for TaskSection {
    fn default() -> Self {
        Self { kind: TaskName::Segmentation, classes: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub k: usize,
    pub n: usize,
    pub m: usize,
    pub extra: usize,
    pub eps: f64,
    /// Task default when absent: positions only for the dihedral task.
    pub features: Option<FeatureName>,
    pub width: usize,
    pub depth: usize,
    /// Task default when absent: 64 for classification, else 32.
    pub head_width: Option<usize>,
    pub head_depth: usize,
    pub spectrum: SpectrumName,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = ModelConfig::new(TaskKind::Dihedral);
        Self {
            k: d.k,
            n: d.n,
            m: d.m,
            extra: d.extra,
            eps: d.eps,
            features: None,
            width: d.width,
            depth: d.depth,
            head_width: None,
            head_depth: d.head_depth,
            spectrum: SpectrumName::Truncated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigenSection {
    pub tol: f64,
    pub max_iter: usize,
    pub shift_scale: f64,
}

impl Default for EigenSection {
    fn default() -> Self {
        let e = EigConfig::default();
        Self { tol: e.tol, max_iter: e.max_iter, shift_scale: e.shift_scale }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let a = AdamWConfig::default();
        Self { lr: a.lr, beta1: a.beta1, beta2: a.beta2, eps: a.eps, weight_decay: a.weight_decay, clip_norm: a.clip_norm, batch_size: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSection {
    /// Random decimation to a face count drawn from `[min, max]`; meshes
    /// already below the drawn count are left alone.
    pub decimate: Option<[usize; 2]>,
    pub aniso_max: f64,
    pub rotate: bool,
}

impl Default for AugmentSection {
    fn default() -> Self {
        Self { decimate: None, aniso_max: 0.0, rotate: false }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub train: Option<PathBuf>,
    /// Selects the best checkpoint; the training set is used when absent.
    pub val: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Appends one `(λ, residual)` line per solve when set.
    pub eigen_log: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Epochs with augmentation.
    pub epochs: usize,
    /// Further epochs without decimation or scaling; rotation stays on.
    pub finetune_epochs: usize,
    /// Worker threads; 0 defers to `HODGENET_THREADS`, then to all CPUs.
    pub threads: usize,
    pub task: TaskSection,
    pub model: ModelSection,
    pub eigen: EigenSection,
    pub optimizer: OptimizerSection,
    pub augment: AugmentSection,
    pub paths: PathsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 100,
            finetune_epochs: 0,
            threads: 0,
            task: TaskSection::default(),
            model: ModelSection::default(),
            eigen: EigenSection::default(),
            optimizer: OptimizerSection::default(),
            augment: AugmentSection::default(),
            paths: PathsSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn task_kind(&self) -> TaskKind {
        match self.task.kind {
            TaskName::Segmentation => TaskKind::Segmentation { classes: self.task.classes },
            TaskName::Classification => TaskKind::Classification { classes: self.task.classes },
            TaskName::Dihedral => TaskKind::Dihedral,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        let mut c = ModelConfig::new(self.task_kind());
        let m = &self.model;
        c.k = m.k;
        c.n = m.n;
        c.m = m.m;
        c.extra = m.extra;
        c.eps = m.eps;
        if let Some(f) = m.features {
            c.features = match f {
                FeatureName::Positions => FeatureKind::Positions,
                FeatureName::PositionsNormals => FeatureKind::PositionsNormals,
            };
        }
        c.width = m.width;
        c.depth = m.depth;
        if let Some(w) = m.head_width {
            c.head_width = w;
        }
        c.head_depth = m.head_depth;
        c.spectrum = match m.spectrum {
            SpectrumName::Truncated => Spectrum::Truncated,
            SpectrumName::Full => Spectrum::Full,
        };
        c.eig = EigConfig { tol: self.eigen.tol, max_iter: self.eigen.max_iter, shift_scale: self.eigen.shift_scale, seed: self.seed, ..EigConfig::default() };
        let o = &self.optimizer;
        c.optimizer = AdamWConfig { lr: o.lr, beta1: o.beta1, beta2: o.beta2, eps: o.eps, weight_decay: o.weight_decay, clip_norm: o.clip_norm };
        c.seed = self.seed;
        c
    }

    pub fn augment_config(&self) -> AugmentConfig {
        AugmentConfig { aniso_max: self.augment.aniso_max, rotate: self.augment.rotate }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.task.kind != TaskName::Dihedral && self.task.classes < 2 {
            return bad("task.classes must be at least 2");
        }
        if self.optimizer.batch_size == 0 {
            return bad("optimizer.batch_size must be positive");
        }
        if let Some([lo, hi]) = self.augment.decimate {
            if lo == 0 || lo > hi {
                return bad("augment.decimate must be [min, max] with 0 < min <= max");
            }
        }
        if !(0.0..1.0).contains(&self.augment.aniso_max) {
            return bad("augment.aniso_max must lie in [0, 1)");
        }
        self.model_config().validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// SHA-256 over everything that fixes the network's shape and meaning:
    /// the task and model sections.
    pub fn model_hash(&self) -> [u8; 32] {
        #[derive(Serialize)]
        struct Key<'a> {
            task: &'a TaskSection,
            model: &'a ModelSection,
        }
        let text = toml::to_string(&Key { task: &self.task, model: &self.model }).expect("config serializes");
        Sha256::digest(text.as_bytes()).into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c, RunConfig::default());
        let m = c.model_config();
        assert_eq!((m.k, m.n, m.m, m.extra, m.eps), (4, 32, 32, 32, 1e-4));
        assert_eq!(m.features, FeatureKind::PositionsNormals);
        assert_eq!(c.optimizer.batch_size, 16);
    }

    #[test]
    fn dump_round_trips() {
        let mut c = RunConfig::default();
        c.augment.decimate = Some([1000, 2000]);
        c.paths.train = Some("t.toml".into());
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn task_defaults_apply() {
        let c = RunConfig::from_toml("[task]\nkind = \"classification\"\nclasses = 30\n").unwrap();
        assert_eq!(c.model_config().head_width, 64);
        let c = RunConfig::from_toml("[task]\nkind = \"dihedral\"\n").unwrap();
        assert_eq!(c.model_config().features, FeatureKind::Positions);
        let c = RunConfig::from_toml("[task]\nkind = \"dihedral\"\n[model]\nfeatures = \"positions_normals\"\n").unwrap();
        assert_eq!(c.model_config().features, FeatureKind::PositionsNormals);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(RunConfig::from_toml("[model]\nkk = 3\n"), Err(ConfigError::Parse(_))));
        assert!(matches!(RunConfig::from_toml("[optimizer]\nbatch_size = 0\n"), Err(ConfigError::Invalid(_))));
        assert!(matches!(RunConfig::from_toml("[augment]\ndecimate = [20, 10]\n"), Err(ConfigError::Invalid(_))));
        assert!(matches!(RunConfig::from_toml("[model]\nk = 0\n"), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn hash_tracks_model_only() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.epochs = 3;
        b.optimizer.lr = 1.0;
        assert_eq!(a.model_hash(), b.model_hash());
        b.model.k = 2;
        assert_ne!(a.model_hash(), b.model_hash());
    }
}
