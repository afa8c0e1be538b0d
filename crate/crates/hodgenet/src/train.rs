//! Epoch loop: shuffled minibatches, per-epoch evaluation in eval mode,
//! metrics CSV, and best/last checkpoints.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use hodgenet_core::model::{Example, Executor, HodgeNet, Prediction, Prepared};
use hodgenet_core::nn::{Mode, StepOutcome};
use hodgenet_core::tasks::Metrics;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::checkpoint::{self, CheckpointError};
use crate::config::{RunConfig, TaskName};
use crate::dataset::{prepare, sample_seed, Augmentation, DataError, Dataset};
use crate::io::{eigen_log_line, write_file, IoError};

/// Fraction of an epoch's training meshes that may fail before training
/// stops.
pub const MAX_SKIP_FRACTION: f64 = 0.1;

pub const METRICS_HEADER: &str =
    "epoch,phase,train_loss,train_skipped,steps_skipped,eval_loss,eval_accuracy,eval_area_weighted_accuracy,eval_mean_angle_error_deg,eval_skipped";

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Model(#[from] hodgenet_core::Error),
    #[error("epoch {epoch}: {skipped} of {total} training meshes failed, above the {:.0}% limit", MAX_SKIP_FRACTION * 100.0)]
    SkipRate { epoch: usize, skipped: usize, total: usize },
    #[error("manifest task {manifest:?} does not match configured task {config:?}")]
    TaskMismatch { manifest: TaskName, config: TaskName },
    #[error("no mesh could be evaluated")]
    NothingEvaluated,
}

/// Dataset-level metrics. Segmentation accuracies are weighted by face
/// count and by surface area across meshes; the other fields are means
/// over meshes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Summary {
    pub loss: f64,
    pub accuracy: f64,
    pub area_weighted_accuracy: f64,
    pub mean_angle_error: f64,
    pub evaluated: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub summary: Summary,
    pub per_sample: Vec<Option<(Metrics, Prediction)>>,
    /// One `(λ, residual)` line per solved mesh when requested.
    pub eigen_lines: Vec<String>,
}

/// Eval-mode pass over `examples` in batches of `batch_size`.
pub fn evaluate<E: Executor>(net: &HodgeNet, examples: &[Example], batch_size: usize, log_eigen: bool, exec: &E) -> Result<Evaluation, TrainError> {
    let mut per_sample = Vec::with_capacity(examples.len());
    let mut eigen_lines = Vec::new();
    for (c, chunk) in examples.chunks(batch_size.max(1)).enumerate() {
        let refs: Vec<&Example> = chunk.iter().collect();
        let prepared: Vec<&Prepared> = chunk.iter().map(|e| &e.prepared).collect();
        let fwd = net.forward(&prepared, Mode::Eval, exec)?;
        if log_eigen {
            for i in 0..chunk.len() {
                if let Some(sys) = fwd.eigensystem(i) {
                    eigen_lines.push(eigen_log_line(&format!("sample{}", c * batch_size + i), sys));
                }
            }
        }
        per_sample.extend(net.score(&refs, &fwd)?);
    }
    let summary = summarize(net, examples, &per_sample);
    Ok(Evaluation { summary, per_sample, eigen_lines })
}

fn summarize(net: &HodgeNet, examples: &[Example], per_sample: &[Option<(Metrics, Prediction)>]) -> Summary {
    let mut s = Summary::default();
    let (mut w, mut area) = (0.0, 0.0);
    for (e, r) in examples.iter().zip(per_sample) {
        let Some((m, _)) = r else {
            s.skipped += 1;
            continue;
        };
        s.evaluated += 1;
        s.loss += m.loss;
        s.mean_angle_error += m.mean_angle_error;
        let (faces, a) = match net.cfg.task {
            hodgenet_core::model::TaskKind::Segmentation { .. } => {
                let mesh = &e.prepared.mesh;
                (mesh.num_triangles() as f64, mesh.triangle_areas().iter().sum::<f64>())
            }
            _ => (1.0, 1.0),
        };
        s.accuracy += m.accuracy * faces;
        w += faces;
        s.area_weighted_accuracy += m.area_weighted_accuracy * a;
        area += a;
    }
    if s.evaluated > 0 {
        s.loss /= s.evaluated as f64;
        s.mean_angle_error /= s.evaluated as f64;
        s.accuracy /= w;
        s.area_weighted_accuracy /= area;
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub finetune: bool,
    pub train_loss: f64,
    pub train_skipped: usize,
    pub steps_skipped: usize,
    pub eval: Summary,
}

impl EpochRecord {
    pub fn csv_line(&self) -> String {
        let e = &self.eval;
        format!(
            "{},{},{:?},{},{},{:?},{:?},{:?},{:?},{}",
            self.epoch,
            if self.finetune { "finetune" } else { "main" },
            self.train_loss,
            self.train_skipped,
            self.steps_skipped,
            e.loss,
            e.accuracy,
            e.area_weighted_accuracy,
            e.mean_angle_error,
            e.skipped
        )
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub records: Vec<EpochRecord>,
    /// Epoch index and metrics of the best checkpoint.
    pub best: Option<(usize, Summary)>,
    pub net: HodgeNet,
}

/// Where a run writes its artifacts.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPaths {
    pub metrics: PathBuf,
    pub best: PathBuf,
    pub last: PathBuf,
    pub config: PathBuf,
}

impl RunPaths {
    pub fn new(out: &Path) -> Self {
        Self { metrics: out.join("metrics.csv"), best: out.join("best.ckpt"), last: out.join("last.ckpt"), config: out.join("config.toml") }
    }
}

fn append(path: &Path, text: &str, truncate: bool) -> Result<(), IoError> {
    use std::io::Write as _;
    let err = |source| IoError::Io { path: path.to_path_buf(), source };
    let mut f = std::fs::OpenOptions::new().create(true).write(true).append(!truncate).truncate(truncate).open(path).map_err(err)?;
    f.write_all(text.as_bytes()).map_err(err)
}

fn better(task: TaskName, new: &Summary, old: &Summary) -> bool {
    match task {
        TaskName::Dihedral => new.mean_angle_error < old.mean_angle_error,
        _ => new.accuracy > old.accuracy,
    }
}

/// Trains from scratch and writes metrics and checkpoints under `out`.
pub fn train<E: Executor>(cfg: &RunConfig, train: &Dataset, val: Option<&Dataset>, out: &Path, exec: &E) -> Result<Outcome, TrainError> {
    for d in std::iter::once(train).chain(val) {
        if d.task != cfg.task.kind {
            return Err(TrainError::TaskMismatch { manifest: d.task, config: cfg.task.kind });
        }
        d.check(cfg)?;
    }
    let paths = RunPaths::new(out);
    write_file(&paths.config, cfg.to_toml())?;
    let mcfg = cfg.model_config();
    let features = mcfg.features;
    let mut net = HodgeNet::new(mcfg)?;
    log::info!("{} parameters, {} without the boundary network", net.num_parameters(), net.num_parameters_closed());

    let main_aug = Augmentation { decimate: cfg.augment.decimate, geometric: cfg.augment_config() };
    let mut fine_geo = cfg.augment_config();
    fine_geo.aniso_max = 0.0;
    let fine_aug = Augmentation { decimate: None, geometric: fine_geo };
    let plain = Augmentation { decimate: None, geometric: hodgenet_core::mesh::AugmentConfig { aniso_max: 0.0, rotate: false } };

    let eval_examples = prepare(val.unwrap_or(train), &plain, features, cfg.seed, 0, exec)?;
    let mut cached: Option<(Augmentation, Vec<Example>)> = None;
    let mut csv = format!("{METRICS_HEADER}\n");
    let mut records = Vec::new();
    let mut best: Option<(usize, Summary)> = None;
    let bs = cfg.optimizer.batch_size;
    let total_epochs = cfg.epochs + cfg.finetune_epochs;
    for epoch in 0..total_epochs {
        let started = Instant::now();
        let finetune = epoch >= cfg.epochs;
        let aug = if finetune { fine_aug } else { main_aug };
        let examples = match cached.take() {
            Some((a, ex)) if a == aug => ex,
            _ => prepare(train, &aug, features, cfg.seed, epoch as u64, exec)?,
        };
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(sample_seed(cfg.seed, epoch as u64, u64::MAX)));

        let (mut loss_sum, mut loss_n, mut skipped, mut steps_skipped) = (0.0, 0usize, 0usize, 0usize);
        for batch in order.chunks(bs) {
            let refs: Vec<&Example> = batch.iter().map(|&i| &examples[i]).collect();
            match net.train_step(&refs, exec) {
                Ok(r) => {
                    let ok = refs.len() - r.skipped;
                    loss_sum += r.loss * ok as f64;
                    loss_n += ok;
                    skipped += r.skipped;
                    if r.outcome == StepOutcome::Skipped {
                        steps_skipped += 1;
                        log::warn!("epoch {epoch}: non-finite gradient, step skipped");
                    }
                }
                Err(e) => {
                    log::warn!("epoch {epoch}: batch failed: {e}");
                    skipped += refs.len();
                }
            }
            if skipped as f64 > MAX_SKIP_FRACTION * examples.len() as f64 {
                return Err(TrainError::SkipRate { epoch, skipped, total: examples.len() });
            }
        }
        if aug.is_identity() {
            cached = Some((aug, examples));
        }

        let eval = evaluate(&net, &eval_examples, bs, cfg.paths.eigen_log.is_some(), exec)?;
        if let Some(p) = &cfg.paths.eigen_log {
            let text = eval.eigen_lines.iter().fold(String::new(), |mut s, l| {
                let _ = writeln!(s, "epoch{epoch},{l}");
                s
            });
            append(p, &text, epoch == 0)?;
        }
        if eval.summary.evaluated == 0 {
            return Err(TrainError::NothingEvaluated);
        }
        let record = EpochRecord {
            epoch,
            finetune,
            train_loss: if loss_n > 0 { loss_sum / loss_n as f64 } else { f64::NAN },
            train_skipped: skipped,
            steps_skipped,
            eval: eval.summary,
        };
        csv.push_str(&record.csv_line());
        csv.push('\n');
        write_file(&paths.metrics, &csv)?;
        if best.as_ref().is_none_or(|(_, b)| better(cfg.task.kind, &eval.summary, b)) {
            best = Some((epoch, eval.summary));
            checkpoint::save(&paths.best, cfg, &net, epoch as u64 + 1)?;
        }
        log::info!(
            "epoch {epoch}{}: train loss {:.5}, eval loss {:.5}, accuracy {:.4}, angle error {:.3} deg, {} skipped, {:.1?}",
            if finetune { " (finetune)" } else { "" },
            record.train_loss,
            eval.summary.loss,
            eval.summary.accuracy,
            eval.summary.mean_angle_error,
            skipped,
            started.elapsed()
        );
        records.push(record);
    }
    checkpoint::save(&paths.last, cfg, &net, total_epochs as u64)?;
    Ok(Outcome { records, best, net })
}
