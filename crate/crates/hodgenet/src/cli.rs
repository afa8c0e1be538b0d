//! Subcommands. Exit codes: 0 success, 2 usage or configuration error,
//! 3 unreadable or invalid data, 4 numerical failure (including failed
//! gradient checks).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use hodgenet_core::eig::{solve_lowest, EigConfig};
use hodgenet_core::gradcheck::{self, Size};
use hodgenet_core::mesh::normalize;
use hodgenet_core::model::{Prediction, Prepared, Sequential};
use hodgenet_core::tasks::{make_dihedral_dataset, Label};
use thiserror::Error;

use crate::checkpoint::{self, CheckpointError};
use crate::config::{ConfigError, RunConfig};
use crate::dataset::{load_dataset, prepare, Augmentation, DataError, Entry, Manifest};
use crate::exec::{resolve_threads, Pool};
use crate::io::{self, IoError};
use crate::train::{self, TrainError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Empty { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Config(c) => c.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<hodgenet_core::Error> for CliError {
    fn from(e: hodgenet_core::Error) -> Self {
        use hodgenet_core::Error as E;
        match e {
            E::Mesh(_) | E::Task(_) => CliError::Data(e.to_string()),
            E::Eig(_) | E::Nn(_) => CliError::Numeric(e.to_string()),
            E::Contract(_) => CliError::Usage(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Data(d) => d.into(),
            TrainError::Checkpoint(c) => c.into(),
            TrainError::Io(i) => i.into(),
            TrainError::Model(m) => m.into(),
            TrainError::TaskMismatch { .. } => CliError::Usage(e.to_string()),
            TrainError::SkipRate { .. } | TrainError::NothingEvaluated => CliError::Numeric(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hodgenet", version, about = "Learned spectral operators on triangle meshes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model; writes metrics.csv, best.ckpt, last.ckpt and config.toml.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a manifest in eval mode.
    Eval(EvalArgs),
    /// Predict for one mesh.
    Predict(PredictArgs),
    /// Generate the synthetic creased-square dataset.
    MakeDihedral(MakeDihedralArgs),
    /// Run the finite-difference and truncation checks.
    Gradcheck(GradcheckArgs),
    /// Write d, star0, star1 and the stiffness matrix as Matrix Market files.
    ExportOperator(ExportArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML run configuration; defaults apply when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub finetune_epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    pub dump_config: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Per-sample CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub mesh: PathBuf,
    /// Per-face label file for segmentation; printed when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MakeDihedralArgs {
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for `manifest.toml` and `meshes/`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SizeArg {
    Tiny,
    Small,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, value_enum, default_value = "tiny")]
    pub size: SizeArg,
    /// Block size; 1 for tiny and 4 for small when absent.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    /// Operator networks to use; random stars when absent.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Block size for random stars.
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// Seed for random stars.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the lowest eigenpairs (eigen.csv) and, with a checkpoint,
    /// per-vertex features (features.csv).
    #[arg(long)]
    pub spectrum: bool,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Predict(a) => cmd_predict(a),
        Command::MakeDihedral(a) => cmd_make_dihedral(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::ExportOperator(a) => cmd_export(a),
    }
}

fn pool(threads: usize) -> Result<Pool, CliError> {
    Pool::new(resolve_threads(threads)).map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

pub fn resolve_train_config(a: &TrainArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| IoError::Io { path: p.clone(), source })?;
            RunConfig::from_toml(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(p) = &a.train {
        cfg.paths.train = Some(p.clone());
    }
    if let Some(p) = &a.val {
        cfg.paths.val = Some(p.clone());
    }
    if let Some(p) = &a.out {
        cfg.paths.out = Some(p.clone());
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.finetune_epochs {
        cfg.finetune_epochs = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.threads {
        cfg.threads = v;
    }
    if let Some(v) = a.lr {
        cfg.optimizer.lr = v;
    }
    if let Some(v) = a.batch_size {
        cfg.optimizer.batch_size = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(a: TrainArgs) -> Result<(), CliError> {
    let cfg = resolve_train_config(&a)?;
    if a.dump_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let train_path = cfg.paths.train.clone().ok_or_else(|| CliError::Usage("no training manifest (--train or paths.train)".into()))?;
    let out = cfg.paths.out.clone().ok_or_else(|| CliError::Usage("no output directory (--out or paths.out)".into()))?;
    let train_set = load_dataset(&train_path)?;
    let val_set = cfg.paths.val.as_deref().map(load_dataset).transpose()?;
    let exec = pool(cfg.threads)?;
    log::info!("training on {} meshes with {} threads", train_set.len(), exec.threads());
    let outcome = train::train(&cfg, &train_set, val_set.as_ref(), &out, &exec)?;
    if let Some(last) = outcome.records.last() {
        println!("{}\n{}", train::METRICS_HEADER, last.csv_line());
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<(), CliError> {
    let ck = checkpoint::load(&a.checkpoint)?;
    let data = load_dataset(&a.manifest)?;
    if data.task != ck.config.task.kind {
        return Err(CliError::Usage(format!("checkpoint was trained for {:?} but the manifest is {:?}", ck.config.task.kind, data.task)));
    }
    data.check(&ck.config)?;
    let exec = pool(a.threads)?;
    let plain = Augmentation { decimate: None, geometric: hodgenet_core::mesh::AugmentConfig { aniso_max: 0.0, rotate: false } };
    let examples = prepare(&data, &plain, ck.net.cfg.features, 0, 0, &exec)?;
    let eval = train::evaluate(&ck.net, &examples, ck.config.optimizer.batch_size, false, &exec)?;
    let s = eval.summary;
    println!("loss,accuracy,area_weighted_accuracy,mean_angle_error_deg,evaluated,skipped");
    println!("{:?},{:?},{:?},{:?},{},{}", s.loss, s.accuracy, s.area_weighted_accuracy, s.mean_angle_error, s.evaluated, s.skipped);
    if let Some(out) = &a.out {
        let mut csv = String::from("index,mesh,loss,accuracy,area_weighted_accuracy,angle_error_deg,prediction\n");
        for (i, (sample, r)) in data.samples.iter().zip(&eval.per_sample).enumerate() {
            match r {
                Some((m, p)) => {
                    let pred = match p {
                        Prediction::Faces(_) => String::new(),
                        Prediction::Class(c) => c.to_string(),
                        Prediction::Angle(t) => format!("{t:?}"),
                    };
                    let _ = writeln!(csv, "{i},{},{:?},{:?},{:?},{:?},{pred}", sample.name, m.loss, m.accuracy, m.area_weighted_accuracy, m.mean_angle_error);
                }
                None => {
                    let _ = writeln!(csv, "{i},{},,,,,skipped", sample.name);
                }
            }
        }
        io::write_file(out, csv)?;
    }
    if s.evaluated == 0 {
        return Err(CliError::Numeric("no mesh could be evaluated".into()));
    }
    Ok(())
}

fn load_normalized(path: &Path) -> Result<hodgenet_core::mesh::Mesh, CliError> {
    let mesh = io::load_mesh(path)?;
    normalize(&mesh).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn cmd_predict(a: PredictArgs) -> Result<(), CliError> {
    let ck = checkpoint::load(&a.checkpoint)?;
    let prepared = Prepared::new(load_normalized(&a.mesh)?, ck.net.cfg.features);
    let fwd = ck.net.forward(&[&prepared], hodgenet_core::nn::Mode::Eval, &Sequential)?;
    if let Some((_, e)) = fwd.failures().into_iter().next() {
        return Err(e.into());
    }
    let out = fwd.outputs[0].as_ref().expect("forward succeeded");
    match ck.net.predict(out) {
        Prediction::Faces(labels) => {
            let text = io::write_labels(&labels);
            match &a.out {
                Some(p) => io::write_file(p, text)?,
                None => print!("{text}"),
            }
        }
        Prediction::Class(c) => println!("{c}"),
        Prediction::Angle(t) => println!("{t:?} rad ({:?} deg)", t.to_degrees()),
    }
    Ok(())
}

fn cmd_make_dihedral(a: MakeDihedralArgs) -> Result<(), CliError> {
    if a.count == 0 {
        return Err(CliError::Usage("--count must be positive".into()));
    }
    let samples = make_dihedral_dataset(a.count, a.seed).map_err(|e| CliError::Data(e.to_string()))?;
    let width = a.count.to_string().len().max(4);
    let mut manifest = Manifest { task: crate::config::TaskName::Dihedral, samples: Vec::with_capacity(samples.len()) };
    for (i, s) in samples.iter().enumerate() {
        let rel = PathBuf::from(format!("meshes/{i:0width$}.obj"));
        io::save_mesh(&a.out.join(&rel), &s.mesh)?;
        let Label::Angle(theta) = s.label else { unreachable!("dihedral samples carry angles") };
        manifest.samples.push(Entry { mesh: rel, labels: None, class: None, theta: Some(theta) });
    }
    io::write_file(&a.out.join("manifest.toml"), manifest.to_toml())?;
    println!("{} samples written to {}", samples.len(), a.out.display());
    Ok(())
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<(), CliError> {
    let size = match a.size {
        SizeArg::Tiny => Size::Tiny,
        SizeArg::Small => Size::Small,
    };
    let k = a.k.unwrap_or(size.default_k());
    if k == 0 {
        return Err(CliError::Usage("--k must be positive".into()));
    }
    let report = gradcheck::run(size, k, a.seed)?;
    println!("{report}");
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Numeric("gradient check failed".into()))
    }
}

fn cmd_export(a: ExportArgs) -> Result<(), CliError> {
    let mesh = load_normalized(&a.mesh)?;
    let (bundle, spectrum) = match &a.checkpoint {
        Some(p) => {
            let ck = checkpoint::load(p)?;
            let prepared = Prepared::new(mesh, ck.net.cfg.features);
            let ins = ck.net.inspect(&prepared)?;
            (ins.bundle, Some((ins.sys, Some(ins.features))))
        }
        None => {
            if a.k == 0 {
                return Err(CliError::Usage("--k must be positive".into()));
            }
            (gradcheck::random_bundle(&mesh, a.k, a.seed)?, None)
        }
    };
    let d = &bundle.d;
    io::write_file(&a.out.join("d.mtx"), io::write_matrix_market(d.rows(), d.cols(), &d.triplets()))?;
    let n0 = bundle.dim();
    io::write_file(&a.out.join("star0.mtx"), io::write_matrix_market(n0, n0, &bundle.star0.triplets()))?;
    let n1 = d.rows();
    io::write_file(&a.out.join("star1.mtx"), io::write_matrix_market(n1, n1, &bundle.star1.triplets()))?;
    io::write_file(&a.out.join("stiffness.mtx"), io::write_matrix_market(n0, n0, &bundle.stiffness().triplets()))?;
    if a.spectrum {
        let (sys, features) = match spectrum {
            Some(s) => s,
            None => {
                let k = bundle.block_size();
                let sys = solve_lowest(&bundle, (k + 32).min(n0), &EigConfig { seed: a.seed, ..EigConfig::default() }).map_err(hodgenet_core::Error::from)?;
                (sys, None)
            }
        };
        io::write_file(&a.out.join("eigen.csv"), io::eigen_log_line("eigen", &sys) + "\n")?;
        if let Some(f) = features {
            io::write_file(&a.out.join("features.csv"), io::write_csv_matrix(&f, "g"))?;
        }
    }
    println!("operator written to {}", a.out.display());
    Ok(())
}
