//! The full network: operator networks → eigensolve → spectral features →
//! head → task loss, over a batch of meshes.
//!
//! Every network runs once per batch on the rows of all meshes stacked in
//! batch order, so batch-norm statistics span the whole batch and do not
//! depend on how the per-mesh work is scheduled.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::dec::{ordered_edge_inputs, OperatorBundle, StencilInputs, DEFAULT_EPS};
use crate::eig::{drop_zero_modes, solve_lowest, EigConfig, EigenSystem};
use crate::features::{features_backward, pool, pool_backward, vertex_features, PoolTarget, Pooled};
use crate::linalg::Matrix;
use crate::mesh::{FeatureKind, Mesh, VertexFeatures};
use crate::nn::{AdamWConfig, Mlp, MlpCache, MlpSpec, Mode, ParameterStore, StepOutcome};
use crate::spectral_grad::{backward_stars, build_workspace, chain_to_raw, RawGradients, SpectralCotangents};
use crate::tasks::{self, Label, Metrics, TaskError};
use crate::{Error, Result};

/// Runs independent per-mesh jobs. Results come back in index order.
pub trait Executor: Sync {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs jobs one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskKind {
    Segmentation { classes: usize },
    Classification { classes: usize },
    Dihedral,
}

impl TaskKind {
    pub fn output_dim(self) -> usize {
        match self {
            TaskKind::Segmentation { classes } | TaskKind::Classification { classes } => classes,
            TaskKind::Dihedral => 2,
        }
    }

    pub fn pool_target(self) -> PoolTarget {
        match self {
            TaskKind::Segmentation { .. } => PoolTarget::Face,
            _ => PoolTarget::Mesh,
        }
    }
}

/// How many eigenpairs the backward coupling sums see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Spectrum {
    /// `k` zero modes, `m` feature pairs and `extra` further pairs.
    Truncated,
    /// Every eigenpair; only viable for tiny meshes.
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub task: TaskKind,
    /// Block size of the operator.
    pub k: usize,
    /// Spectral feature channels (output width of `h`).
    pub n: usize,
    /// Eigenpairs feeding the features, zero modes excluded.
    pub m: usize,
    /// Further eigenpairs kept only for the backward sums.
    pub extra: usize,
    pub eps: f64,
    pub features: FeatureKind,
    pub width: usize,
    pub depth: usize,
    pub head_width: usize,
    pub head_depth: usize,
    pub spectrum: Spectrum,
    pub eig: EigConfig,
    pub optimizer: AdamWConfig,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(task: TaskKind) -> Self {
        let head_width = if matches!(task, TaskKind::Classification { .. }) { 64 } else { 32 };
        let features = match task {
            TaskKind::Dihedral => FeatureKind::Positions,
            _ => FeatureKind::PositionsNormals,
        };
        Self {
            task,
            k: 4,
            n: 32,
            m: 32,
            extra: 32,
            eps: DEFAULT_EPS,
            features,
            width: 32,
            depth: 4,
            head_width,
            head_depth: 2,
            spectrum: Spectrum::Truncated,
            eig: EigConfig::default(),
            optimizer: AdamWConfig::default(),
            seed: 0,
        }
    }

    /// Eigenpairs to request for a mesh, zero modes included.
    pub fn m_total(&self, num_vertices: usize) -> usize {
        let cap = self.k * num_vertices;
        match self.spectrum {
            Spectrum::Truncated => (self.k + self.m + self.extra).min(cap),
            Spectrum::Full => cap,
        }
    }

    /// Network names and shapes in store order.
    pub fn network_specs(&self) -> [(&'static str, MlpSpec); 5] {
        let d = self.features.dim();
        let kk = self.k * self.k;
        let (w, l) = (self.width, self.depth);
        [
            ("f", MlpSpec { input: 3 * d, hidden: w, depth: l, output: kk }),
            ("g", MlpSpec { input: 4 * d, hidden: w, depth: l, output: kk }),
            ("gbar", MlpSpec { input: 3 * d, hidden: w, depth: l, output: kk }),
            ("h", MlpSpec { input: 1, hidden: w, depth: l, output: self.n }),
            ("o", MlpSpec { input: self.n * kk, hidden: self.head_width, depth: self.head_depth, output: self.task.output_dim() }),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Contract(String::from(msg)));
        if self.k == 0 || self.n == 0 || self.m == 0 || self.width == 0 {
            return bad("k, n, m and width must be positive");
        }
        if !(self.eps > 0.0) {
            return bad("eps must be positive");
        }
        if self.task.output_dim() == 0 {
            return bad("the task needs at least one output");
        }
        if !(self.optimizer.lr > 0.0) || !(self.optimizer.clip_norm > 0.0) {
            return bad("learning rate and clip norm must be positive");
        }
        Ok(())
    }
}

const F: usize = 0;
const G: usize = 1;
const GBAR: usize = 2;
const H: usize = 3;
const O: usize = 4;

/// Mesh with its network input rows, computed once per sample.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub mesh: Mesh,
    pub inputs: StencilInputs,
}

impl Prepared {
    pub fn new(mesh: Mesh, kind: FeatureKind) -> Self {
        let feats = VertexFeatures::from_mesh(&mesh, kind);
        let inputs = ordered_edge_inputs(&mesh, &feats);
        Self { mesh, inputs }
    }
}

#[derive(Debug, Clone)]
pub struct Example {
    pub prepared: Prepared,
    pub label: Label,
}

#[derive(Debug, Clone)]
struct Spectral {
    bundle: OperatorBundle,
    sys: EigenSystem,
    /// Eigenpairs feeding the features.
    m: usize,
}

#[derive(Debug, Clone)]
struct Head {
    h: Matrix,
    pooled: Pooled,
}

#[derive(Debug, Clone)]
struct ItemState {
    spectral: Result<Spectral>,
    head: Option<Head>,
    rows: [Range<usize>; 5],
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub mode: Mode,
    caches: [Option<MlpCache>; 5],
    items: Vec<ItemState>,
    /// Head output per mesh; `None` when its spectral stage failed.
    pub outputs: Vec<Option<Matrix>>,
}

impl Forward {
    /// The error for each mesh that was left out of the batch.
    pub fn failures(&self) -> Vec<(usize, Error)> {
        self.items.iter().enumerate().filter_map(|(i, it)| it.spectral.as_ref().err().map(|e| (i, e.clone()))).collect()
    }

    pub fn eigenvalues(&self, item: usize) -> Option<&[f64]> {
        self.items[item].spectral.as_ref().ok().map(|s| s.sys.values.as_slice())
    }

    pub fn eigensystem(&self, item: usize) -> Option<&EigenSystem> {
        self.items[item].spectral.as_ref().ok().map(|s| &s.sys)
    }
}

/// Loss and parameter gradients for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Backward {
    pub loss: f64,
    pub item_losses: Vec<Option<f64>>,
    /// One flat gradient per network, in store order.
    pub grads: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Inspection {
    pub bundle: OperatorBundle,
    pub sys: EigenSystem,
    /// Row `v` holds the `n` flattened `k × k` feature blocks of vertex `v`.
    pub features: Matrix,
    pub output: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub loss: f64,
    pub skipped: usize,
    pub outcome: StepOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Faces(Vec<usize>),
    Class(usize),
    /// Radians in `[0, 2π)`.
    Angle(f64),
}

/// Runs `mlp` on `x`; empty inputs are skipped and a one-row train batch
/// falls back to running statistics.
fn run(mlp: &Mlp, x: &Matrix, mode: Mode) -> Result<Option<(Matrix, MlpCache)>> {
    if x.rows() == 0 {
        return Ok(None);
    }
    let mode = if mode == Mode::Train && x.rows() < 2 { Mode::Eval } else { mode };
    Ok(Some(mlp.forward(x, mode)?))
}

fn stack(parts: &[&Matrix], cols: usize) -> (Matrix, Vec<Range<usize>>) {
    let mut ranges = Vec::with_capacity(parts.len());
    let mut at = 0;
    for p in parts {
        ranges.push(at..at + p.rows());
        at += p.rows();
    }
    (Matrix::vstack(parts, cols), ranges)
}

fn rows_of(m: &Option<(Matrix, MlpCache)>, r: &Range<usize>) -> Vec<f64> {
    match m {
        Some((out, _)) => out.data()[r.start * out.cols()..r.end * out.cols()].to_vec(),
        None => Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HodgeNet {
    pub cfg: ModelConfig,
    pub store: ParameterStore,
}

impl HodgeNet {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let networks = cfg
            .network_specs()
            .iter()
            .enumerate()
            .map(|(i, (name, spec))| (String::from(*name), Mlp::new(*spec, cfg.seed.wrapping_mul(31).wrapping_add(i as u64))))
            .collect();
        let store = ParameterStore::new(networks, cfg.optimizer);
        Ok(Self { cfg, store })
    }

    fn net(&self, i: usize) -> &Mlp {
        &self.store.networks[i].1
    }

    pub fn num_parameters(&self) -> usize {
        crate::nn::count_parameters(&self.store)
    }

    /// Parameters used on meshes without boundary, where `gbar` never runs.
    pub fn num_parameters_closed(&self) -> usize {
        self.num_parameters() - self.net(GBAR).num_parameters()
    }

    /// Operator, eigensystem and per-vertex features of one mesh, as an
    /// eval-mode forward pass computes them.
    pub fn inspect(&self, p: &Prepared) -> Result<Inspection> {
        let cfg = &self.cfg;
        let out = |i: usize, x: &Matrix| -> Result<Vec<f64>> { Ok(run(self.net(i), x, Mode::Eval)?.map(|o| o.0.into_vec()).unwrap_or_default()) };
        let bundle =
            OperatorBundle::from_raw(&p.mesh, cfg.k, cfg.eps, &out(F, &p.inputs.triangles)?, &out(G, &p.inputs.interior)?, &out(GBAR, &p.inputs.boundary)?)?;
        let sys = drop_zero_modes(solve_lowest(&bundle, cfg.m_total(p.mesh.num_vertices()), &cfg.eig)?, cfg.k)?;
        let (features, output) = self.spectral_head(&p.mesh, &sys)?;
        Ok(Inspection { bundle, sys, features, output })
    }

    /// Eval-mode per-vertex features and head output from an eigensystem.
    pub fn spectral_head(&self, mesh: &Mesh, sys: &EigenSystem) -> Result<(Matrix, Matrix)> {
        let cfg = &self.cfg;
        let m = cfg.m.min(sys.num_kept());
        let lam = Matrix::from_vec(m, 1, sys.kept_values()[..m].to_vec());
        let h = run(self.net(H), &lam, Mode::Eval)?.map_or_else(|| Matrix::zeros(0, cfg.n), |o| o.0);
        let features = vertex_features(sys, m, &h);
        let pooled = pool(&features, cfg.task.pool_target(), mesh);
        let output = run(self.net(O), &pooled.values, Mode::Eval)?.map_or_else(|| Matrix::zeros(0, cfg.task.output_dim()), |o| o.0);
        Ok((features, output))
    }

    pub fn forward<E: Executor>(&self, batch: &[&Prepared], mode: Mode, exec: &E) -> Result<Forward> {
        let cfg = &self.cfg;
        let kk = cfg.k * cfg.k;
        let d = cfg.features.dim();
        for p in batch {
            if p.inputs.triangles.cols() != 3 * d || p.inputs.interior.cols() != 4 * d {
                return Err(Error::Contract(format!("inputs were prepared for a different feature kind than {:?}", cfg.features)));
            }
        }
        let (tri, tri_rows) = stack(&batch.iter().map(|p| &p.inputs.triangles).collect::<Vec<_>>(), 3 * d);
        let (int, int_rows) = stack(&batch.iter().map(|p| &p.inputs.interior).collect::<Vec<_>>(), 4 * d);
        let (bdry, bdry_rows) = stack(&batch.iter().map(|p| &p.inputs.boundary).collect::<Vec<_>>(), 3 * d);
        let f_out = run(self.net(F), &tri, mode)?;
        let g_out = run(self.net(G), &int, mode)?;
        let gb_out = run(self.net(GBAR), &bdry, mode)?;

        let spectral: Vec<Result<Spectral>> = exec.map(batch.len(), |i| {
            let mesh = &batch[i].mesh;
            let bundle = OperatorBundle::from_raw(
                mesh,
                cfg.k,
                cfg.eps,
                &rows_of(&f_out, &tri_rows[i]),
                &rows_of(&g_out, &int_rows[i]),
                &rows_of(&gb_out, &bdry_rows[i]),
            )?;
            let sys = solve_lowest(&bundle, cfg.m_total(mesh.num_vertices()), &cfg.eig)?;
            let sys = drop_zero_modes(sys, cfg.k)?;
            let m = cfg.m.min(sys.num_kept());
            Ok(Spectral { bundle, sys, m })
        });
        for (i, s) in spectral.iter().enumerate() {
            if let Err(e) = s {
                log::warn!("batch item {i} skipped: {e}");
            }
        }

        // h on the stacked feature eigenvalues.
        let mut lam = Vec::new();
        let mut h_rows = Vec::with_capacity(batch.len());
        for s in &spectral {
            let start = lam.len();
            if let Ok(s) = s {
                lam.extend_from_slice(&s.sys.kept_values()[..s.m]);
            }
            h_rows.push(start..lam.len());
        }
        let h_out = run(self.net(H), &Matrix::from_vec(lam.len(), 1, lam), mode)?;

        let target = cfg.task.pool_target();
        let heads: Vec<Option<Head>> = exec.map(batch.len(), |i| {
            let s = spectral[i].as_ref().ok()?;
            let h = Matrix::from_vec(s.m, cfg.n, rows_of(&h_out, &h_rows[i]));
            let g = vertex_features(&s.sys, s.m, &h);
            let pooled = pool(&g, target, &batch[i].mesh);
            Some(Head { h, pooled })
        });

        let mut o_rows = Vec::with_capacity(batch.len());
        let mut at = 0;
        let mut parts = Vec::new();
        for hd in &heads {
            let n = hd.as_ref().map_or(0, |h| h.pooled.values.rows());
            o_rows.push(at..at + n);
            at += n;
            if let Some(h) = hd {
                parts.push(&h.pooled.values);
            }
        }
        let o_in = Matrix::vstack(&parts, cfg.n * kk);
        let o_out = run(self.net(O), &o_in, mode)?;
        let outputs = heads
            .iter()
            .enumerate()
            .map(|(i, hd)| {
                hd.as_ref().map(|_| {
                    let r = &o_rows[i];
                    Matrix::from_vec(r.len(), cfg.task.output_dim(), rows_of(&o_out, r))
                })
            })
            .collect();

        let items = spectral
            .into_iter()
            .zip(heads)
            .enumerate()
            .map(|(i, (spectral, head))| ItemState {
                spectral,
                head,
                rows: [tri_rows[i].clone(), int_rows[i].clone(), bdry_rows[i].clone(), h_rows[i].clone(), o_rows[i].clone()],
            })
            .collect();
        let caches = [f_out.map(|x| x.1), g_out.map(|x| x.1), gb_out.map(|x| x.1), h_out.map(|x| x.1), o_out.map(|x| x.1)];
        Ok(Forward { mode, caches, items, outputs })
    }

    /// Task loss of one head output and its gradient.
    pub fn item_loss(&self, out: &Matrix, label: &Label) -> Result<(f64, Matrix)> {
        match (self.cfg.task, label) {
            (TaskKind::Segmentation { .. }, Label::Faces(l)) => Ok(tasks::cross_entropy(out, l)?),
            (TaskKind::Classification { .. }, Label::Class(c)) => Ok(tasks::cross_entropy(out, &[*c])?),
            (TaskKind::Dihedral, Label::Angle(t)) => {
                let (l, g) = tasks::cosine_loss([out.get(0, 0), out.get(0, 1)], *t)?;
                Ok((l, Matrix::from_vec(1, 2, g.to_vec())))
            }
            _ => Err(TaskError::Shape("label kind does not match the task").into()),
        }
    }

    /// Mean loss over the meshes that survived the forward pass, with
    /// gradients for every network.
    pub fn backward<E: Executor>(&self, batch: &[&Prepared], fwd: &Forward, labels: &[&Label], exec: &E) -> Result<Backward> {
        let cfg = &self.cfg;
        let kk = cfg.k * cfg.k;
        if labels.len() != fwd.items.len() || batch.len() != fwd.items.len() {
            return Err(Error::Contract("one label per batch item is required".into()));
        }
        let mut item_losses = vec![None; labels.len()];
        let mut d_outs = Vec::with_capacity(labels.len());
        for (i, out) in fwd.outputs.iter().enumerate() {
            d_outs.push(match out {
                Some(o) => {
                    let (l, g) = self.item_loss(o, labels[i])?;
                    item_losses[i] = Some(l);
                    Some(g)
                }
                None => None,
            });
        }
        let ok = item_losses.iter().flatten().count();
        let mut grads: Vec<Vec<f64>> = self.store.networks.iter().map(|(_, m)| vec![0.0; m.num_parameters()]).collect();
        if ok == 0 {
            return Err(Error::Contract("every mesh in the batch failed".into()));
        }
        let loss = item_losses.iter().flatten().sum::<f64>() / ok as f64;
        let scale = 1.0 / ok as f64;

        // Head.
        let o_rows: usize = fwd.items.iter().map(|it| it.rows[O].len()).sum();
        let mut d_o = Matrix::zeros(o_rows, cfg.task.output_dim());
        for (it, d) in fwd.items.iter().zip(&d_outs) {
            if let Some(d) = d {
                for (r, row) in it.rows[O].clone().enumerate() {
                    for (dst, src) in d_o.row_mut(row).iter_mut().zip(d.row(r)) {
                        *dst = src * scale;
                    }
                }
            }
        }
        let cache = fwd.caches[O].as_ref().ok_or_else(|| Error::Contract("head cache missing".into()))?;
        let (d_pooled, g_o) = self.net(O).backward(cache, &d_o)?;
        grads[O] = g_o;

        // Features, per mesh.
        let per_item: Vec<Option<(SpectralCotangents, Matrix)>> = exec.map(fwd.items.len(), |i| {
            let it = &fwd.items[i];
            let (s, hd) = (it.spectral.as_ref().ok()?, it.head.as_ref()?);
            let r = &it.rows[O];
            let dp = Matrix::from_vec(r.len(), d_pooled.cols(), d_pooled.data()[r.start * d_pooled.cols()..r.end * d_pooled.cols()].to_vec());
            let dg = pool_backward(&hd.pooled, &dp, s.sys.vectors.cols() / cfg.k);
            Some(features_backward(&s.sys, s.m, &hd.h, &dg))
        });

        // h on the stacked eigenvalues.
        let h_rows: usize = fwd.items.iter().map(|it| it.rows[H].len()).sum();
        let mut d_h = Matrix::zeros(h_rows, cfg.n);
        for (it, p) in fwd.items.iter().zip(&per_item) {
            if let Some((_, dh)) = p {
                for (r, row) in it.rows[H].clone().enumerate() {
                    d_h.row_mut(row).copy_from_slice(dh.row(r));
                }
            }
        }
        let mut d_lambda = Matrix::zeros(h_rows, 1);
        if let Some(cache) = fwd.caches[H].as_ref() {
            let (dl, g_h) = self.net(H).backward(cache, &d_h)?;
            d_lambda = dl;
            grads[H] = g_h;
        }

        // Eigen-decomposition and stars, per mesh.
        let raw: Vec<Result<Option<RawGradients>>> = exec.map(fwd.items.len(), |i| {
            let it = &fwd.items[i];
            let (Ok(s), Some((cot, _))) = (it.spectral.as_ref(), per_item[i].as_ref()) else { return Ok(None) };
            let mut cot = cot.clone();
            for (a, row) in it.rows[H].clone().enumerate() {
                cot.d_lambda[a] = d_lambda.get(row, 0);
            }
            let ws = build_workspace(&s.sys);
            let sg = backward_stars(&s.sys, &cot, &ws)?;
            Ok(Some(chain_to_raw(&batch[i].mesh, &sg, &s.bundle.star0, &s.bundle.star1)))
        });
        let raw = raw.into_iter().collect::<Result<Vec<_>>>()?;

        for net in [F, G, GBAR] {
            let Some(cache) = fwd.caches[net].as_ref() else { continue };
            let total: usize = fwd.items.iter().map(|it| it.rows[net].len()).sum();
            let mut d = Matrix::zeros(total, kk);
            for (it, r) in fwd.items.iter().zip(&raw) {
                if let Some(r) = r {
                    let src = match net {
                        F => &r.f,
                        G => &r.g,
                        _ => &r.g_bdry,
                    };
                    let rows = &it.rows[net];
                    d.data_mut()[rows.start * kk..rows.end * kk].copy_from_slice(src);
                }
            }
            let (_, g) = self.net(net).backward(cache, &d)?;
            grads[net] = g;
        }
        Ok(Backward { loss, item_losses, grads })
    }

    /// Forward, backward, running-statistics update and one optimizer step.
    pub fn train_step<E: Executor>(&mut self, batch: &[&Example], exec: &E) -> Result<StepReport> {
        let prepared: Vec<&Prepared> = batch.iter().map(|e| &e.prepared).collect();
        let labels: Vec<&Label> = batch.iter().map(|e| &e.label).collect();
        let fwd = self.forward(&prepared, Mode::Train, exec)?;
        let mut bwd = self.backward(&prepared, &fwd, &labels, exec)?;
        for (i, cache) in fwd.caches.iter().enumerate() {
            if let Some(c) = cache {
                self.store.networks[i].1.update_running_stats(c)?;
            }
        }
        let outcome = self.store.step(&mut bwd.grads)?;
        Ok(StepReport { loss: bwd.loss, skipped: fwd.failures().len(), outcome })
    }

    pub fn predict(&self, out: &Matrix) -> Prediction {
        match self.cfg.task {
            TaskKind::Segmentation { .. } => Prediction::Faces(tasks::argmax_rows(out)),
            TaskKind::Classification { .. } => Prediction::Class(tasks::argmax_rows(out)[0]),
            TaskKind::Dihedral => {
                let t = crate::math::atan2(out.get(0, 1), out.get(0, 0));
                Prediction::Angle(if t < 0.0 { t + 2.0 * core::f64::consts::PI } else { t })
            }
        }
    }

    /// Eval-mode metrics per item; `None` for meshes whose spectral stage
    /// failed.
    pub fn evaluate<E: Executor>(&self, batch: &[&Example], exec: &E) -> Result<Vec<Option<(Metrics, Prediction)>>> {
        let prepared: Vec<&Prepared> = batch.iter().map(|e| &e.prepared).collect();
        let fwd = self.forward(&prepared, Mode::Eval, exec)?;
        self.score(batch, &fwd)
    }

    /// Metrics and predictions from a finished forward pass over `batch`.
    pub fn score(&self, batch: &[&Example], fwd: &Forward) -> Result<Vec<Option<(Metrics, Prediction)>>> {
        if batch.len() != fwd.outputs.len() {
            return Err(Error::Contract("forward pass and batch differ in length".into()));
        }
        let mut out = Vec::with_capacity(batch.len());
        for (e, o) in batch.iter().zip(&fwd.outputs) {
            let Some(o) = o else {
                out.push(None);
                continue;
            };
            let (loss, _) = self.item_loss(o, &e.label)?;
            let pred = self.predict(o);
            let mut m = match (&pred, &e.label) {
                (Prediction::Faces(p), Label::Faces(t)) => tasks::segmentation_metrics(p, t, &e.prepared.mesh)?,
                (Prediction::Class(p), Label::Class(t)) => {
                    let hit = (p == t) as u8 as f64;
                    Metrics { accuracy: hit, area_weighted_accuracy: hit, ..Metrics::default() }
                }
                (Prediction::Angle(_), Label::Angle(t)) => {
                    Metrics { mean_angle_error: tasks::angle_error([o.get(0, 0), o.get(0, 1)], *t), ..Metrics::default() }
                }
                _ => return Err(TaskError::Shape("label kind does not match the task").into()),
            };
            m.loss = loss;
            out.push(Some((m, pred)));
        }
        Ok(out)
    }
}
