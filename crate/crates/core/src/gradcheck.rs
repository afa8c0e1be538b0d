//! Finite-difference verification of the backward pass, and the comparison
//! of truncated against full-spectrum gradients.
//!
//! Relative errors are `max |fd − exact| / max |exact|` over every checked
//! entry of one gradient, so entries whose true derivative is near zero do
//! not dominate the figure.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dec::{OperatorBundle, DEFAULT_EPS};
use crate::eig::{drop_zero_modes, solve_lowest, EigConfig, EigenSystem};
use crate::linalg::{self, Matrix};
use crate::mesh::{shapes, Mesh};
use crate::model::{Example, HodgeNet, ModelConfig, Prepared, Sequential, Spectrum, TaskKind};
use crate::nn::Mode;
use crate::spectral_grad::{backward_stars, build_workspace, SpectralCotangents};
use crate::tasks::Label;
use crate::Result;

const STAR_STEP: f64 = 1e-6;
const PARAM_STEP: f64 = 1e-6;

/// Agreement of one analytic gradient with central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdCheck {
    pub max_rel_error: f64,
    pub entries: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentSample {
    /// `⟨g_truncated, g_full⟩` over the operator-network parameters.
    pub inner: f64,
    pub cosine: f64,
}

fn rel_error(fd: &[f64], exact: &[f64]) -> f64 {
    let scale = exact.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let err = fd.iter().zip(exact).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if scale > 0.0 {
        err / scale
    } else {
        err
    }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Closed mesh for even seeds, open mesh for odd ones.
pub fn tiny_mesh(seed: u64) -> Mesh {
    if seed % 2 == 0 {
        shapes::jitter(&shapes::icosahedron(), 0.05, seed)
    } else {
        shapes::jitter(&shapes::grid(3, 2, 1.0, 1.0), 0.05, seed)
    }
}

/// Up to 20 vertices, closed or open by seed parity.
pub fn small_mesh(seed: u64) -> Mesh {
    if seed % 2 == 0 {
        shapes::jitter(&shapes::icosahedron(), 0.05, seed)
    } else {
        shapes::jitter(&shapes::grid(3, 3, 1.0, 1.0), 0.05, seed)
    }
}

/// Stars from random raw outputs uniform in `[-1, 1]`.
pub fn random_bundle(mesh: &Mesh, k: usize, seed: u64) -> Result<OperatorBundle> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kk = k * k;
    let nb = mesh.num_boundary_edges();
    let f = uniform(&mut rng, mesh.num_triangles() * kk);
    let g = uniform(&mut rng, (mesh.num_edges() - nb) * kk);
    let gb = uniform(&mut rng, nb * kk);
    OperatorBundle::from_raw(mesh, k, DEFAULT_EPS, &f, &g, &gb)
}

fn solve(bundle: &OperatorBundle, m_total: usize) -> Result<EigenSystem> {
    let k = bundle.block_size();
    Ok(drop_zero_modes(solve_lowest(bundle, m_total, &EigConfig::default())?, k)?)
}

/// `Σ cᵢλᵢ + Σ ⟨wᵢ, xᵢ⟩` over kept pairs, with each `xᵢ` signed to agree
/// with the reference.
fn spectral_loss(sys: &EigenSystem, reference: &EigenSystem, c: &[f64], w: &Matrix) -> f64 {
    let (z, zr) = (sys.zero_mode_count, reference.zero_mode_count);
    let mut total = 0.0;
    for (i, &ci) in c.iter().enumerate() {
        total += ci * sys.values[z + i];
        if w.rows() > 0 {
            let x = sys.x(z + i);
            let s = if linalg::dot(x, reference.x(zr + i)) < 0.0 { -1.0 } else { 1.0 };
            total += s * linalg::dot(x, w.row(i));
        }
    }
    total
}

/// Central differences of a spectral loss against every symmetric star entry.
///
/// `m_total` eigenpairs are computed; with `with_vectors` unset the loss
/// only sees eigenvalues, which are exact under any truncation.
fn star_check(bundle: &OperatorBundle, m_total: usize, with_vectors: bool, seed: u64) -> Result<FdCheck> {
    let k = bundle.block_size();
    let sys = solve(bundle, m_total)?;
    let kept = sys.num_kept();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let c = uniform(&mut rng, kept);
    let w = if with_vectors { Matrix::from_vec(kept, bundle.dim(), uniform(&mut rng, kept * bundle.dim())) } else { Matrix::zeros(0, 0) };
    let mut cot = SpectralCotangents::zeros(kept, bundle.dim());
    cot.d_lambda.copy_from_slice(&c);
    if with_vectors {
        cot.d_x = w.clone();
    }
    let grads = backward_stars(&sys, &cot, &build_workspace(&sys))?;

    let loss = |b: &OperatorBundle| -> Result<f64> { Ok(spectral_loss(&solve(b, m_total)?, &sys, &c, &w)) };
    let mut fd = Vec::new();
    let mut exact = Vec::new();
    let kk = k * k;
    for which in 0..2 {
        let count = if which == 0 { bundle.star0.len() } else { bundle.star1.len() };
        let g = if which == 0 { &grads.star0 } else { &grads.star1 };
        for i in 0..count {
            for r in 0..k {
                for col in r..k {
                    let at = |delta: f64| {
                        let mut b = bundle.clone();
                        if which == 0 {
                            b.star0 = b.star0.perturbed(i, r, col, delta);
                        } else {
                            b.star1 = b.star1.perturbed(i, r, col, delta);
                        }
                        loss(&b)
                    };
                    fd.push((at(STAR_STEP)? - at(-STAR_STEP)?) / (2.0 * STAR_STEP));
                    let blk = &g[i * kk..(i + 1) * kk];
                    exact.push(if r == col { blk[r * k + r] } else { blk[r * k + col] + blk[col * k + r] });
                }
            }
        }
    }
    Ok(FdCheck { max_rel_error: rel_error(&fd, &exact), entries: fd.len() })
}

/// Full-spectrum gradients of a loss on eigenvalues and eigenvectors.
pub fn star_gradient_check(mesh: &Mesh, k: usize, seed: u64) -> Result<FdCheck> {
    let bundle = random_bundle(mesh, k, seed)?;
    star_check(&bundle, bundle.dim(), true, seed)
}

/// Gradients of a loss on the lowest `keep` eigenvalues, from a system
/// holding only those.
pub fn eigenvalue_path_check(mesh: &Mesh, k: usize, keep: usize, seed: u64) -> Result<FdCheck> {
    let bundle = random_bundle(mesh, k, seed)?;
    star_check(&bundle, (k + keep).min(bundle.dim()), false, seed)
}

fn tiny_model(task: TaskKind, k: usize, seed: u64) -> ModelConfig {
    let mut cfg = ModelConfig::new(task);
    cfg.k = k;
    cfg.n = 3;
    cfg.m = 6;
    cfg.extra = 6;
    cfg.width = 6;
    cfg.depth = 2;
    cfg.head_width = 5;
    cfg.seed = seed;
    cfg
}

fn random_faces(mesh: &Mesh, classes: usize, seed: u64) -> Label {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Label::Faces((0..mesh.num_triangles()).map(|_| rng.random_range(0..classes)).collect())
}

/// Every MLP parameter through operator, eigensolve, features and a
/// segmentation loss on an open mesh, full spectrum, train mode.
pub fn end_to_end_check(k: usize, seed: u64) -> Result<FdCheck> {
    let mut cfg = tiny_model(TaskKind::Segmentation { classes: 3 }, k, seed);
    cfg.spectrum = Spectrum::Full;
    let mesh = shapes::jitter(&shapes::grid(2, 2, 1.0, 1.0), 0.1, seed);
    let label = random_faces(&mesh, 3, seed);
    let prepared = Prepared::new(mesh, cfg.features);
    let mut net = HodgeNet::new(cfg)?;
    let loss = |net: &HodgeNet| -> Result<crate::model::Backward> {
        let fwd = net.forward(&[&prepared], Mode::Train, &Sequential)?;
        net.backward(&[&prepared], &fwd, &[&label], &Sequential)
    };
    let exact = loss(&net)?.grads;
    let mut worst = 0.0f64;
    let mut entries = 0;
    for (i, g) in exact.iter().enumerate() {
        let mut fd = vec![0.0; g.len()];
        for (j, slot) in fd.iter_mut().enumerate() {
            net.store.networks[i].1.params_mut()[j] += PARAM_STEP;
            let up = loss(&net)?.loss;
            net.store.networks[i].1.params_mut()[j] -= 2.0 * PARAM_STEP;
            let down = loss(&net)?.loss;
            net.store.networks[i].1.params_mut()[j] += PARAM_STEP;
            *slot = (up - down) / (2.0 * PARAM_STEP);
        }
        worst = worst.max(rel_error(&fd, g));
        entries += g.len();
    }
    Ok(FdCheck { max_rel_error: worst, entries })
}

/// Operator-network gradient with `extra` cached pairs against the
/// full-spectrum gradient, on a 30-vertex open mesh.
pub fn descent_sample(k: usize, extra: usize, seed: u64) -> Result<DescentSample> {
    let mut cfg = tiny_model(TaskKind::Segmentation { classes: 3 }, k, seed);
    cfg.m = 8;
    cfg.width = 8;
    cfg.extra = extra;
    let mesh = shapes::jitter(&shapes::grid(5, 4, 1.0, 1.0), 0.1, seed);
    let ex = Example { label: random_faces(&mesh, 3, seed), prepared: Prepared::new(mesh, cfg.features) };
    let grads = |spectrum: Spectrum| -> Result<Vec<f64>> {
        let mut c = cfg.clone();
        c.spectrum = spectrum;
        let net = HodgeNet::new(c)?;
        let fwd = net.forward(&[&ex.prepared], Mode::Train, &Sequential)?;
        let b = net.backward(&[&ex.prepared], &fwd, &[&ex.label], &Sequential)?;
        Ok(b.grads[..3].concat())
    };
    let approx = grads(Spectrum::Truncated)?;
    let exact = grads(Spectrum::Full)?;
    let inner = crate::spectral_grad::descent_check(&approx, &exact);
    let cosine = inner / (linalg::norm2(&approx) * linalg::norm2(&exact));
    Ok(DescentSample { inner, cosine })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Size {
    /// `k = 1`, at most 12 vertices, full spectrum.
    Tiny,
    /// `k = 4`, at most 30 vertices, `extra = m`.
    Small,
}

impl Size {
    pub fn default_k(self) -> usize {
        match self {
            Size::Tiny => 1,
            Size::Small => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub value: f64,
    /// `None` for lines that are recorded but not asserted.
    pub bound: Option<Bound>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    AtMost(f64),
    Positive,
}

impl CheckLine {
    pub fn passed(&self) -> bool {
        match self.bound {
            None => true,
            Some(Bound::AtMost(t)) => self.value <= t,
            Some(Bound::Positive) => self.value > 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub size: Size,
    pub k: usize,
    pub seed: u64,
    pub lines: Vec<CheckLine>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(CheckLine::passed)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "gradcheck size={:?} k={} seed={}", self.size, self.k, self.seed)?;
        for l in &self.lines {
            let (status, bound) = match l.bound {
                None => ("INFO", String::from("recorded")),
                Some(Bound::AtMost(t)) => (if l.passed() { "ok" } else { "FAIL" }, format!("<= {t:e}")),
                Some(Bound::Positive) => (if l.passed() { "ok" } else { "FAIL" }, String::from("> 0")),
            };
            writeln!(f, "{status:>4}  {:<40} {:>12.4e}  ({bound})", l.name, l.value)?;
        }
        write!(f, "{}", if self.passed() { "all checks passed" } else { "some checks failed" })
    }
}

const DESCENT_SEEDS: u64 = 20;

/// Runs the suites for `size`; numerical failures inside a check are
/// errors, tolerance misses are failing lines.
pub fn run(size: Size, k: usize, seed: u64) -> Result<Report> {
    let mut lines = Vec::new();
    let mut push = |name: String, value: f64, bound: Option<Bound>| lines.push(CheckLine { name, value, bound });
    match size {
        Size::Tiny => {
            for s in seed..seed + 2 {
                let mesh = tiny_mesh(s);
                let kind = if mesh.num_boundary_edges() > 0 { "open" } else { "closed" };
                let c = star_gradient_check(&mesh, k, s)?;
                push(format!("star entries, {kind} mesh, {} entries", c.entries), c.max_rel_error, Some(Bound::AtMost(1e-5)));
                let c = eigenvalue_path_check(&mesh, k, 4, s)?;
                push(format!("eigenvalue path, lowest 4, {kind} mesh"), c.max_rel_error, Some(Bound::AtMost(1e-6)));
            }
            let c = end_to_end_check(k.min(2), seed)?;
            push(format!("end to end, {} parameters", c.entries), c.max_rel_error, Some(Bound::AtMost(1e-4)));
        }
        Size::Small => {
            let mesh = small_mesh(seed);
            let c = star_gradient_check(&mesh, k, seed)?;
            push(format!("star entries, {} vertices", mesh.num_vertices()), c.max_rel_error, Some(Bound::AtMost(1e-5)));
            let mut doubled = Vec::new();
            let mut bare = Vec::new();
            for s in seed..seed + DESCENT_SEEDS {
                doubled.push(descent_sample(k, 8, s)?);
                bare.push(descent_sample(k, 0, s)?);
            }
            let min = |v: &[DescentSample], f: fn(&DescentSample) -> f64| v.iter().map(f).fold(f64::INFINITY, f64::min);
            push(String::from("descent, extra = m, min inner product"), min(&doubled, |d| d.inner), Some(Bound::Positive));
            push(String::from("descent, extra = m, min cosine"), min(&doubled, |d| d.cosine), None);
            push(String::from("descent, extra = 0, min cosine"), min(&bare, |d| d.cosine), None);
        }
    }
    Ok(Report { size, k, seed, lines })
}
