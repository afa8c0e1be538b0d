use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::NnError;
use crate::linalg::Matrix;
use crate::math;

pub const LEAKY_SLOPE: f64 = 0.01;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// `depth` hidden layers of width `hidden`, each affine → batch norm →
/// leaky ReLU, followed by an affine output layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MlpSpec {
    pub input: usize,
    pub hidden: usize,
    pub depth: usize,
    pub output: usize,
}

impl MlpSpec {
    fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input];
        d.extend(core::iter::repeat(self.hidden).take(self.depth));
        d.push(self.output);
        d
    }

    /// Learnable scalars: weights, biases, and batch-norm scale and shift.
    pub fn num_parameters(&self) -> usize {
        let d = self.dims();
        let affine: usize = d.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        affine + 2 * self.hidden * self.depth
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerOffsets {
    w: usize,
    b: usize,
    gamma: usize,
    beta: usize,
}

/// Parameters live in one flat vector. Per layer the order is weight
/// (`out × in`, row-major), bias, then batch-norm scale and shift for
/// hidden layers.
#[derive(Debug)]
pub struct Mlp {
    spec: MlpSpec,
    dims: Vec<usize>,
    offsets: Vec<LayerOffsets>,
    params: Vec<f64>,
    running_mean: Vec<Vec<f64>>,
    running_var: Vec<Vec<f64>>,
    id: u64,
    generation: u64,
}

impl Clone for Mlp {
    fn clone(&self) -> Self {
        Self {
            spec: self.spec,
            dims: self.dims.clone(),
            offsets: self.offsets.clone(),
            params: self.params.clone(),
            running_mean: self.running_mean.clone(),
            running_var: self.running_var.clone(),
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            generation: 0,
        }
    }
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.params == other.params && self.running_mean == other.running_mean && self.running_var == other.running_var
    }
}

/// Activations retained by a forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    id: u64,
    generation: u64,
    mode: Mode,
    /// Input to each affine layer.
    inputs: Vec<Matrix>,
    /// Normalized pre-activations per hidden layer.
    xhat: Vec<Matrix>,
    /// Batch-norm outputs (leaky ReLU inputs) per hidden layer.
    act_in: Vec<Matrix>,
    inv_std: Vec<Vec<f64>>,
    batch_mean: Vec<Vec<f64>>,
    batch_var: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn batch_size(&self) -> usize {
        self.inputs[0].rows()
    }
}

impl Mlp {
    /// Kaiming-uniform weights for the leaky ReLU gain, biases uniform in
    /// `±1/√fan_in`, batch-norm scale 1 and shift 0.
    pub fn new(spec: MlpSpec, seed: u64) -> Self {
        let dims = spec.dims();
        let mut offsets = Vec::with_capacity(dims.len() - 1);
        let mut len = 0;
        for (l, w) in dims.windows(2).enumerate() {
            let hidden = l + 1 < dims.len() - 1;
            let o = LayerOffsets { w: len, b: len + w[0] * w[1], gamma: len + w[0] * w[1] + w[1], beta: len + w[0] * w[1] + 2 * w[1] };
            len += w[0] * w[1] + if hidden { 3 * w[1] } else { w[1] };
            offsets.push(o);
        }
        let mut params = vec![0.0; len];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gain = math::sqrt(2.0 / (1.0 + LEAKY_SLOPE * LEAKY_SLOPE));
        for (l, w) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let o = offsets[l];
            let bound = gain * math::sqrt(3.0 / fan_in as f64);
            for p in &mut params[o.w..o.w + fan_in * fan_out] {
                *p = rng.random_range(-bound..bound);
            }
            let bb = 1.0 / math::sqrt(fan_in as f64);
            for p in &mut params[o.b..o.b + fan_out] {
                *p = rng.random_range(-bb..bb);
            }
            if l + 1 < dims.len() - 1 {
                params[o.gamma..o.gamma + fan_out].iter_mut().for_each(|p| *p = 1.0);
            }
        }
        let running_mean = (0..spec.depth).map(|_| vec![0.0; spec.hidden]).collect();
        let running_var = (0..spec.depth).map(|_| vec![1.0; spec.hidden]).collect();
        Self { spec, dims, offsets, params, running_mean, running_var, id: NEXT_ID.fetch_add(1, Ordering::Relaxed), generation: 0 }
    }

    pub fn spec(&self) -> MlpSpec {
        self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output
    }

    pub fn num_parameters(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameters. Caches from earlier forward passes become stale.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.generation += 1;
        &mut self.params
    }

    pub fn running_mean(&self) -> &[Vec<f64>] {
        &self.running_mean
    }

    pub fn running_var(&self) -> &[Vec<f64>] {
        &self.running_var
    }

    /// Replaces the running statistics of hidden layer `l`.
    pub fn set_running_stats(&mut self, l: usize, mean: &[f64], var: &[f64]) -> Result<(), NnError> {
        if l >= self.spec.depth || mean.len() != self.spec.hidden || var.len() != self.spec.hidden {
            return Err(NnError::Contract(format!("running stats for layer {l} have the wrong shape")));
        }
        if var.iter().any(|&v| !(v >= 0.0)) {
            return Err(NnError::Contract("running variance must be nonnegative".into()));
        }
        self.running_mean[l].copy_from_slice(mean);
        self.running_var[l].copy_from_slice(var);
        Ok(())
    }

    fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    /// `x Wᵀ + b` for layer `l`.
    fn affine(&self, l: usize, x: &Matrix) -> Matrix {
        let (fin, fout) = (self.dims[l], self.dims[l + 1]);
        let o = self.offsets[l];
        let w = &self.params[o.w..o.w + fin * fout];
        let b = &self.params[o.b..o.b + fout];
        let mut out = Matrix::zeros(x.rows(), fout);
        for r in 0..x.rows() {
            let xr = x.row(r);
            let orow = out.row_mut(r);
            for c in 0..fout {
                let wr = &w[c * fin..(c + 1) * fin];
                orow[c] = b[c] + xr.iter().zip(wr).map(|(p, q)| p * q).sum::<f64>();
            }
        }
        out
    }

    pub fn forward(&self, input: &Matrix, mode: Mode) -> Result<(Matrix, MlpCache), NnError> {
        if input.cols() != self.spec.input {
            return Err(NnError::Contract(format!("input width {} does not match declared {}", input.cols(), self.spec.input)));
        }
        let n = input.rows();
        if mode == Mode::Train && n < 2 && self.spec.depth > 0 {
            return Err(NnError::Stat(format!("train-mode batch of {n} rows")));
        }
        let depth = self.spec.depth;
        let mut cache = MlpCache {
            id: self.id,
            generation: self.generation,
            mode,
            inputs: Vec::with_capacity(depth + 1),
            xhat: Vec::with_capacity(depth),
            act_in: Vec::with_capacity(depth),
            inv_std: Vec::with_capacity(depth),
            batch_mean: Vec::with_capacity(depth),
            batch_var: Vec::with_capacity(depth),
        };
        let mut x = input.clone();
        for l in 0..self.num_layers() {
            let z = self.affine(l, &x);
            cache.inputs.push(x);
            if l == depth {
                return Ok((z, cache));
            }
            let width = self.dims[l + 1];
            let (mean, var) = match mode {
                Mode::Train => column_stats(&z),
                Mode::Eval => (self.running_mean[l].clone(), self.running_var[l].clone()),
            };
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / math::sqrt(v + BN_EPS)).collect();
            let o = self.offsets[l];
            let gamma = &self.params[o.gamma..o.gamma + width];
            let beta = &self.params[o.beta..o.beta + width];
            let mut xhat = z;
            let mut a = Matrix::zeros(n, width);
            for r in 0..n {
                let (xr, ar) = (xhat.row_mut(r), a.row_mut(r));
                for c in 0..width {
                    xr[c] = (xr[c] - mean[c]) * inv_std[c];
                    ar[c] = gamma[c] * xr[c] + beta[c];
                }
            }
            let mut next = a.clone();
            next.data_mut().iter_mut().for_each(|v| {
                if *v < 0.0 {
                    *v *= LEAKY_SLOPE;
                }
            });
            cache.xhat.push(xhat);
            cache.act_in.push(a);
            cache.inv_std.push(inv_std);
            cache.batch_mean.push(mean);
            cache.batch_var.push(var);
            x = next;
        }
        unreachable!("the output layer returns")
    }

    fn check_cache(&self, cache: &MlpCache) -> Result<(), NnError> {
        if cache.id != self.id || cache.generation != self.generation {
            return Err(NnError::Contract("cache was produced by different parameters".into()));
        }
        Ok(())
    }

    /// Folds the batch statistics of a train-mode pass into the running
    /// estimates; the variance estimate is unbiased.
    pub fn update_running_stats(&mut self, cache: &MlpCache) -> Result<(), NnError> {
        self.check_cache(cache)?;
        if cache.mode != Mode::Train {
            return Ok(());
        }
        let n = cache.batch_size() as f64;
        for l in 0..self.spec.depth {
            for c in 0..self.spec.hidden {
                let rm = &mut self.running_mean[l][c];
                *rm = (1.0 - BN_MOMENTUM) * *rm + BN_MOMENTUM * cache.batch_mean[l][c];
                let rv = &mut self.running_var[l][c];
                *rv = (1.0 - BN_MOMENTUM) * *rv + BN_MOMENTUM * cache.batch_var[l][c] * n / (n - 1.0);
            }
        }
        Ok(())
    }

    /// Returns `∂L/∂input` and `∂L/∂params` (flat, in parameter order).
    pub fn backward(&self, cache: &MlpCache, d_out: &Matrix) -> Result<(Matrix, Vec<f64>), NnError> {
        self.check_cache(cache)?;
        let n = cache.batch_size();
        if d_out.rows() != n || d_out.cols() != self.spec.output {
            return Err(NnError::Contract(format!("output gradient is {}×{}, expected {}×{}", d_out.rows(), d_out.cols(), n, self.spec.output)));
        }
        let mut grads = vec![0.0; self.params.len()];
        let mut dz = d_out.clone();
        for l in (0..self.num_layers()).rev() {
            let (fin, fout) = (self.dims[l], self.dims[l + 1]);
            let o = self.offsets[l];
            if l < self.spec.depth {
                // dz currently holds ∂L/∂(leaky output); turn it into ∂L/∂z.
                let a = &cache.act_in[l];
                let xhat = &cache.xhat[l];
                let inv_std = &cache.inv_std[l];
                let gamma = &self.params[o.gamma..o.gamma + fout];
                let mut dxhat = Matrix::zeros(n, fout);
                let (mut sum_d, mut sum_dx) = (vec![0.0; fout], vec![0.0; fout]);
                for r in 0..n {
                    for c in 0..fout {
                        let da = if a.get(r, c) < 0.0 { LEAKY_SLOPE } else { 1.0 } * dz.get(r, c);
                        grads[o.gamma + c] += da * xhat.get(r, c);
                        grads[o.beta + c] += da;
                        let dx = da * gamma[c];
                        dxhat.set(r, c, dx);
                        sum_d[c] += dx;
                        sum_dx[c] += dx * xhat.get(r, c);
                    }
                }
                let nf = n as f64;
                for r in 0..n {
                    for c in 0..fout {
                        let v = match cache.mode {
                            Mode::Train => inv_std[c] * (dxhat.get(r, c) - sum_d[c] / nf - xhat.get(r, c) * sum_dx[c] / nf),
                            Mode::Eval => inv_std[c] * dxhat.get(r, c),
                        };
                        dz.set(r, c, v);
                    }
                }
            }
            let x = &cache.inputs[l];
            for r in 0..n {
                let (xr, dr) = (x.row(r), dz.row(r));
                for c in 0..fout {
                    let d = dr[c];
                    if d == 0.0 {
                        continue;
                    }
                    grads[o.b + c] += d;
                    let gw = &mut grads[o.w + c * fin..o.w + (c + 1) * fin];
                    for (g, xv) in gw.iter_mut().zip(xr) {
                        *g += d * xv;
                    }
                }
            }
            let w = &self.params[o.w..o.w + fin * fout];
            let mut dx = Matrix::zeros(n, fin);
            for r in 0..n {
                let dr = dz.row(r);
                let xr = dx.row_mut(r);
                for c in 0..fout {
                    let d = dr[c];
                    if d == 0.0 {
                        continue;
                    }
                    for (xv, wv) in xr.iter_mut().zip(&w[c * fin..(c + 1) * fin]) {
                        *xv += d * wv;
                    }
                }
            }
            dz = dx;
        }
        Ok((dz, grads))
    }
}

/// Column means and biased variances.
fn column_stats(z: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let (n, w) = (z.rows(), z.cols());
    let mut mean = vec![0.0; w];
    for r in 0..n {
        for (m, v) in mean.iter_mut().zip(z.row(r)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; w];
    for r in 0..n {
        for ((s, v), m) in var.iter_mut().zip(z.row(r)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= n as f64);
    (mean, var)
}
