use alloc::vec;
use alloc::vec::Vec;

use super::NnError;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global gradient-norm bound applied before each step.
    pub clip_norm: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01, clip_norm: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    /// `norm` is the global gradient norm before clipping.
    Applied { norm: f64, clipped: bool },
    /// A gradient entry was not finite; nothing changed.
    Skipped,
}

/// Scales `grads` in place so their joint norm is at most `max_norm`.
/// Returns the norm before scaling.
pub fn clip_global_norm(grads: &mut [&mut [f64]], max_norm: f64) -> f64 {
    let norm = math::sqrt(grads.iter().flat_map(|g| g.iter()).map(|v| v * v).sum());
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v *= s));
    }
    norm
}

/// AdamW with decoupled weight decay over a fixed list of parameter
/// tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub cfg: AdamWConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig, shapes: &[usize]) -> Self {
        Self { cfg, step: 0, m: shapes.iter().map(|&n| vec![0.0; n]).collect(), v: shapes.iter().map(|&n| vec![0.0; n]).collect() }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.m, &self.v)
    }

    /// Restores optimizer state, e.g. from a checkpoint.
    pub fn restore(&mut self, step: u64, m: Vec<Vec<f64>>, v: Vec<Vec<f64>>) -> Result<(), NnError> {
        let same = |a: &[Vec<f64>]| a.len() == self.m.len() && a.iter().zip(&self.m).all(|(x, y)| x.len() == y.len());
        if !same(&m) || !same(&v) {
            return Err(NnError::Contract("optimizer moments do not match parameter shapes".into()));
        }
        self.step = step;
        self.m = m;
        self.v = v;
        Ok(())
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &mut [&mut [f64]]) -> Result<StepOutcome, NnError> {
        let shapes_ok = params.len() == self.m.len()
            && grads.len() == self.m.len()
            && params.iter().zip(grads.iter()).zip(&self.m).all(|((p, g), m)| p.len() == m.len() && g.len() == m.len());
        if !shapes_ok {
            return Err(NnError::Contract("gradient shapes do not match parameters".into()));
        }
        if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            log::warn!("non-finite gradient; optimizer step skipped");
            return Ok(StepOutcome::Skipped);
        }
        let norm = clip_global_norm(grads, self.cfg.clip_norm);
        self.step += 1;
        let c = self.cfg;
        let t = self.step as i32;
        let bc1 = 1.0 - math::powi(c.beta1, t);
        let bc2 = 1.0 - math::powi(c.beta2, t);
        for (((p, g), m), v) in params.iter_mut().zip(grads.iter()).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                p[i] -= c.lr * c.weight_decay * p[i];
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= c.lr * mhat / (math::sqrt(vhat) + c.eps);
            }
        }
        Ok(StepOutcome::Applied { norm, clipped: norm > c.clip_norm })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_gradients_without_decay_keep_parameters() {
        let mut opt = AdamW::new(AdamWConfig { weight_decay: 0.0, ..Default::default() }, &[3]);
        let mut p = [1.0, -2.0, 3.0];
        let mut g = [0.0; 3];
        opt.step(&mut [&mut p], &mut [&mut g]).unwrap();
        assert_eq!(p, [1.0, -2.0, 3.0]);
    }

    #[test]
    fn zero_gradients_apply_decoupled_decay() {
        let mut opt = AdamW::new(AdamWConfig::default(), &[2]);
        let mut p = [1.0, -4.0];
        opt.step(&mut [&mut p], &mut [&mut [0.0, 0.0]]).unwrap();
        let f = 1.0 - 1e-4 * 0.01;
        assert_eq!(p, [f, -4.0 * f]);
    }

    #[test]
    fn single_scalar_hand_update() {
        let cfg = AdamWConfig::default();
        let mut opt = AdamW::new(cfg, &[1]);
        let mut p = [0.5];
        let out = opt.step(&mut [&mut p], &mut [&mut [1.0]]).unwrap();
        assert_eq!(out, StepOutcome::Applied { norm: 1.0, clipped: false });
        // m̂ = 1, v̂ = 1 after bias correction.
        let want = 0.5 * (1.0 - 1e-4 * 0.01) - 1e-4 * 1.0 / (1.0 + 1e-8);
        assert!((p[0] - want).abs() < 1e-12);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn non_finite_gradient_skips() {
        let mut opt = AdamW::new(AdamWConfig::default(), &[2]);
        let mut p = [1.0, 1.0];
        let out = opt.step(&mut [&mut p], &mut [&mut [f64::NAN, 0.0]]).unwrap();
        assert_eq!(out, StepOutcome::Skipped);
        assert_eq!(p, [1.0, 1.0]);
        assert_eq!(opt.step_count(), 0);
    }

    proptest! {
        #[test]
        fn clipping_bounds_norm(v in proptest::collection::vec(-100.0f64..100.0, 1..20)) {
            let mut g = v.clone();
            clip_global_norm(&mut [&mut g], 1.0);
            let n: f64 = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!(n <= 1.0 + 1e-9);
        }
    }
}
