use alloc::string::String;
use alloc::vec::Vec;

use super::{AdamW, AdamWConfig, Mlp, NnError, StepOutcome};

/// Named networks sharing one optimizer. Network order fixes the layout of
/// flattened gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore {
    pub networks: Vec<(String, Mlp)>,
    pub optimizer: AdamW,
}

impl ParameterStore {
    pub fn new(networks: Vec<(String, Mlp)>, cfg: AdamWConfig) -> Self {
        let shapes: Vec<usize> = networks.iter().map(|(_, m)| m.num_parameters()).collect();
        Self { networks, optimizer: AdamW::new(cfg, &shapes) }
    }

    pub fn get(&self, name: &str) -> Option<&Mlp> {
        self.networks.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Mlp> {
        self.networks.iter_mut().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    /// Applies one optimizer step. `grads[i]` belongs to network `i`.
    pub fn step(&mut self, grads: &mut [Vec<f64>]) -> Result<StepOutcome, NnError> {
        let mut params: Vec<&mut [f64]> = self.networks.iter_mut().map(|(_, m)| m.params_mut()).collect();
        let mut g: Vec<&mut [f64]> = grads.iter_mut().map(|g| g.as_mut_slice()).collect();
        self.optimizer.step(&mut params, &mut g)
    }
}

/// Learnable scalars across all networks; running statistics excluded.
pub fn count_parameters(store: &ParameterStore) -> usize {
    store.networks.iter().map(|(_, m)| m.num_parameters()).sum()
}
