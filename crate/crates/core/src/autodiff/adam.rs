use alloc::collections::BTreeMap;
use alloc::format;

use crate::error::{Error, Result};
use crate::math;
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moments and the bias-correction step of one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Tensor,
    pub v: Tensor,
    pub step: u64,
}

impl AdamState {
    pub fn new(shape: &[usize]) -> Self {
        AdamState {
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
            step: 0,
        }
    }
}

/// Adam with per-parameter step counters, so parameters that join training
/// late (after pretraining) get their own bias correction.
#[derive(Clone, Debug, Default)]
pub struct Adam {
    pub config: AdamConfig,
    states: BTreeMap<ParamId, AdamState>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            states: BTreeMap::new(),
        }
    }

    pub fn state(&self, id: ParamId) -> Option<&AdamState> {
        self.states.get(&id)
    }

    pub fn states(&self) -> impl Iterator<Item = (ParamId, &AdamState)> {
        self.states.iter().map(|(k, v)| (*k, v))
    }

    pub fn insert_state(&mut self, id: ParamId, state: AdamState) {
        self.states.insert(id, state);
    }

    /// Applies one update to every parameter listed in `grads`. Nothing is
    /// modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[(ParamId, Tensor)]) -> Result<()> {
        for (id, g) in grads {
            if !g.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite gradient for parameter `{}`",
                    params.name(*id)
                )));
            }
            if g.shape() != params.get(*id).shape() {
                return Err(Error::shape(
                    "adam_step",
                    &[params.get(*id).shape(), g.shape()],
                    format!("gradient of `{}`", params.name(*id)),
                ));
            }
        }
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        for (id, g) in grads {
            let state = self
                .states
                .entry(*id)
                .or_insert_with(|| AdamState::new(g.shape()));
            state.step += 1;
            let bc1 = 1.0 - math::powi(beta1, state.step as i32);
            let bc2 = 1.0 - math::powi(beta2, state.step as i32);
            let p = params.get_mut(*id).data_mut();
            let m = state.m.data_mut();
            let v = state.v.data_mut();
            for (j, &gj) in g.data().iter().enumerate() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= lr * m_hat / (math::sqrt(v_hat) + eps);
            }
        }
        Ok(())
    }
}
