use crate::error::Result;
use crate::params::ParameterSet;
use crate::training::config::AdamConfig;

/// Adam with bias-corrected moments.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: i32,
    m: ParameterSet,
    v: ParameterSet,
}

impl Adam {
    pub fn new(params: &ParameterSet, config: AdamConfig) -> Self {
        Self { config, step: 0, m: params.zeros_like(), v: params.zeros_like() }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    /// One update of `params` against `grads` at learning rate `lr`.
    pub fn step(&mut self, params: &mut ParameterSet, grads: &ParameterSet, lr: f64) -> Result<()> {
        params.ensure_same_layout(grads)?;
        params.ensure_same_layout(&self.m)?;
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step);
        let c2 = 1.0 - beta2.powi(self.step);
        for id in 0..params.len() {
            let g = grads.by_id(id).data();
            let m = self.m.by_id_mut(id).data_mut();
            for (m, &g) in m.iter_mut().zip(g) {
                *m = beta1 * *m + (1.0 - beta1) * g;
            }
            let v = self.v.by_id_mut(id).data_mut();
            for (v, &g) in v.iter_mut().zip(g) {
                *v = beta2 * *v + (1.0 - beta2) * g * g;
            }
            let (m, v) = (self.m.by_id(id).data(), self.v.by_id(id).data());
            for ((p, &m), &v) in params.by_id_mut(id).data_mut().iter_mut().zip(m).zip(v) {
                *p -= lr * (m / c1) / ((v / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}
