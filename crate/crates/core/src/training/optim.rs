use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{param_group, ParamGroup};
use crate::neural::Module;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr_classical: f64,
    pub lr_quantum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr_classical: 0.002, lr_quantum: 0.0002, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn lr(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Classical => self.lr_classical,
            ParamGroup::Quantum => self.lr_quantum,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr_classical >= 0.0
            && self.lr_quantum >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid Adam settings {self:?}")));
        }
        Ok(())
    }
}

/// One bias-corrected Adam update for a single tensor. `t` is the 1-based
/// step number.
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    lr: f64,
    cfg: &AdamConfig,
) {
    let c1 = 1.0 - cfg.beta1.powi(t as i32);
    let c2 = 1.0 - cfg.beta2.powi(t as i32);
    for i in 0..param.len() {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        param[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

/// First and second moments for every trainable tensor, keyed by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl AdamState {
    /// Applies one step to every trainable tensor of `model`, each group
    /// with its own learning rate. Fails without touching any parameter if
    /// a gradient is not finite.
    pub fn step(&mut self, model: &mut dyn Module, cfg: &AdamConfig) -> Result<()> {
        let mut bad = None;
        model.visit("", &mut |name, t| {
            if bad.is_none() && t.requires_grad() && t.grad().is_some_and(|g| g.iter().any(|v| !v.is_finite())) {
                bad = Some(name);
            }
        });
        if let Some(name) = bad {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
        self.step += 1;
        let t = self.step;
        model.visit_mut("", &mut |name, tensor| {
            if !tensor.requires_grad() {
                return;
            }
            let lr = cfg.lr(param_group(&name));
            let n = tensor.len();
            let grad = tensor.grad().map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
            let (m, v) = self.moments.entry(name).or_insert_with(|| (vec![0.0; n], vec![0.0; n]));
            adam_update(tensor.values_mut(), &grad, m, v, t, lr, cfg);
        });
        Ok(())
    }
}

/// Scales `grads` jointly so their global L2 norm is at most `g_max`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [&mut [f64]], g_max: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > g_max && norm > 0.0 {
        let k = g_max / norm;
        grads.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v *= k));
    }
    norm
}

/// [`clip_global_norm`] over every trainable gradient of `model`.
pub fn clip_module_grads(model: &mut dyn Module, g_max: f64) -> f64 {
    let mut norm_sq = 0.0;
    model.visit("", &mut |_, t| {
        if let (true, Some(g)) = (t.requires_grad(), t.grad()) {
            norm_sq += g.iter().map(|v| v * v).sum::<f64>();
        }
    });
    let norm = norm_sq.sqrt();
    if norm > g_max && norm > 0.0 {
        let k = g_max / norm;
        model.visit_mut("", &mut |_, t| {
            if let Some(g) = t.grad_mut() {
                g.iter_mut().for_each(|v| *v *= k);
            }
        });
    }
    norm
}
