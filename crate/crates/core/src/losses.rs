//! Reconstruction and latent-regularization losses plus the KL schedules.
//!
//! Every loss uses the same reduction: sum over the elements of one image
//! (or latent vector), then mean over the batch. Each has a plain `f64`
//! form and a tape form that records a differentiable node.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{ops, sigmoid_scalar, CustomOp, Tape, Values, Var};

/// Stable per-element BCE: `max(x,0) − x·y + ln(1 + e^{−|x|})`.
#[inline]
pub fn bce_element(logit: f64, target: f64) -> f64 {
    logit.max(0.0) - logit * target + (-logit.abs()).exp().ln_1p()
}

fn check_targets(target: &[f64]) -> Result<()> {
    if let Some(bad) = target.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::Domain(format!("BCE target {bad} outside [0, 1]")));
    }
    Ok(())
}

fn batch_of(len: usize, other: usize, batch: usize, what: &str) -> Result<()> {
    if len != other || batch == 0 || !len.is_multiple_of(batch) {
        return Err(Error::Shape(format!(
            "{what}: {len} vs {other} values for a batch of {batch}"
        )));
    }
    Ok(())
}

/// Binary cross-entropy on logits, summed per image and averaged over the
/// batch.
pub fn bce_with_logits(logits: &[f64], target: &[f64], batch: usize) -> Result<f64> {
    batch_of(logits.len(), target.len(), batch, "bce")?;
    check_targets(target)?;
    let total: f64 = logits.iter().zip(target).map(|(&x, &y)| bce_element(x, y)).sum();
    Ok(total / batch as f64)
}

/// Squared error summed per image, averaged over the batch.
pub fn mse_loss(output: &[f64], target: &[f64], batch: usize) -> Result<f64> {
    batch_of(output.len(), target.len(), batch, "mse")?;
    let total: f64 = output.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(total / batch as f64)
}

/// `½(μ² + e^{logvar} − 1 − logvar)` for one latent coordinate.
#[inline]
pub fn kl_element(mu: f64, logvar: f64) -> f64 {
    0.5 * (mu * mu + logvar.exp() - 1.0 - logvar)
}

fn kl_dims(mu: &[f64], logvar: &[f64], batch: usize) -> Vec<f64> {
    let d = mu.len() / batch;
    let mut dims = vec![0.0; d];
    for (i, (&m, &lv)) in mu.iter().zip(logvar).enumerate() {
        dims[i % d] += kl_element(m, lv);
    }
    dims.iter_mut().for_each(|v| *v /= batch as f64);
    dims
}

/// KL divergence to the standard normal prior for `[batch, d_z]` inputs.
///
/// Each latent dimension's batch-mean KL is floored at `free_bits` before
/// summing over dimensions; `free_bits = 0` gives the plain batch mean of
/// per-sample sums.
pub fn kl_divergence(mu: &[f64], logvar: &[f64], batch: usize, free_bits: f64) -> Result<f64> {
    batch_of(mu.len(), logvar.len(), batch, "kl")?;
    Ok(kl_dims(mu, logvar, batch).iter().map(|k| k.max(free_bits)).sum())
}

struct BceOp {
    logits: Var,
    target: Vec<f64>,
    batch: usize,
}

impl CustomOp for BceOp {
    fn name(&self) -> &'static str {
        "bce_with_logits"
    }

    fn inputs(&self) -> Vec<Var> {
        vec![self.logits]
    }

    fn backward(&self, values: &Values<'_>, grad_out: &[f64]) -> Result<Vec<(Var, Vec<f64>)>> {
        let k = grad_out[0] / self.batch as f64;
        let g = values
            .get(self.logits)
            .iter()
            .zip(&self.target)
            .map(|(&x, &y)| k * (sigmoid_scalar(x) - y))
            .collect();
        Ok(vec![(self.logits, g)])
    }
}

/// Tape version of [`bce_with_logits`]; `logits` is `[batch, …]`.
pub fn bce_with_logits_var(tape: &mut Tape, logits: Var, target: &[f64]) -> Result<Var> {
    let batch = tape.shape(logits)[0];
    let value = bce_with_logits(tape.value(logits), target, batch)?;
    let op = BceOp { logits, target: target.to_vec(), batch };
    Ok(tape.push_custom(vec![1], vec![value], Box::new(op)))
}

struct MseOp {
    output: Var,
    target: Vec<f64>,
    batch: usize,
}

impl CustomOp for MseOp {
    fn name(&self) -> &'static str {
        "mse"
    }

    fn inputs(&self) -> Vec<Var> {
        vec![self.output]
    }

    fn backward(&self, values: &Values<'_>, grad_out: &[f64]) -> Result<Vec<(Var, Vec<f64>)>> {
        let k = 2.0 * grad_out[0] / self.batch as f64;
        let g = values
            .get(self.output)
            .iter()
            .zip(&self.target)
            .map(|(a, b)| k * (a - b))
            .collect();
        Ok(vec![(self.output, g)])
    }
}

pub fn mse_loss_var(tape: &mut Tape, output: Var, target: &[f64]) -> Result<Var> {
    let batch = tape.shape(output)[0];
    let value = mse_loss(tape.value(output), target, batch)?;
    let op = MseOp { output, target: target.to_vec(), batch };
    Ok(tape.push_custom(vec![1], vec![value], Box::new(op)))
}

struct KlOp {
    mu: Var,
    logvar: Var,
    batch: usize,
    /// Dimensions whose batch-mean KL sits at or above the floor.
    active: Vec<bool>,
}

impl CustomOp for KlOp {
    fn name(&self) -> &'static str {
        "kl_divergence"
    }

    fn inputs(&self) -> Vec<Var> {
        vec![self.mu, self.logvar]
    }

    fn backward(&self, values: &Values<'_>, grad_out: &[f64]) -> Result<Vec<(Var, Vec<f64>)>> {
        let k = grad_out[0] / self.batch as f64;
        let d = self.active.len();
        let mut d_mu = values.get(self.mu).to_vec();
        let mut d_lv = values.get(self.logvar).to_vec();
        for (i, (m, lv)) in d_mu.iter_mut().zip(d_lv.iter_mut()).enumerate() {
            if self.active[i % d] {
                *m *= k;
                *lv = 0.5 * k * (lv.exp() - 1.0);
            } else {
                *m = 0.0;
                *lv = 0.0;
            }
        }
        Ok(vec![(self.mu, d_mu), (self.logvar, d_lv)])
    }
}

pub fn kl_divergence_var(tape: &mut Tape, mu: Var, logvar: Var, free_bits: f64) -> Result<Var> {
    let batch = tape.shape(mu)[0];
    if tape.shape(mu) != tape.shape(logvar) {
        return Err(Error::Shape(format!(
            "kl: mu {:?} vs logvar {:?}",
            tape.shape(mu),
            tape.shape(logvar)
        )));
    }
    let value = kl_divergence(tape.value(mu), tape.value(logvar), batch, free_bits)?;
    let active = kl_dims(tape.value(mu), tape.value(logvar), batch)
        .into_iter()
        .map(|k| k >= free_bits)
        .collect();
    let op = KlOp { mu, logvar, batch, active };
    Ok(tape.push_custom(vec![1], vec![value], Box::new(op)))
}

/// How the KL term enters the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleMode {
    /// `rec + β_t · kl`, with β ramping linearly to 1 over `n_beta` epochs.
    #[default]
    BetaWarmup,
    /// `rec + γ · |kl − C_t|`, with C ramping linearly to `c_max` over
    /// `n_c` epochs.
    Capacity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossSchedule {
    pub mode: ScheduleMode,
    pub n_beta: u32,
    pub c_max: f64,
    pub n_c: u32,
    pub gamma: f64,
    pub free_bits: f64,
}

impl Default for LossSchedule {
    fn default() -> Self {
        Self::beta_warmup(5)
    }
}

impl LossSchedule {
    pub fn beta_warmup(n_beta: u32) -> Self {
        Self {
            mode: ScheduleMode::BetaWarmup,
            n_beta,
            c_max: 0.0,
            n_c: 1,
            gamma: 1.0,
            free_bits: 0.0,
        }
    }

    pub fn capacity(c_max: f64, n_c: u32, gamma: f64, free_bits: f64) -> Self {
        Self { mode: ScheduleMode::Capacity, n_beta: 1, c_max, n_c, gamma, free_bits }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_beta == 0 || self.n_c == 0 {
            return Err(Error::Config("warm-up horizons must be at least 1 epoch".into()));
        }
        if !(self.c_max >= 0.0) || !(self.free_bits >= 0.0) {
            return Err(Error::Config("c_max and free_bits must be non-negative".into()));
        }
        if self.mode == ScheduleMode::Capacity && !(self.gamma > 0.0) {
            return Err(Error::Config("capacity mode needs gamma > 0".into()));
        }
        Ok(())
    }
}

/// `(β_t, C_t)` for a 1-based epoch.
pub fn schedule_weights(epoch: u32, schedule: &LossSchedule) -> (f64, f64) {
    let ramp = |n: u32| (epoch as f64 / n as f64).min(1.0);
    match schedule.mode {
        ScheduleMode::BetaWarmup => (ramp(schedule.n_beta), 0.0),
        ScheduleMode::Capacity => (1.0, schedule.c_max * ramp(schedule.n_c)),
    }
}

pub fn total_loss(rec: f64, kl: f64, beta_t: f64, c_t: f64, schedule: &LossSchedule) -> f64 {
    match schedule.mode {
        ScheduleMode::BetaWarmup => rec + beta_t * kl,
        ScheduleMode::Capacity => rec + schedule.gamma * (kl - c_t).abs(),
    }
}

/// Tape version of [`total_loss`].
pub fn total_loss_var(
    tape: &mut Tape,
    rec: Var,
    kl: Var,
    beta_t: f64,
    c_t: f64,
    schedule: &LossSchedule,
) -> Result<Var> {
    let reg = match schedule.mode {
        ScheduleMode::BetaWarmup => ops::scale(tape, kl, beta_t),
        ScheduleMode::Capacity => {
            let gap = ops::add_scalar(tape, kl, -c_t);
            let gap = ops::abs(tape, gap);
            ops::scale(tape, gap, schedule.gamma)
        }
    };
    ops::add(tape, rec, reg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bce_at_half() {
        let v = bce_with_logits(&[0.0; 784 * 2], &[0.5; 784 * 2], 2).unwrap();
        assert_relative_eq!(v, 784.0 * std::f64::consts::LN_2, epsilon = 1e-9);
    }

    #[test]
    fn bce_is_stable_in_the_tails() {
        assert!(bce_element(40.0, 1.0) < 1e-15);
        assert_relative_eq!(bce_element(-40.0, 1.0), 40.0, epsilon = 1e-12);
        for x in [-1e4, 1e4] {
            for y in [0.0, 0.3, 1.0] {
                let v = bce_element(x, y);
                assert!(v.is_finite() && v >= 0.0);
            }
        }
    }

    #[test]
    fn bce_rejects_out_of_range_targets() {
        assert!(matches!(bce_with_logits(&[0.0], &[1.5], 1), Err(Error::Domain(_))));
    }

    #[test]
    fn mse_values() {
        assert_eq!(mse_loss(&[0.2; 784], &[0.2; 784], 1).unwrap(), 0.0);
        assert_relative_eq!(mse_loss(&[0.1; 784], &[0.0; 784], 1).unwrap(), 7.84, epsilon = 1e-9);
    }

    #[test]
    fn kl_values() {
        assert_eq!(kl_divergence(&[0.0; 16], &[0.0; 16], 2, 0.0).unwrap(), 0.0);
        assert_relative_eq!(kl_divergence(&[1.0], &[0.0], 1, 0.0).unwrap(), 0.5);
        assert_relative_eq!(kl_divergence(&[0.0; 8], &[0.0; 8], 1, 0.25).unwrap(), 2.0);
    }

    #[test]
    fn schedules() {
        let warm = LossSchedule::beta_warmup(5);
        assert_eq!(schedule_weights(5, &warm), (1.0, 0.0));
        assert_eq!(schedule_weights(1, &warm).0, 0.2);
        let cap = LossSchedule::capacity(10.0, 10, 20.0, 0.25);
        assert_eq!(schedule_weights(5, &cap).1, 5.0);
        assert_eq!(schedule_weights(1000, &cap), (1.0, 10.0));
    }

    #[test]
    fn total_loss_modes() {
        let warm = LossSchedule::beta_warmup(5);
        assert_eq!(total_loss(100.0, 5.0, 1.0, 0.0, &warm), 105.0);
        let cap = LossSchedule::capacity(12.0, 10, 10.0, 0.5);
        assert_eq!(total_loss(100.0, 12.0, 1.0, 12.0, &cap), 100.0);
        let cap = LossSchedule::capacity(12.0, 10, 20.0, 0.5);
        assert_eq!(total_loss(100.0, 2.0, 1.0, 12.0, &cap), 300.0);
    }

    fn numeric_grad(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        (0..x.len())
            .map(|i| {
                let mut p = x.to_vec();
                p[i] += h;
                let mut m = x.to_vec();
                m[i] -= h;
                (f(&p) - f(&m)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn tape_gradients_match_differences() {
        let logits = [0.3, -1.2, 2.0, 0.0, -0.4, 5.0];
        let target = [0.0, 1.0, 0.7, 0.5, 0.1, 1.0];
        let mut tape = Tape::new();
        let x = tape.input(vec![2, 3], logits.to_vec(), true).unwrap();
        let l = bce_with_logits_var(&mut tape, x, &target).unwrap();
        tape.backward(l).unwrap();
        let num = numeric_grad(|v| bce_with_logits(v, &target, 2).unwrap(), &logits);
        for (a, n) in tape.grad(x).unwrap().iter().zip(num) {
            assert_relative_eq!(*a, n, epsilon = 1e-7);
        }

        let mut tape = Tape::new();
        let x = tape.input(vec![2, 3], logits.to_vec(), true).unwrap();
        let l = mse_loss_var(&mut tape, x, &target).unwrap();
        tape.backward(l).unwrap();
        for ((a, x), y) in tape.grad(x).unwrap().iter().zip(logits).zip(target) {
            assert_relative_eq!(*a, (x - y), epsilon = 1e-12);
        }
    }

    #[test]
    fn kl_gradients_with_free_bits_and_capacity() {
        let mu = [0.4, -0.1, 0.9, 0.02, 0.3, -0.05];
        let lv = [-0.3, 0.1, 0.5, 0.01, -0.2, 0.03];
        for fb in [0.0, 0.08] {
            let cap = LossSchedule::capacity(3.0, 10, 7.0, fb);
            let mut tape = Tape::new();
            let m = tape.input(vec![2, 3], mu.to_vec(), true).unwrap();
            let v = tape.input(vec![2, 3], lv.to_vec(), true).unwrap();
            let rec = tape.input(vec![1], vec![1.0], false).unwrap();
            let kl = kl_divergence_var(&mut tape, m, v, fb).unwrap();
            let t = total_loss_var(&mut tape, rec, kl, 1.0, 0.1, &cap).unwrap();
            tape.backward(t).unwrap();
            let f = |all: &[f64]| {
                let kl = kl_divergence(&all[..6], &all[6..], 2, fb).unwrap();
                total_loss(1.0, kl, 1.0, 0.1, &cap)
            };
            let all: Vec<f64> = mu.iter().chain(&lv).copied().collect();
            let num = numeric_grad(f, &all);
            let ana: Vec<f64> = tape.grad(m).unwrap().iter().chain(tape.grad(v).unwrap()).copied().collect();
            for (a, n) in ana.iter().zip(num) {
                assert!((a - n).abs() < 1e-6, "analytic {a} numeric {n} (fb {fb})");
            }
        }
    }
}
