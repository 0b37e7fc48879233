use rand::Rng;

use super::ops;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

/// Whether batch norm uses batch statistics (and updates its running
/// estimates) or the stored running estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Anything holding named tensors: trainable weights and buffers such as
/// running statistics. Names are dotted paths used by checkpoints and
/// error messages.
pub trait Module {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor));

    fn num_trainable(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, t| {
            if t.requires_grad() {
                n += t.len();
            }
        });
        n
    }

    fn zero_grad(&mut self) {
        self.visit_mut("", &mut |_, t| t.zero_grad());
    }

    /// Pulls gradients for every trainable tensor out of `tape`.
    fn collect_grads(&mut self, tape: &Tape) {
        self.visit_mut("", &mut |_, t| {
            if t.requires_grad() {
                tape.accumulate_into(t);
            }
        });
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

fn uniform_param<R: Rng + ?Sized>(rng: &mut R, shape: Vec<usize>, bound: f64) -> Tensor {
    let n = shape.iter().product();
    let values = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::new(shape, values).expect("shape matches").into_parameter()
}

/// Fully connected layer, `y = x·Wᵀ + b`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    /// Weights and bias drawn from `U(-1/√fan_in, 1/√fan_in)`.
    pub fn new<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        Self {
            weight: uniform_param(rng, vec![fan_out, fan_in], bound),
            bias: uniform_param(rng, vec![fan_out], bound),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn fan_out(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let w = tape.param(&self.weight);
        let b = tape.param(&self.bias);
        ops::linear(tape, x, w, b)
    }
}

impl Module for Linear {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

/// 2-D convolution with square kernels.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    pub fn new<R: Rng + ?Sized>(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / ((in_ch * kernel * kernel) as f64).sqrt();
        Self {
            weight: uniform_param(rng, vec![out_ch, in_ch, kernel, kernel], bound),
            bias: uniform_param(rng, vec![out_ch], bound),
            stride,
            pad,
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let w = tape.param(&self.weight);
        let b = tape.param(&self.bias);
        ops::conv2d(tape, x, w, b, self.stride, self.pad)
    }
}

impl Module for Conv2d {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

/// Batch normalization over channels (`[B, C]` or `[B, C, H, W]`).
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::filled(vec![channels], 1.0).into_parameter(),
            beta: Tensor::zeros(vec![channels]).into_parameter(),
            running_mean: Tensor::zeros(vec![channels]),
            running_var: Tensor::filled(vec![channels], 1.0),
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    /// In train mode the running estimates move toward the batch mean and
    /// the unbiased batch variance.
    pub fn forward(&mut self, tape: &mut Tape, x: Var, mode: Mode) -> Result<Var> {
        let g = tape.param(&self.gamma);
        let b = tape.param(&self.beta);
        match mode {
            Mode::Eval => {
                let running = Some((self.running_mean.values(), self.running_var.values()));
                Ok(ops::batch_norm(tape, x, g, b, self.eps, running)?.0)
            }
            Mode::Train => {
                let (y, stats) = ops::batch_norm(tape, x, g, b, self.eps, None)?;
                let stats = stats.expect("train mode returns batch statistics");
                let m = self.momentum;
                let unbias = stats.count as f64 / (stats.count as f64 - 1.0);
                for (r, v) in self.running_mean.values_mut().iter_mut().zip(&stats.mean) {
                    *r = (1.0 - m) * *r + m * v;
                }
                for (r, v) in self.running_var.values_mut().iter_mut().zip(&stats.var) {
                    *r = (1.0 - m) * *r + m * v * unbias;
                }
                Ok(y)
            }
        }
    }
}

impl Module for BatchNorm {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor)) {
        f(join(prefix, "gamma"), &self.gamma);
        f(join(prefix, "beta"), &self.beta);
        f(join(prefix, "running_mean"), &self.running_mean);
        f(join(prefix, "running_var"), &self.running_var);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        f(join(prefix, "gamma"), &mut self.gamma);
        f(join(prefix, "beta"), &mut self.beta);
        f(join(prefix, "running_mean"), &mut self.running_mean);
        f(join(prefix, "running_var"), &mut self.running_var);
    }
}
