//! Encoders, the QINR decoder, the classical baseline decoder and the
//! assembled autoencoder / variational autoencoder.

mod quantum_op;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{IMAGE_PIXELS, IMAGE_SIDE};
use crate::error::{Error, Result};
use crate::neural::{join, ops, BatchNorm, Conv2d, Linear, Mode, Module, Tape, Tensor, Var};
use crate::qsim::{CircuitSpec, EntanglingPattern, QuantumParams, ReadoutMode};

/// Name prefix shared by every circuit parameter.
pub const QUANTUM_PREFIX: &str = "decoder.quantum.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DecoderKind {
    #[default]
    Qinr,
    ClassicalLinear,
}

/// Architecture description shared by every model variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub n_qubits: usize,
    /// Encoding layers `L`.
    pub reuploads: usize,
    /// Rotation/entangler repetitions `K`.
    pub reps: usize,
    pub latent_dim: usize,
    /// Width of the batch-normalized projection before the angle layer.
    pub v_dim: usize,
    /// Output widths of the readout layers; the last must be 784.
    pub readout_widths: Vec<usize>,
    pub readout: ReadoutMode,
    pub global_scale: bool,
    pub decoder: DecoderKind,
    /// Hidden widths of the classical baseline decoder (two entries).
    pub classical_hidden: Vec<usize>,
    pub variational: bool,
    pub encoder_channels: Vec<usize>,
    pub leaky_slope: f64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::standard_vae()
    }
}

impl ModelConfig {
    pub fn standard_vae() -> Self {
        Self {
            n_qubits: 6,
            reuploads: 2,
            reps: 2,
            latent_dim: 8,
            v_dim: 128,
            readout_widths: vec![128, 512, IMAGE_PIXELS],
            readout: ReadoutMode::ZOnly,
            global_scale: false,
            decoder: DecoderKind::Qinr,
            classical_hidden: vec![128, 512],
            variational: true,
            encoder_channels: vec![32, 64, 128, 256],
            leaky_slope: 0.2,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }

    pub fn standard_ae() -> Self {
        Self {
            v_dim: 256,
            readout_widths: vec![256, 512, IMAGE_PIXELS],
            classical_hidden: vec![256, 512],
            variational: false,
            ..Self::standard_vae()
        }
    }

    pub fn circuit(&self) -> CircuitSpec {
        CircuitSpec::new(self.n_qubits, self.reuploads, self.reps)
            .with_pattern(EntanglingPattern::brick_wall(self.n_qubits, self.reps))
            .with_readout(self.readout)
            .with_global_scale(self.global_scale)
    }

    /// Spatial side after the encoder's stride-2 convolutions.
    pub fn encoder_side(&self) -> usize {
        self.encoder_channels
            .iter()
            .fold(IMAGE_SIDE, |s, _| (s + 2 - 3) / 2 + 1)
    }

    pub fn flatten_dim(&self) -> usize {
        let side = self.encoder_side();
        self.encoder_channels.last().copied().unwrap_or(1) * side * side
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.latent_dim == 0 || self.v_dim == 0 || self.n_qubits == 0 {
            return bad("latent_dim, v_dim and n_qubits must be positive".into());
        }
        if self.n_qubits > 12 {
            return bad(format!("{} qubits exceeds the supported maximum of 12", self.n_qubits));
        }
        if self.readout_widths.last() != Some(&IMAGE_PIXELS) {
            return bad(format!("last readout width must be {IMAGE_PIXELS}"));
        }
        if self.readout_widths.contains(&0) || self.encoder_channels.contains(&0) {
            return bad("layer widths must be positive".into());
        }
        if self.encoder_channels.is_empty() {
            return bad("encoder needs at least one convolution".into());
        }
        if self.decoder == DecoderKind::ClassicalLinear && self.classical_hidden.len() != 2 {
            return bad("classical decoder needs exactly two hidden widths".into());
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum < 1.0) || !(self.bn_eps > 0.0) {
            return bad("bn_momentum must be in (0, 1) and bn_eps positive".into());
        }
        self.circuit().validate()
    }
}

fn batch_norm(cfg: &ModelConfig, ch: usize) -> BatchNorm {
    let mut bn = BatchNorm::new(ch);
    bn.momentum = cfg.bn_momentum;
    bn.eps = cfg.bn_eps;
    bn
}

/// Encoder output: a deterministic code or Gaussian posterior parameters.
#[derive(Debug, Clone, Copy)]
pub enum Latent {
    Code(Var),
    Gaussian { mu: Var, logvar: Var },
}

#[derive(Debug, Clone)]
pub enum EncoderHead {
    Deterministic(Linear),
    Gaussian { mu: Linear, logvar: Linear },
}

/// Stride-2 convolution stack with batch norm and leaky ReLU, then one or
/// two linear heads on the flattened features.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub blocks: Vec<(Conv2d, BatchNorm)>,
    pub head: EncoderHead,
    slope: f64,
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let mut blocks = Vec::new();
        let mut cin = 1;
        for &c in &cfg.encoder_channels {
            blocks.push((Conv2d::new(cin, c, 3, 2, 1, rng), batch_norm(cfg, c)));
            cin = c;
        }
        let flat = cfg.flatten_dim();
        let head = if cfg.variational {
            EncoderHead::Gaussian {
                mu: Linear::new(flat, cfg.latent_dim, rng),
                logvar: Linear::new(flat, cfg.latent_dim, rng),
            }
        } else {
            EncoderHead::Deterministic(Linear::new(flat, cfg.latent_dim, rng))
        };
        Self { blocks, head, slope: cfg.leaky_slope }
    }

    /// `x` is `[batch, 1, 28, 28]` in [-1, 1].
    pub fn forward(&mut self, tape: &mut Tape, x: Var, mode: Mode) -> Result<Latent> {
        if tape.shape(x)[1..] != [1, IMAGE_SIDE, IMAGE_SIDE] {
            return Err(Error::Shape(format!(
                "encoder expects [batch, 1, {IMAGE_SIDE}, {IMAGE_SIDE}], got {:?}",
                tape.shape(x)
            )));
        }
        let mut h = x;
        for (conv, bn) in &mut self.blocks {
            h = conv.forward(tape, h)?;
            h = bn.forward(tape, h, mode)?;
            h = ops::leaky_relu(tape, h, self.slope);
        }
        let flat = ops::flatten(tape, h)?;
        Ok(match &self.head {
            EncoderHead::Deterministic(l) => Latent::Code(l.forward(tape, flat)?),
            EncoderHead::Gaussian { mu, logvar } => Latent::Gaussian {
                mu: mu.forward(tape, flat)?,
                logvar: logvar.forward(tape, flat)?,
            },
        })
    }
}

impl Module for Encoder {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &crate::neural::Tensor)) {
        for (i, (conv, bn)) in self.blocks.iter().enumerate() {
            conv.visit(&join(prefix, &format!("conv{i}")), f);
            bn.visit(&join(prefix, &format!("bn{i}")), f);
        }
        match &self.head {
            EncoderHead::Deterministic(l) => l.visit(&join(prefix, "fc"), f),
            EncoderHead::Gaussian { mu, logvar } => {
                mu.visit(&join(prefix, "mu"), f);
                logvar.visit(&join(prefix, "logvar"), f);
            }
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut crate::neural::Tensor)) {
        for (i, (conv, bn)) in self.blocks.iter_mut().enumerate() {
            conv.visit_mut(&join(prefix, &format!("conv{i}")), f);
            bn.visit_mut(&join(prefix, &format!("bn{i}")), f);
        }
        match &mut self.head {
            EncoderHead::Deterministic(l) => l.visit_mut(&join(prefix, "fc"), f),
            EncoderHead::Gaussian { mu, logvar } => {
                mu.visit_mut(&join(prefix, "mu"), f);
                logvar.visit_mut(&join(prefix, "logvar"), f);
            }
        }
    }
}

/// Latent → linear → batch norm → angle projection → circuit → readout.
#[derive(Debug, Clone)]
pub struct QinrDecoder {
    pub spec: CircuitSpec,
    pub project: Linear,
    pub norm: BatchNorm,
    pub angles: Linear,
    pub theta: Tensor,
    pub xi: Tensor,
    pub rho: Option<Tensor>,
    pub readout: Vec<Linear>,
    slope: f64,
}

impl QinrDecoder {
    pub fn new<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let spec = cfg.circuit();
        let project = Linear::new(cfg.latent_dim, cfg.v_dim, rng);
        let angles = Linear::new(cfg.v_dim, cfg.n_qubits, rng);
        let q = QuantumParams::init(&spec, rng);
        let param = |v: Vec<f64>| {
            let n = v.len();
            Tensor::new(vec![n], v).expect("1-d").into_parameter()
        };
        let mut readout = Vec::new();
        let mut width = spec.feature_width();
        for &w in &cfg.readout_widths {
            readout.push(Linear::new(width, w, rng));
            width = w;
        }
        Self {
            project,
            norm: batch_norm(cfg, cfg.v_dim),
            angles,
            theta: param(q.theta),
            xi: param(q.xi),
            rho: q.rho.map(|r| param(vec![r])),
            readout,
            slope: cfg.leaky_slope,
            spec,
        }
    }

    pub fn quantum_params(&self) -> QuantumParams {
        QuantumParams {
            theta: self.theta.values().to_vec(),
            xi: self.xi.values().to_vec(),
            rho: self.rho.as_ref().map(|r| r.values()[0]),
        }
    }

    /// Encoding angles `h` for a latent batch.
    pub fn angles_forward(&mut self, tape: &mut Tape, z: Var, mode: Mode) -> Result<Var> {
        let v = self.project.forward(tape, z)?;
        let v = self.norm.forward(tape, v, mode)?;
        self.angles.forward(tape, v)
    }

    pub fn forward(&mut self, tape: &mut Tape, z: Var, mode: Mode) -> Result<Var> {
        let h = self.angles_forward(tape, z, mode)?;
        let theta = tape.param(&self.theta);
        let xi = tape.param(&self.xi);
        let rho = self.rho.as_ref().map(|r| tape.param(r));
        let mut y = quantum_op::circuit_var(tape, &self.spec, h, theta, xi, rho)?;
        let last = self.readout.len() - 1;
        for (i, layer) in self.readout.iter().enumerate() {
            y = layer.forward(tape, y)?;
            if i < last {
                y = ops::leaky_relu(tape, y, self.slope);
            }
        }
        Ok(y)
    }
}

impl Module for QinrDecoder {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor)) {
        self.project.visit(&join(prefix, "project"), f);
        self.norm.visit(&join(prefix, "norm"), f);
        self.angles.visit(&join(prefix, "angles"), f);
        f(join(prefix, "quantum.theta"), &self.theta);
        f(join(prefix, "quantum.xi"), &self.xi);
        if let Some(r) = &self.rho {
            f(join(prefix, "quantum.rho"), r);
        }
        for (i, l) in self.readout.iter().enumerate() {
            l.visit(&join(prefix, &format!("readout{i}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        self.project.visit_mut(&join(prefix, "project"), f);
        self.norm.visit_mut(&join(prefix, "norm"), f);
        self.angles.visit_mut(&join(prefix, "angles"), f);
        f(join(prefix, "quantum.theta"), &mut self.theta);
        f(join(prefix, "quantum.xi"), &mut self.xi);
        if let Some(r) = &mut self.rho {
            f(join(prefix, "quantum.rho"), r);
        }
        for (i, l) in self.readout.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &format!("readout{i}")), f);
        }
    }
}

/// Fully classical baseline: three linear layers, the first two followed
/// by batch norm and leaky ReLU.
#[derive(Debug, Clone)]
pub struct ClassicalDecoder {
    pub hidden: Vec<(Linear, BatchNorm)>,
    pub output: Linear,
    slope: f64,
}

impl ClassicalDecoder {
    pub fn new<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let mut hidden = Vec::new();
        let mut width = cfg.latent_dim;
        for &w in &cfg.classical_hidden {
            hidden.push((Linear::new(width, w, rng), batch_norm(cfg, w)));
            width = w;
        }
        Self { hidden, output: Linear::new(width, IMAGE_PIXELS, rng), slope: cfg.leaky_slope }
    }

    pub fn forward(&mut self, tape: &mut Tape, z: Var, mode: Mode) -> Result<Var> {
        let mut y = z;
        for (lin, bn) in &mut self.hidden {
            y = lin.forward(tape, y)?;
            y = bn.forward(tape, y, mode)?;
            y = ops::leaky_relu(tape, y, self.slope);
        }
        self.output.forward(tape, y)
    }
}

impl Module for ClassicalDecoder {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor)) {
        for (i, (lin, bn)) in self.hidden.iter().enumerate() {
            lin.visit(&join(prefix, &format!("fc{i}")), f);
            bn.visit(&join(prefix, &format!("bn{i}")), f);
        }
        self.output.visit(&join(prefix, "out"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        for (i, (lin, bn)) in self.hidden.iter_mut().enumerate() {
            lin.visit_mut(&join(prefix, &format!("fc{i}")), f);
            bn.visit_mut(&join(prefix, &format!("bn{i}")), f);
        }
        self.output.visit_mut(&join(prefix, "out"), f);
    }
}

#[derive(Debug, Clone)]
pub enum Decoder {
    Qinr(QinrDecoder),
    Classical(ClassicalDecoder),
}

impl Decoder {
    pub fn new<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Self {
        match cfg.decoder {
            DecoderKind::Qinr => Decoder::Qinr(QinrDecoder::new(cfg, rng)),
            DecoderKind::ClassicalLinear => Decoder::Classical(ClassicalDecoder::new(cfg, rng)),
        }
    }

    /// Logits `[batch, 784]` for latents `[batch, d_z]`.
    pub fn forward(&mut self, tape: &mut Tape, z: Var, mode: Mode) -> Result<Var> {
        match self {
            Decoder::Qinr(d) => d.forward(tape, z, mode),
            Decoder::Classical(d) => d.forward(tape, z, mode),
        }
    }
}

impl Module for Decoder {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor)) {
        match self {
            Decoder::Qinr(d) => d.visit(prefix, f),
            Decoder::Classical(d) => d.visit(prefix, f),
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        match self {
            Decoder::Qinr(d) => d.visit_mut(prefix, f),
            Decoder::Classical(d) => d.visit_mut(prefix, f),
        }
    }
}

/// A reparameterized latent draw with the noise kept for replay.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSample {
    pub z: Vec<f64>,
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
    pub eps: Vec<f64>,
}

/// Standard normal noise of length `n`.
pub fn gaussian_noise<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// `z = μ + e^{logvar/2} ⊙ ε` with ε drawn from `rng`.
pub fn reparameterize<R: Rng + ?Sized>(mu: &[f64], logvar: &[f64], rng: &mut R) -> Result<LatentSample> {
    if mu.len() != logvar.len() {
        return Err(Error::Shape(format!("mu has {} entries, logvar {}", mu.len(), logvar.len())));
    }
    let eps = gaussian_noise(rng, mu.len());
    let z = mu
        .iter()
        .zip(logvar)
        .zip(&eps)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect();
    Ok(LatentSample { z, mu: mu.to_vec(), logvar: logvar.to_vec(), eps })
}

/// Tape version of the reparameterization with fixed noise.
pub fn reparameterize_var(tape: &mut Tape, mu: Var, logvar: Var, eps: &[f64]) -> Result<Var> {
    let shape = tape.shape(mu).to_vec();
    let e = tape.input(shape, eps.to_vec(), false)?;
    let half = ops::scale(tape, logvar, 0.5);
    let std = ops::exp(tape, half);
    let noise = ops::mul(tape, std, e)?;
    ops::add(tape, mu, noise)
}

/// Nodes produced by one forward pass through a model.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    pub logits: Var,
    pub z: Var,
    pub mu: Option<Var>,
    pub logvar: Option<Var>,
}

/// Which optimizer group a tensor belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamGroup {
    Classical,
    Quantum,
}

pub fn param_group(name: &str) -> ParamGroup {
    if name.starts_with(QUANTUM_PREFIX) {
        ParamGroup::Quantum
    } else {
        ParamGroup::Classical
    }
}

/// Trainable-parameter counts per named submodule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Census {
    /// `(submodule, group, count)`, in model order.
    pub entries: Vec<(String, ParamGroup, usize)>,
    pub classical: usize,
    pub quantum: usize,
    pub encoder: usize,
    pub decoder: usize,
}

impl Census {
    pub fn total(&self) -> usize {
        self.classical + self.quantum
    }
}

/// Encoder plus decoder.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub encoder: Encoder,
    pub decoder: Decoder,
}

impl Model {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let encoder = Encoder::new(&config, rng);
        let decoder = Decoder::new(&config, rng);
        Ok(Self { config, encoder, decoder })
    }

    pub fn is_variational(&self) -> bool {
        self.config.variational
    }

    /// Forward pass on normalized pixels `[batch, 784]`. Variational models
    /// need `eps` (one value per latent entry) unless `use_mean` is set, in
    /// which case the posterior mean is decoded.
    pub fn forward(
        &mut self,
        tape: &mut Tape,
        pixels: &[f64],
        mode: Mode,
        eps: Option<&[f64]>,
    ) -> Result<Forward> {
        if pixels.is_empty() || !pixels.len().is_multiple_of(IMAGE_PIXELS) {
            return Err(Error::Shape(format!("{} pixels is not a whole number of images", pixels.len())));
        }
        let batch = pixels.len() / IMAGE_PIXELS;
        let x = tape.input(vec![batch, 1, IMAGE_SIDE, IMAGE_SIDE], pixels.to_vec(), false)?;
        let (z, mu, logvar) = match self.encoder.forward(tape, x, mode)? {
            Latent::Code(z) => (z, None, None),
            Latent::Gaussian { mu, logvar } => {
                let z = match eps {
                    Some(e) => reparameterize_var(tape, mu, logvar, e)?,
                    None => mu,
                };
                (z, Some(mu), Some(logvar))
            }
        };
        let logits = self.decoder.forward(tape, z, mode)?;
        Ok(Forward { logits, z, mu, logvar })
    }

    /// Eval-mode reconstruction in [0, 1]. Variational models decode the
    /// posterior mean so the result depends on the pixels alone.
    pub fn reconstruct(&mut self, pixels: &[f64], chunk: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(pixels.len());
        for part in pixels.chunks(chunk.max(1) * IMAGE_PIXELS) {
            let mut tape = Tape::new();
            let f = self.forward(&mut tape, part, Mode::Eval, None)?;
            out.extend(tape.value(f.logits).iter().map(|&v| crate::neural::sigmoid_scalar(v)));
        }
        Ok(out)
    }

    /// Eval-mode logits for explicit latents `[n, d_z]`.
    pub fn decode(&mut self, z: &[f64]) -> Result<Vec<f64>> {
        let d = self.config.latent_dim;
        if !z.len().is_multiple_of(d) {
            return Err(Error::Shape(format!("{} latent values for d_z = {d}", z.len())));
        }
        if z.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let zv = tape.input(vec![z.len() / d, d], z.to_vec(), false)?;
        let logits = self.decoder.forward(&mut tape, zv, Mode::Eval)?;
        Ok(tape.value(logits).to_vec())
    }

    /// Samples `n` images from the prior, returned as `[n, 784]` in (0, 1).
    pub fn generate<R: Rng + ?Sized>(&mut self, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        if !self.is_variational() {
            return Err(Error::Contract(
                "generation needs a variational model; use reconstruction for autoencoders".into(),
            ));
        }
        let z = gaussian_noise(rng, n * self.config.latent_dim);
        Ok(self.decode(&z)?.iter().map(|&v| crate::neural::sigmoid_scalar(v)).collect())
    }

    pub fn census(&self) -> Census {
        let mut entries: Vec<(String, ParamGroup, usize)> = Vec::new();
        let (mut classical, mut quantum, mut encoder, mut decoder) = (0, 0, 0, 0);
        self.visit("", &mut |name, t| {
            if !t.requires_grad() {
                return;
            }
            let group = param_group(&name);
            let module = name.rsplit_once('.').map_or(name.as_str(), |(m, _)| m).to_string();
            match group {
                ParamGroup::Classical => classical += t.len(),
                ParamGroup::Quantum => quantum += t.len(),
            }
            if name.starts_with("encoder.") {
                encoder += t.len();
            } else {
                decoder += t.len();
            }
            match entries.last_mut() {
                Some((m, g, n)) if *m == module && *g == group => *n += t.len(),
                _ => entries.push((module, group, t.len())),
            }
        });
        Census { entries, classical, quantum, encoder, decoder }
    }
}

impl Module for Model {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor)) {
        self.encoder.visit(&join(prefix, "encoder"), f);
        self.decoder.visit(&join(prefix, "decoder"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        self.encoder.visit_mut(&join(prefix, "encoder"), f);
        self.decoder.visit_mut(&join(prefix, "decoder"), f);
    }
}
