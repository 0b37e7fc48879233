//! Differentiable primitives recorded on a [`Tape`].

use super::gemm::{gemm, Strides};
use super::tape::{Tape, Values, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub in_ch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_ch: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    fn patch(&self) -> usize {
        self.in_ch * self.kernel * self.kernel
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }
}

pub(crate) enum Op {
    Linear { x: Var, w: Var, b: Var },
    Conv2d { x: Var, w: Var, b: Var, geom: ConvGeom, cols: Vec<f64> },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64>, train: bool },
    LeakyRelu { x: Var, slope: f64 },
    Sigmoid { x: Var },
    Reshape { x: Var },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, c: f64 },
    AddScalar { x: Var },
    Abs { x: Var },
    Exp { x: Var },
    Sum { x: Var },
}

impl Op {
    pub fn inputs(&self) -> Vec<Var> {
        match *self {
            Op::Linear { x, w, b } | Op::Conv2d { x, w, b, .. } => vec![x, w, b],
            Op::BatchNorm { x, gamma, beta, .. } => vec![x, gamma, beta],
            Op::Add { a, b } | Op::Mul { a, b } => vec![a, b],
            Op::LeakyRelu { x, .. }
            | Op::Sigmoid { x }
            | Op::Reshape { x }
            | Op::Scale { x, .. }
            | Op::AddScalar { x }
            | Op::Abs { x }
            | Op::Exp { x }
            | Op::Sum { x } => vec![x],
        }
    }

    pub fn backward(
        &self,
        vals: &Values<'_>,
        out: Var,
        g: &[f64],
        needs: &[bool],
    ) -> Result<Vec<(Var, Vec<f64>)>> {
        let needs = |v: Var| needs[v.0];
        let mut res = Vec::new();
        match self {
            Op::Linear { x, w, b } => {
                let (batch, fan_in) = (vals.shape(*x)[0], vals.shape(*x)[1]);
                let fan_out = vals.shape(*w)[0];
                if needs(*x) {
                    let mut dx = vec![0.0; batch * fan_in];
                    gemm(
                        batch,
                        fan_out,
                        fan_in,
                        g,
                        Strides::row_major(fan_out),
                        vals.get(*w),
                        Strides::row_major(fan_in),
                        0.0,
                        &mut dx,
                    );
                    res.push((*x, dx));
                }
                if needs(*w) {
                    let mut dw = vec![0.0; fan_out * fan_in];
                    gemm(
                        fan_out,
                        batch,
                        fan_in,
                        g,
                        Strides::transposed(fan_out),
                        vals.get(*x),
                        Strides::row_major(fan_in),
                        0.0,
                        &mut dw,
                    );
                    res.push((*w, dw));
                }
                if needs(*b) {
                    let mut db = vec![0.0; fan_out];
                    for row in g.chunks_exact(fan_out) {
                        db.iter_mut().zip(row).for_each(|(a, v)| *a += v);
                    }
                    res.push((*b, db));
                }
            }
            Op::Conv2d { x, w, b, geom, cols } => {
                let (patch, pos) = (geom.patch(), geom.positions());
                let out_per = geom.out_ch * pos;
                if needs(*w) {
                    let mut dw = vec![0.0; geom.out_ch * patch];
                    for n in 0..geom.batch {
                        gemm(
                            geom.out_ch,
                            pos,
                            patch,
                            &g[n * out_per..(n + 1) * out_per],
                            Strides::row_major(pos),
                            &cols[n * patch * pos..(n + 1) * patch * pos],
                            Strides::transposed(pos),
                            1.0,
                            &mut dw,
                        );
                    }
                    res.push((*w, dw));
                }
                if needs(*b) {
                    let mut db = vec![0.0; geom.out_ch];
                    for n in 0..geom.batch {
                        for (o, acc) in db.iter_mut().enumerate() {
                            let start = n * out_per + o * pos;
                            *acc += g[start..start + pos].iter().sum::<f64>();
                        }
                    }
                    res.push((*b, db));
                }
                if needs(*x) {
                    let in_per = geom.in_ch * geom.in_h * geom.in_w;
                    let mut dx = vec![0.0; geom.batch * in_per];
                    let mut dcols = vec![0.0; patch * pos];
                    for n in 0..geom.batch {
                        gemm(
                            patch,
                            geom.out_ch,
                            pos,
                            vals.get(*w),
                            Strides::transposed(patch),
                            &g[n * out_per..(n + 1) * out_per],
                            Strides::row_major(pos),
                            0.0,
                            &mut dcols,
                        );
                        col2im(&dcols, geom, &mut dx[n * in_per..(n + 1) * in_per]);
                    }
                    res.push((*x, dx));
                }
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, train } => {
                let shape = vals.shape(*x);
                let (batch, ch) = (shape[0], shape[1]);
                let spatial: usize = shape[2..].iter().product();
                let gm = vals.get(*gamma);
                let count = (batch * spatial) as f64;
                let mut sum_g = vec![0.0; ch];
                let mut sum_gx = vec![0.0; ch];
                for n in 0..batch {
                    for c in 0..ch {
                        let base = (n * ch + c) * spatial;
                        for s in 0..spatial {
                            sum_g[c] += g[base + s];
                            sum_gx[c] += g[base + s] * xhat[base + s];
                        }
                    }
                }
                if needs(*x) {
                    let mut dx = vec![0.0; g.len()];
                    for n in 0..batch {
                        for c in 0..ch {
                            let base = (n * ch + c) * spatial;
                            let k = gm[c] * inv_std[c];
                            for s in 0..spatial {
                                let i = base + s;
                                dx[i] = if *train {
                                    k * (g[i] - sum_g[c] / count - xhat[i] * sum_gx[c] / count)
                                } else {
                                    k * g[i]
                                };
                            }
                        }
                    }
                    res.push((*x, dx));
                }
                if needs(*gamma) {
                    res.push((*gamma, sum_gx));
                }
                if needs(*beta) {
                    res.push((*beta, sum_g));
                }
            }
            Op::LeakyRelu { x, slope } => {
                let xv = vals.get(*x);
                let d = xv
                    .iter()
                    .zip(g)
                    .map(|(&v, &gi)| if v > 0.0 { gi } else { slope * gi })
                    .collect();
                res.push((*x, d));
            }
            Op::Sigmoid { x } => {
                let y = vals.get(out);
                res.push((*x, y.iter().zip(g).map(|(s, gi)| gi * s * (1.0 - s)).collect()));
            }
            Op::Reshape { x } => res.push((*x, g.to_vec())),
            Op::Add { a, b } => {
                res.push((*a, g.to_vec()));
                res.push((*b, g.to_vec()));
            }
            Op::Mul { a, b } => {
                let (av, bv) = (vals.get(*a), vals.get(*b));
                res.push((*a, g.iter().zip(bv).map(|(gi, v)| gi * v).collect()));
                res.push((*b, g.iter().zip(av).map(|(gi, v)| gi * v).collect()));
            }
            Op::Scale { x, c } => res.push((*x, g.iter().map(|gi| gi * c).collect())),
            Op::AddScalar { x } => res.push((*x, g.to_vec())),
            Op::Abs { x } => {
                let xv = vals.get(*x);
                let d = xv
                    .iter()
                    .zip(g)
                    .map(|(&v, &gi)| if v == 0.0 { 0.0 } else { v.signum() * gi })
                    .collect();
                res.push((*x, d));
            }
            Op::Exp { x } => {
                let y = vals.get(out);
                res.push((*x, y.iter().zip(g).map(|(v, gi)| v * gi).collect()));
            }
            Op::Sum { x } => res.push((*x, vec![g[0]; vals.get(*x).len()])),
        }
        Ok(res)
    }
}

fn im2col(x: &[f64], geom: &ConvGeom, cols: &mut [f64]) {
    let (k, pos) = (geom.kernel, geom.positions());
    for c in 0..geom.in_ch {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * pos..(row + 1) * pos];
                for oy in 0..geom.out_h {
                    let iy = (oy * geom.stride + ky) as isize - geom.pad as isize;
                    for ox in 0..geom.out_w {
                        let ix = (ox * geom.stride + kx) as isize - geom.pad as isize;
                        dst[oy * geom.out_w + ox] = if iy >= 0
                            && ix >= 0
                            && (iy as usize) < geom.in_h
                            && (ix as usize) < geom.in_w
                        {
                            x[(c * geom.in_h + iy as usize) * geom.in_w + ix as usize]
                        } else {
                            0.0
                        };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], geom: &ConvGeom, dx: &mut [f64]) {
    let (k, pos) = (geom.kernel, geom.positions());
    for c in 0..geom.in_ch {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * pos..(row + 1) * pos];
                for oy in 0..geom.out_h {
                    let iy = (oy * geom.stride + ky) as isize - geom.pad as isize;
                    if iy < 0 || iy as usize >= geom.in_h {
                        continue;
                    }
                    for ox in 0..geom.out_w {
                        let ix = (ox * geom.stride + kx) as isize - geom.pad as isize;
                        if ix < 0 || ix as usize >= geom.in_w {
                            continue;
                        }
                        dx[(c * geom.in_h + iy as usize) * geom.in_w + ix as usize] +=
                            src[oy * geom.out_w + ox];
                    }
                }
            }
        }
    }
}

/// `y = x·Wᵀ + b` for `x: [batch, in]`, `W: [out, in]`, `b: [out]`.
pub fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let xs = tape.shape(x);
    let ws = tape.shape(w);
    if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] || tape.shape(b) != [ws[0]] {
        return Err(Error::Shape(format!(
            "linear: input {:?}, weight {:?}, bias {:?}",
            xs,
            ws,
            tape.shape(b)
        )));
    }
    let (batch, fan_in, fan_out) = (xs[0], xs[1], ws[0]);
    let mut y = Vec::with_capacity(batch * fan_out);
    for _ in 0..batch {
        y.extend_from_slice(tape.value(b));
    }
    gemm(
        batch,
        fan_in,
        fan_out,
        tape.value(x),
        Strides::row_major(fan_in),
        tape.value(w),
        Strides::transposed(fan_in),
        1.0,
        &mut y,
    );
    Ok(tape.push(vec![batch, fan_out], y, Op::Linear { x, w, b }))
}

/// Cross-correlation of `x: [batch, in_ch, H, W]` with square kernels
/// `w: [out_ch, in_ch, k, k]`.
pub fn conv2d(tape: &mut Tape, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
    let xs = tape.shape(x).to_vec();
    let ws = tape.shape(w).to_vec();
    if xs.len() != 4 || ws.len() != 4 || ws[2] != ws[3] || xs[1] != ws[1] {
        return Err(Error::Shape(format!("conv2d: input {xs:?}, kernels {ws:?}")));
    }
    if tape.shape(b) != [ws[0]] {
        return Err(Error::Shape(format!("conv2d: bias {:?} for {} channels", tape.shape(b), ws[0])));
    }
    let kernel = ws[2];
    if xs[2] + 2 * pad < kernel || xs[3] + 2 * pad < kernel || stride == 0 {
        return Err(Error::Shape(format!("conv2d: input {xs:?} too small for kernel {kernel}")));
    }
    let geom = ConvGeom {
        batch: xs[0],
        in_ch: xs[1],
        in_h: xs[2],
        in_w: xs[3],
        out_ch: ws[0],
        out_h: (xs[2] + 2 * pad - kernel) / stride + 1,
        out_w: (xs[3] + 2 * pad - kernel) / stride + 1,
        kernel,
        stride,
        pad,
    };
    let (patch, pos) = (geom.patch(), geom.positions());
    let in_per = geom.in_ch * geom.in_h * geom.in_w;
    let out_per = geom.out_ch * pos;
    let mut cols = vec![0.0; geom.batch * patch * pos];
    let mut y = vec![0.0; geom.batch * out_per];
    {
        let xv = tape.value(x);
        let (wv, bv) = (tape.value(w), tape.value(b));
        for n in 0..geom.batch {
            let col = &mut cols[n * patch * pos..(n + 1) * patch * pos];
            im2col(&xv[n * in_per..(n + 1) * in_per], &geom, col);
            let out = &mut y[n * out_per..(n + 1) * out_per];
            for (o, bias) in bv.iter().enumerate() {
                out[o * pos..(o + 1) * pos].iter_mut().for_each(|v| *v = *bias);
            }
            gemm(
                geom.out_ch,
                patch,
                pos,
                wv,
                Strides::row_major(patch),
                col,
                Strides::row_major(pos),
                1.0,
                out,
            );
        }
    }
    Ok(tape.push(
        vec![geom.batch, geom.out_ch, geom.out_h, geom.out_w],
        y,
        Op::Conv2d { x, w, b, geom, cols },
    ))
}

/// Per-channel statistics returned from a train-mode batch norm.
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased (population) variance.
    pub var: Vec<f64>,
    pub count: usize,
}

/// Batch normalization over every axis except axis 1 (channels/features).
///
/// With `running = Some((mean, var))` the given statistics are used
/// (eval mode); otherwise batch statistics are computed and returned.
pub fn batch_norm(
    tape: &mut Tape,
    x: Var,
    gamma: Var,
    beta: Var,
    eps: f64,
    running: Option<(&[f64], &[f64])>,
) -> Result<(Var, Option<BatchStats>)> {
    let shape = tape.shape(x).to_vec();
    if shape.len() < 2 {
        return Err(Error::Shape(format!("batch_norm: input {shape:?} has no channel axis")));
    }
    let (batch, ch) = (shape[0], shape[1]);
    if tape.shape(gamma) != [ch] || tape.shape(beta) != [ch] {
        return Err(Error::Shape(format!("batch_norm: affine params do not match {ch} channels")));
    }
    let spatial: usize = shape[2..].iter().product();
    let train = running.is_none();
    if train && batch * spatial < 2 {
        return Err(Error::DegenerateBatch(batch));
    }
    let xv = tape.value(x);
    let count = batch * spatial;
    let (mean, var) = match running {
        Some((m, v)) => (m.to_vec(), v.to_vec()),
        None => {
            let mut mean = vec![0.0; ch];
            let mut var = vec![0.0; ch];
            for n in 0..batch {
                for (c, m) in mean.iter_mut().enumerate() {
                    let base = (n * ch + c) * spatial;
                    *m += xv[base..base + spatial].iter().sum::<f64>();
                }
            }
            mean.iter_mut().for_each(|m| *m /= count as f64);
            for n in 0..batch {
                for c in 0..ch {
                    let base = (n * ch + c) * spatial;
                    var[c] += xv[base..base + spatial]
                        .iter()
                        .map(|v| (v - mean[c]).powi(2))
                        .sum::<f64>();
                }
            }
            var.iter_mut().for_each(|v| *v /= count as f64);
            (mean, var)
        }
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let (gv, bv) = (tape.value(gamma), tape.value(beta));
    let mut xhat = vec![0.0; xv.len()];
    let mut y = vec![0.0; xv.len()];
    for n in 0..batch {
        for c in 0..ch {
            let base = (n * ch + c) * spatial;
            for s in 0..spatial {
                let i = base + s;
                xhat[i] = (xv[i] - mean[c]) * inv_std[c];
                y[i] = gv[c] * xhat[i] + bv[c];
            }
        }
    }
    let stats = train.then_some(BatchStats { mean, var, count });
    let out = tape.push(shape, y, Op::BatchNorm { x, gamma, beta, xhat, inv_std, train });
    Ok((out, stats))
}

pub fn leaky_relu(tape: &mut Tape, x: Var, slope: f64) -> Var {
    let y = tape
        .value(x)
        .iter()
        .map(|&v| if v > 0.0 { v } else { slope * v })
        .collect();
    tape.push(tape.shape(x).to_vec(), y, Op::LeakyRelu { x, slope })
}

/// Numerically stable logistic function.
pub fn sigmoid_scalar(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(tape: &mut Tape, x: Var) -> Var {
    let y = tape.value(x).iter().map(|&v| sigmoid_scalar(v)).collect();
    tape.push(tape.shape(x).to_vec(), y, Op::Sigmoid { x })
}

pub fn reshape(tape: &mut Tape, x: Var, shape: Vec<usize>) -> Result<Var> {
    if shape.iter().product::<usize>() != tape.value(x).len() {
        return Err(Error::Shape(format!("cannot reshape {:?} to {shape:?}", tape.shape(x))));
    }
    let y = tape.value(x).to_vec();
    Ok(tape.push(shape, y, Op::Reshape { x }))
}

/// Collapses every axis after the first.
pub fn flatten(tape: &mut Tape, x: Var) -> Result<Var> {
    let shape = tape.shape(x);
    let batch = *shape.first().ok_or_else(|| Error::Shape("flatten of a 0-d tensor".into()))?;
    let rest = shape[1..].iter().product();
    reshape(tape, x, vec![batch, rest])
}

fn same_len(tape: &Tape, a: Var, b: Var, what: &str) -> Result<()> {
    if tape.value(a).len() != tape.value(b).len() {
        return Err(Error::Shape(format!(
            "{what}: {:?} vs {:?}",
            tape.shape(a),
            tape.shape(b)
        )));
    }
    Ok(())
}

pub fn add(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    same_len(tape, a, b, "add")?;
    let y = tape.value(a).iter().zip(tape.value(b)).map(|(x, y)| x + y).collect();
    Ok(tape.push(tape.shape(a).to_vec(), y, Op::Add { a, b }))
}

pub fn mul(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    same_len(tape, a, b, "mul")?;
    let y = tape.value(a).iter().zip(tape.value(b)).map(|(x, y)| x * y).collect();
    Ok(tape.push(tape.shape(a).to_vec(), y, Op::Mul { a, b }))
}

pub fn scale(tape: &mut Tape, x: Var, c: f64) -> Var {
    let y = tape.value(x).iter().map(|v| v * c).collect();
    tape.push(tape.shape(x).to_vec(), y, Op::Scale { x, c })
}

pub fn add_scalar(tape: &mut Tape, x: Var, c: f64) -> Var {
    let y = tape.value(x).iter().map(|v| v + c).collect();
    tape.push(tape.shape(x).to_vec(), y, Op::AddScalar { x })
}

/// `|x|` with subgradient 0 at 0.
pub fn abs(tape: &mut Tape, x: Var) -> Var {
    let y = tape.value(x).iter().map(|v| v.abs()).collect();
    tape.push(tape.shape(x).to_vec(), y, Op::Abs { x })
}

pub fn exp(tape: &mut Tape, x: Var) -> Var {
    let y = tape.value(x).iter().map(|v| v.exp()).collect();
    tape.push(tape.shape(x).to_vec(), y, Op::Exp { x })
}

pub fn sum(tape: &mut Tape, x: Var) -> Var {
    let s = tape.value(x).iter().sum();
    tape.push(vec![1], vec![s], Op::Sum { x })
}
