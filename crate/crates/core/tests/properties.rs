//! Randomized invariants across modules, each against a direct
//! re-implementation or a closed-form bound.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qinr::data::{batch_indices, normalize_byte, Sample, IMAGE_PIXELS};
use qinr::losses::{bce_element, kl_divergence, schedule_weights, LossSchedule};
use qinr::metrics::{cosine_similarity, frechet_distance, psnr, ssim, GaussianStats};
use qinr::models::{Model, ModelConfig};
use qinr::neural::{sigmoid_scalar, BatchNorm, Mode, Tape};
use qinr::qsim::{circuit_features, CircuitSpec, QuantumParams, ReadoutMode, StateVector};
use qinr::training::{clip_global_norm, train_vae, Seeds, TrainSettings};

#[derive(Debug, Clone)]
enum GateOp {
    Rot(usize, f64, f64, f64),
    Rz(usize, f64),
    Cz(usize, usize),
}

fn gate(n: usize) -> impl Strategy<Value = GateOp> {
    let angle = -2.0 * PI..2.0 * PI;
    prop_oneof![
        (0..n, angle.clone(), angle.clone(), angle.clone()).prop_map(|(q, a, b, c)| GateOp::Rot(q, a, b, c)),
        (0..n, angle).prop_map(|(q, p)| GateOp::Rz(q, p)),
        (0..n, 1..n).prop_map(move |(i, d)| GateOp::Cz(i, (i + d) % n)),
    ]
}

fn apply(s: &mut StateVector, g: &GateOp, inverse: bool) {
    let sign = if inverse { -1.0 } else { 1.0 };
    match *g {
        // Rot(α, β, γ)⁻¹ = Rot(−γ, −β, −α).
        GateOp::Rot(q, a, b, c) if inverse => s.apply_rot(q, -c, -b, -a),
        GateOp::Rot(q, a, b, c) => s.apply_rot(q, a, b, c),
        GateOp::Rz(q, p) => s.apply_rz(q, sign * p),
        GateOp::Cz(i, j) => s.apply_cz(i, j),
    }
    .expect("valid gate");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gates_conserve_norm_and_invert(gates in prop::collection::vec(gate(4), 1..40)) {
        let start = StateVector::basis(4, 5);
        let mut s = start.clone();
        for g in &gates {
            apply(&mut s, g, false);
            prop_assert!((s.norm() - 1.0).abs() < 1e-10);
        }
        for g in gates.iter().rev() {
            apply(&mut s, g, true);
        }
        for (a, b) in s.amplitudes().iter().zip(start.amplitudes()) {
            prop_assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn features_are_bounded(seed in any::<u64>(), multibasis in any::<bool>(), scale in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let readout = if multibasis { ReadoutMode::Multibasis } else { ReadoutMode::ZOnly };
        let spec = CircuitSpec::new(5, 2, 2).with_readout(readout).with_global_scale(true);
        let mut p = QuantumParams::init(&spec, &mut rng);
        p.rho = Some(scale);
        let h: Vec<f64> = (0..5).map(|_| rng.gen_range(-10.0..10.0)).collect();
        for f in circuit_features(&spec, &p, &h).unwrap() {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&f));
        }
    }

    #[test]
    fn bce_is_nonnegative_and_finite(logit in -1e4f64..1e4, target in 0.0f64..=1.0) {
        let v = bce_element(logit, target);
        prop_assert!(v.is_finite() && v >= -1e-12);
    }

    #[test]
    fn kl_respects_free_bits(mu in prop::collection::vec(-3.0f64..3.0, 8), lv in prop::collection::vec(-3.0f64..3.0, 8), fb in 0.0f64..1.0) {
        let plain = kl_divergence(&mu, &lv, 1, 0.0).unwrap();
        prop_assert!(plain >= -1e-12);
        prop_assert!(kl_divergence(&mu, &lv, 1, fb).unwrap() >= 8.0 * fb - 1e-12);
    }

    #[test]
    fn schedules_are_monotone(n in 1u32..30, c_max in 0.0f64..50.0) {
        for s in [LossSchedule::beta_warmup(n), LossSchedule::capacity(c_max, n, 1.0, 0.0)] {
            let mut prev = (0.0, 0.0);
            for e in 1..=2 * n {
                let w = schedule_weights(e, &s);
                prop_assert!(w.0 >= prev.0 && w.1 >= prev.1);
                prev = w;
            }
            let at = schedule_weights(n, &s);
            prop_assert_eq!(at, schedule_weights(2 * n, &s));
        }
    }

    #[test]
    fn clipping_bounds_the_norm(g in prop::collection::vec(-100.0f64..100.0, 1..50), g_max in 0.01f64..10.0) {
        let mut v = g.clone();
        clip_global_norm(&mut [&mut v], g_max);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(n <= g_max + 1e-9);
    }

    #[test]
    fn psnr_decreases_with_error(a in 0.001f64..0.4, b in 0.001f64..0.4) {
        prop_assume!((a - b).abs() > 1e-6);
        let x = vec![0.5; 64];
        let y = |d: f64| x.iter().map(|v| v + d).collect::<Vec<_>>();
        let (pa, pb) = (psnr(&x, &y(a)).unwrap(), psnr(&x, &y(b)).unwrap());
        prop_assert_eq!(pa > pb, a < b);
    }

    #[test]
    fn epochs_visit_every_sample_once(n in 2usize..200, bs in 2usize..40, seed in any::<u64>()) {
        let groups = batch_indices(n, bs, Some(seed)).unwrap();
        let mut seen: Vec<usize> = groups.iter().flatten().copied().collect();
        prop_assert!(groups.iter().all(|g| g.len() <= bs && g.len() >= 2 || n == 1));
        seen.sort_unstable();
        let dropped = n - seen.len();
        prop_assert!(dropped <= 1);
        seen.dedup();
        prop_assert_eq!(seen.len(), n - dropped);
    }
}

#[test]
fn normalization_round_trips() {
    for b in 0..=255u8 {
        let x = normalize_byte(b);
        assert!((-1.0..=1.0).contains(&x));
        assert_eq!(((x + 1.0) / 2.0 * 255.0).round() as u8, b);
    }
}

/// SSIM from its definition: a 2-D Gaussian window built directly and
/// centred second moments.
fn naive_ssim(a: &[f64], b: &[f64], w: usize) -> f64 {
    let h = a.len() / w;
    let mut win = [[0.0; 11]; 11];
    let mut z = 0.0;
    for (i, row) in win.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp();
            z += *v;
        }
    }
    let mut total = 0.0;
    let mut count = 0;
    for y in 0..=h - 11 {
        for x in 0..=w - 11 {
            let at = |img: &[f64], i: usize, j: usize| img[(y + i) * w + x + j];
            let mean = |img: &[f64]| (0..11).flat_map(|i| (0..11).map(move |j| (i, j))).map(|(i, j)| win[i][j] / z * at(img, i, j)).sum::<f64>();
            let (ma, mb) = (mean(a), mean(b));
            let (mut va, mut vb, mut cab) = (0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let g = win[i][j] / z;
                    let (da, db) = (at(a, i, j) - ma, at(b, i, j) - mb);
                    va += g * da * da;
                    vb += g * db * db;
                    cab += g * da * db;
                }
            }
            let (c1, c2) = (1e-4, 9e-4);
            total += (2.0 * ma * mb + c1) * (2.0 * cab + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

/// `Tr((Σ₁Σ₂)^{1/2})` by Denman–Beavers iteration on the non-symmetric
/// product.
fn naive_sqrt_trace(p: &DMatrix<f64>) -> f64 {
    let n = p.nrows();
    let (mut y, mut z) = (p.clone(), DMatrix::identity(n, n));
    for _ in 0..100 {
        let yi = y.clone().try_inverse().expect("invertible");
        let zi = z.clone().try_inverse().expect("invertible");
        y = (&y + zi) * 0.5;
        z = (&z + yi) * 0.5;
    }
    y.trace()
}

fn naive_stats(x: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>) {
    let (n, d) = (x.len(), x[0].len());
    let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let cov = DMatrix::from_fn(d, d, |i, j| x.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / (n - 1) as f64);
    (mean, cov)
}

#[test]
fn metrics_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..20 {
        let (w, h) = (rng.gen_range(11..20), rng.gen_range(11..20));
        let a: Vec<f64> = (0..w * h).map(|_| rng.gen::<f64>()).collect();
        let b: Vec<f64> = a.iter().map(|v| (v + rng.gen_range(-0.3..0.3)).clamp(0.0, 1.0)).collect();
        assert!((ssim(&a, &b, w).unwrap() - naive_ssim(&a, &b, w)).abs() < 1e-8);
        assert!((ssim(&a, &b, w).unwrap() - ssim(&b, &a, w).unwrap()).abs() < 1e-12);
        assert!(ssim(&a, &b, w).unwrap() < 1.0);

        let mse = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
        assert!((psnr(&a, &b).unwrap() - 10.0 * (1.0 / mse).log10()).abs() < 1e-8);
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((cosine_similarity(&a, &b).unwrap().value - dot / (norm(&a) * norm(&b))).abs() < 1e-8);

        let d = rng.gen_range(2..6);
        let set = |rng: &mut ChaCha8Rng, shift: f64| -> Vec<Vec<f64>> {
            (0..40).map(|_| (0..d).map(|j| shift * j as f64 + rng.gen::<f64>() * (1.0 + j as f64)).collect()).collect()
        };
        let (x, y) = (set(&mut rng, 0.0), set(&mut rng, 0.3));
        let ((m1, c1), (m2, c2)) = (naive_stats(&x), naive_stats(&y));
        let oracle = m1.iter().zip(&m2).map(|(p, q)| (p - q).powi(2)).sum::<f64>() + c1.trace() + c2.trace()
            - 2.0 * naive_sqrt_trace(&(&c1 * &c2));
        let got = frechet_distance(&GaussianStats::fit(&x).unwrap(), &GaussianStats::fit(&y).unwrap());
        assert!((got - oracle).abs() < 1e-8 * oracle.abs().max(1.0), "{got} vs {oracle}");
    }
}

#[test]
fn batch_norm_eval_converges_to_train() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let shape = vec![32, 3, 8, 8];
    let x: Vec<f64> = (0..shape.iter().product::<usize>()).map(|i| rng.gen_range(-1.0..1.0) * (1.0 + (i % 3) as f64) + 0.5).collect();
    let mut bn = BatchNorm::new(3);
    let run = |bn: &mut BatchNorm, mode| {
        let mut t = Tape::new();
        let v = t.input(shape.clone(), x.clone(), false).unwrap();
        let y = bn.forward(&mut t, v, mode).unwrap();
        t.value(y).to_vec()
    };
    let mut train = Vec::new();
    for _ in 0..300 {
        train = run(&mut bn, Mode::Train);
    }
    let eval = run(&mut bn, Mode::Eval);
    let worst = train.iter().zip(&eval).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-3, "{worst}");
}

#[test]
fn trained_decoder_is_continuous_in_latent() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let samples: Vec<Sample> = (0..32)
        .map(|id| Sample { pixels: (0..IMAGE_PIXELS).map(|_| rng.gen_range(-1.0..1.0)).collect(), label: 1, id })
        .collect();
    let settings = TrainSettings { epochs: 2, batch_size: 16, ..TrainSettings::standard_vae() };
    let (mut m, _) = train_vae(ModelConfig::standard_vae(), settings, LossSchedule::beta_warmup(5), &samples, Seeds::from_master(3)).unwrap();
    let decode = |m: &mut Model, z: &[f64]| -> Vec<f64> { m.decode(z).unwrap().iter().map(|&v| sigmoid_scalar(v)).collect() };
    for _ in 0..5 {
        let z: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let dir: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let base = decode(&mut m, &z);
        let moved = |m: &mut Model, delta: f64| -> f64 {
            let zz: Vec<f64> = z.iter().zip(&dir).map(|(a, d)| a + delta * d / norm).collect();
            decode(m, &zz).iter().zip(&base).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        };
        let lipschitz = moved(&mut m, 1e-2) / 1e-2;
        let small = moved(&mut m, 1e-4);
        assert!(small <= 2.0 * lipschitz * 1e-4 + 1e-12, "{small} vs bound {}", 2.0 * lipschitz * 1e-4);
    }
}

#[test]
fn eval_reconstruction_is_a_function_of_pixels() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut m = Model::new(ModelConfig::standard_vae(), &mut rng).unwrap();
    let x: Vec<f64> = (0..3 * IMAGE_PIXELS).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let a = m.reconstruct(&x, 3).unwrap();
    let b = m.reconstruct(&x, 1).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
}
