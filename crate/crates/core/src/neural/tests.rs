use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ops;
use super::*;

/// Compares tape gradients of a scalar function against central
/// differences for every input.
fn check_grads<F>(inputs: &[(Vec<usize>, Vec<f64>)], f: F, tol: f64)
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|(s, v)| tape.input(s.clone(), v.clone(), true).unwrap())
        .collect();
    let out = f(&mut tape, &vars);
    tape.backward(out).unwrap();
    let analytic: Vec<Vec<f64>> = vars.iter().map(|v| tape.grad(*v).unwrap().to_vec()).collect();

    let eval = |inputs: &[(Vec<usize>, Vec<f64>)]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs
            .iter()
            .map(|(s, v)| tape.input(s.clone(), v.clone(), false).unwrap())
            .collect();
        let out = f(&mut tape, &vars);
        tape.value(out)[0]
    };
    let h = 1e-6;
    for (k, (_, values)) in inputs.iter().enumerate() {
        for i in 0..values.len() {
            let mut plus = inputs.to_vec();
            plus[k].1[i] += h;
            let mut minus = inputs.to_vec();
            minus[k].1[i] -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let a = analytic[k][i];
            assert!(
                (a - numeric).abs() <= tol * (1.0 + numeric.abs()),
                "input {k}[{i}]: analytic {a}, numeric {numeric}"
            );
        }
    }
}

fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Weighted sum so that every output element gets a distinct upstream
/// gradient.
fn weighted_sum(tape: &mut Tape, y: Var, seed: u64) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = tape.value(y).len();
    let w = tape.input(tape.shape(y).to_vec(), random(&mut rng, n), false).unwrap();
    let p = ops::mul(tape, y, w).unwrap();
    ops::sum(tape, p)
}

#[test]
fn linear_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let inputs = vec![
        (vec![3, 4], random(&mut rng, 12)),
        (vec![5, 4], random(&mut rng, 20)),
        (vec![5], random(&mut rng, 5)),
    ];
    check_grads(
        &inputs,
        |t, v| {
            let y = ops::linear(t, v[0], v[1], v[2]).unwrap();
            weighted_sum(t, y, 9)
        },
        1e-7,
    );
}

#[test]
fn linear_matches_naive_product() {
    let mut tape = Tape::new();
    let x = tape.input(vec![2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.0, 1.0], false).unwrap();
    let w = tape.input(vec![2, 3], vec![1.0, 0.0, -1.0, 0.5, 0.5, 0.5], false).unwrap();
    let b = tape.input(vec![2], vec![0.1, -0.1], false).unwrap();
    let y = ops::linear(&mut tape, x, w, b).unwrap();
    assert_eq!(tape.shape(y), &[2, 2]);
    let expect = [1.0 - 3.0 + 0.1, 3.0 - 0.1, -1.0 - 1.0 + 0.1, -0.1];
    for (a, e) in tape.value(y).iter().zip(expect) {
        assert!((a - e).abs() < 1e-12);
    }
}

#[test]
fn conv_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let inputs = vec![
        (vec![2, 2, 5, 5], random(&mut rng, 100)),
        (vec![3, 2, 3, 3], random(&mut rng, 54)),
        (vec![3], random(&mut rng, 3)),
    ];
    check_grads(
        &inputs,
        |t, v| {
            let y = ops::conv2d(t, v[0], v[1], v[2], 2, 1).unwrap();
            weighted_sum(t, y, 4)
        },
        1e-7,
    );
}

#[test]
fn conv_matches_direct_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (c_in, c_out, h, w) = (2, 3, 6, 5);
    let xv = random(&mut rng, c_in * h * w);
    let wv = random(&mut rng, c_out * c_in * 9);
    let bv = random(&mut rng, c_out);
    let mut tape = Tape::new();
    let x = tape.input(vec![1, c_in, h, w], xv.clone(), false).unwrap();
    let wk = tape.input(vec![c_out, c_in, 3, 3], wv.clone(), false).unwrap();
    let b = tape.input(vec![c_out], bv.clone(), false).unwrap();
    let y = ops::conv2d(&mut tape, x, wk, b, 2, 1).unwrap();
    let (oh, ow) = (3, 3);
    assert_eq!(tape.shape(y), &[1, c_out, oh, ow]);
    for o in 0..c_out {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bv[o];
                for c in 0..c_in {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let iy = (oy * 2 + ky) as isize - 1;
                            let ix = (ox * 2 + kx) as isize - 1;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            acc += wv[((o * c_in + c) * 3 + ky) * 3 + kx]
                                * xv[(c * h + iy as usize) * w + ix as usize];
                        }
                    }
                }
                let got = tape.value(y)[(o * oh + oy) * ow + ox];
                assert!((got - acc).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn encoder_spatial_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut tape = Tape::new();
    let mut x = tape.input(vec![2, 1, 28, 28], vec![0.5; 2 * 784], false).unwrap();
    let mut sizes = Vec::new();
    for (cin, cout) in [(1, 32), (32, 64), (64, 128), (128, 256)] {
        let conv = Conv2d::new(cin, cout, 3, 2, 1, &mut rng);
        x = conv.forward(&mut tape, x).unwrap();
        sizes.push(tape.shape(x)[2]);
    }
    assert_eq!(sizes, [14, 7, 4, 2]);
    let flat = ops::flatten(&mut tape, x).unwrap();
    assert_eq!(tape.shape(flat), &[2, 1024]);
}

#[test]
fn batch_norm_gradients_train_and_eval() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inputs = vec![
        (vec![4, 3, 2, 2], random(&mut rng, 48)),
        (vec![3], random(&mut rng, 3)),
        (vec![3], random(&mut rng, 3)),
    ];
    check_grads(
        &inputs,
        |t, v| {
            let (y, _) = ops::batch_norm(t, v[0], v[1], v[2], 1e-5, None).unwrap();
            weighted_sum(t, y, 6)
        },
        1e-6,
    );
    let mean = [0.1, -0.2, 0.3];
    let var = [0.5, 1.5, 2.0];
    check_grads(
        &inputs,
        |t, v| {
            let (y, _) = ops::batch_norm(t, v[0], v[1], v[2], 1e-5, Some((&mean, &var))).unwrap();
            weighted_sum(t, y, 6)
        },
        1e-7,
    );
}

#[test]
fn batch_norm_normalizes_and_tracks_running_stats() {
    let mut bn = BatchNorm::new(2);
    let mut tape = Tape::new();
    // channel 0: 1,3,5,7 ; channel 1: constant 2
    let x = tape
        .input(vec![4, 2], vec![1.0, 2.0, 3.0, 2.0, 5.0, 2.0, 7.0, 2.0], false)
        .unwrap();
    let y = bn.forward(&mut tape, x, Mode::Train).unwrap();
    let y = tape.value(y);
    let ch0: Vec<f64> = y.iter().step_by(2).copied().collect();
    let mean: f64 = ch0.iter().sum::<f64>() / 4.0;
    let var: f64 = ch0.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
    assert!(mean.abs() < 1e-12);
    assert!((var - 5.0 / (5.0 + 1e-5)).abs() < 1e-9);
    assert!(y.iter().skip(1).step_by(2).all(|v| v.abs() < 1e-12));
    // biased var of channel 0 is 5, unbiased 20/3
    let rm = bn.running_mean.values();
    let rv = bn.running_var.values();
    assert!((rm[0] - 0.4).abs() < 1e-12 && (rm[1] - 0.2).abs() < 1e-12);
    assert!((rv[0] - (0.9 + 0.1 * 20.0 / 3.0)).abs() < 1e-12);
    assert!((rv[1] - 0.9).abs() < 1e-12);
}

#[test]
fn batch_norm_rejects_single_sample_in_train_mode() {
    let mut bn = BatchNorm::new(3);
    let mut tape = Tape::new();
    let x = tape.input(vec![1, 3], vec![1.0, 2.0, 3.0], false).unwrap();
    assert!(matches!(
        bn.forward(&mut tape, x, Mode::Train),
        Err(crate::Error::DegenerateBatch(1))
    ));
    assert!(bn.forward(&mut tape, x, Mode::Eval).is_ok());
}

#[test]
fn elementwise_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut a = random(&mut rng, 6);
    a[2] = 0.3; // keep away from the kinks of abs and leaky relu
    let inputs = vec![(vec![2, 3], a), (vec![2, 3], random(&mut rng, 6))];
    check_grads(
        &inputs,
        |t, v| {
            let l = ops::leaky_relu(t, v[0], 0.2);
            let s = ops::sigmoid(t, v[1]);
            let e = ops::exp(t, v[0]);
            let ab = ops::abs(t, v[1]);
            let m = ops::mul(t, l, s).unwrap();
            let m = ops::add(t, m, e).unwrap();
            let m = ops::add(t, m, ab).unwrap();
            let m = ops::scale(t, m, -1.5);
            let m = ops::add_scalar(t, m, 2.0);
            let r = ops::reshape(t, m, vec![3, 2]).unwrap();
            weighted_sum(t, r, 8)
        },
        1e-7,
    );
}

#[test]
fn shared_parameter_gets_summed_gradient() {
    let mut p = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap().into_parameter();
    let mut tape = Tape::new();
    let a = tape.param(&p);
    let b = tape.param(&p);
    assert_eq!(a, b);
    let y = ops::mul(&mut tape, a, b).unwrap();
    let s = ops::sum(&mut tape, y);
    tape.backward(s).unwrap();
    tape.accumulate_into(&mut p);
    assert_eq!(p.grad().unwrap(), &[2.0, 4.0]);
}

#[test]
fn backward_requires_scalar() {
    let mut tape = Tape::new();
    let x = tape.input(vec![2], vec![1.0, 2.0], true).unwrap();
    assert!(tape.backward(x).is_err());
}

#[test]
fn shape_errors_are_reported() {
    let mut tape = Tape::new();
    let x = tape.input(vec![2, 3], vec![0.0; 6], false).unwrap();
    let w = tape.input(vec![4, 2], vec![0.0; 8], false).unwrap();
    let b = tape.input(vec![4], vec![0.0; 4], false).unwrap();
    assert!(matches!(ops::linear(&mut tape, x, w, b), Err(crate::Error::Shape(_))));
    assert!(ops::reshape(&mut tape, x, vec![5]).is_err());
}

#[test]
fn module_visits_named_tensors() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let lin = Linear::new(4, 3, &mut rng);
    let mut names = Vec::new();
    lin.visit("dec.fc", &mut |n, _| names.push(n));
    assert_eq!(names, ["dec.fc.weight", "dec.fc.bias"]);
    assert_eq!(lin.num_trainable(), 15);
    let bound = 0.5;
    assert!(lin.weight.values().iter().all(|v| v.abs() <= bound));
    assert_eq!(BatchNorm::new(5).num_trainable(), 10);
}
