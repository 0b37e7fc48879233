//! Compares adjoint circuit gradients with central finite differences.

use qinr::qsim::{circuit_features, features_and_gradients, CircuitSpec, QuantumParams, ReadoutMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> qinr::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let step = 1e-6;
    for readout in [ReadoutMode::ZOnly, ReadoutMode::Multibasis] {
        let spec = CircuitSpec::new(4, 2, 2).with_readout(readout).with_global_scale(true);
        let mut params = QuantumParams::init(&spec, &mut rng);
        params.rho = Some(0.3);
        let h: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let up: Vec<f64> = (0..spec.feature_width()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (_, g) = features_and_gradients(&spec, &params, &h, &up)?;

        let loss = |p: &QuantumParams, h: &[f64]| -> f64 {
            let f = circuit_features(&spec, p, h).expect("valid circuit");
            f.iter().zip(&up).map(|(a, b)| a * b).sum()
        };
        let mut worst: f64 = 0.0;
        for i in 0..params.theta.len() {
            let (mut a, mut b) = (params.clone(), params.clone());
            a.theta[i] += step;
            b.theta[i] -= step;
            let fd = (loss(&a, &h) - loss(&b, &h)) / (2.0 * step);
            worst = worst.max((fd - g.d_theta[i]).abs());
        }
        for i in 0..h.len() {
            let (mut a, mut b) = (h.clone(), h.clone());
            a[i] += step;
            b[i] -= step;
            let fd = (loss(&params, &a) - loss(&params, &b)) / (2.0 * step);
            worst = worst.max((fd - g.d_h[i]).abs());
        }
        let (mut a, mut b) = (params.clone(), params.clone());
        a.rho = Some(0.3 + step);
        b.rho = Some(0.3 - step);
        let fd_rho = (loss(&a, &h) - loss(&b, &h)) / (2.0 * step);
        println!(
            "{readout:?}: max |adjoint - fd| over theta and h = {worst:.2e}; d_rho adjoint {:.8} fd {:.8}",
            g.d_rho, fd_rho
        );
    }
    Ok(())
}
