//! Shows how the encoding scale ξ stretches the circuit's frequency
//! spectrum: one qubit, one reupload, ⟨Z⟩ sampled over h and projected onto
//! cos/sin(k·h).

use std::f64::consts::PI;

use qinr::qsim::{circuit_features, CircuitSpec, QuantumParams};

fn main() -> qinr::Result<()> {
    let spec = CircuitSpec::new(1, 1, 1);
    let mut params = QuantumParams::zeros(&spec);
    params.theta = vec![0.4, 1.1, -0.3, 0.9, 0.7, 0.2];
    let n = 64;
    for xi in [1.0, 2.0, 3.0] {
        params.xi = vec![xi];
        let samples: Vec<f64> = (0..n)
            .map(|j| {
                let h = 2.0 * PI * j as f64 / n as f64;
                circuit_features(&spec, &params, &[h]).map(|f| f[0])
            })
            .collect::<qinr::Result<_>>()?;
        print!("xi = {xi}:");
        for k in 0..=4 {
            let (mut c, mut s) = (0.0, 0.0);
            for (j, v) in samples.iter().enumerate() {
                let t = 2.0 * PI * (j * k) as f64 / n as f64;
                c += v * t.cos();
                s += v * t.sin();
            }
            let scale = if k == 0 { 1.0 } else { 2.0 } / n as f64;
            print!("  |a_{k}| = {:.4}", scale * c.hypot(s));
        }
        println!();
    }
    println!("energy sits only at k = 0 and k = xi");
    Ok(())
}
