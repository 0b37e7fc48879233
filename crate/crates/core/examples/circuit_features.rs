//! Runs the decoder circuit on a few latent angle vectors and prints its
//! readout in both modes.

use qinr::qsim::{circuit_features, run_circuit, CircuitSpec, QuantumParams, ReadoutMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> qinr::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let spec = CircuitSpec::new(6, 2, 2);
    let params = QuantumParams::init(&spec, &mut rng);
    println!("{} qubits, {} trainable circuit parameters", spec.n_qubits, spec.param_count());

    for h in [[0.0; 6], [0.3, -0.1, 0.8, 0.5, -0.7, 0.2], [1.5; 6]] {
        let state = run_circuit(&spec, &params, &h)?;
        let z = circuit_features(&spec, &params, &h)?;
        println!("h = {h:?}  |psi| = {:.12}", state.norm());
        println!("  <Z>      {}", fmt(&z));
        let multi = spec.clone().with_readout(ReadoutMode::Multibasis);
        let f = circuit_features(&multi, &params, &h)?;
        for (label, block) in ["<X>", "<Y>", "<Z>", "<ZZ>"].iter().zip(f.chunks(6)) {
            println!("  {label:<8} {}", fmt(block));
        }
    }
    Ok(())
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:+.4}")).collect::<Vec<_>>().join(" ")
}
