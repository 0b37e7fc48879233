use num_complex::Complex64;

use super::circuit::{apply_gate, check_inputs, CircuitSpec, Gate, QuantumParams};
use super::observable::{accumulate_applied, expectation_unchecked};
use super::state::{adjoint, rot_matrix, rot_matrix_derivatives, Mat2, StateVector};
use crate::error::{Error, Result};

/// Gradient of `upstream · features` with respect to every circuit input.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitGradients {
    pub d_theta: Vec<f64>,
    pub d_xi: Vec<f64>,
    /// Zero when the global scale is disabled.
    pub d_rho: f64,
    pub d_h: Vec<f64>,
}

/// `⟨left| M_q |right⟩` for a single-qubit matrix `M` on `qubit`.
fn matrix_element(left: &StateVector, right: &StateVector, qubit: usize, m: &Mat2) -> Complex64 {
    let mask = left.mask(qubit);
    let (l, r) = (left.amplitudes(), right.amplitudes());
    let mut acc = Complex64::new(0.0, 0.0);
    for i0 in 0..l.len() {
        if i0 & mask != 0 {
            continue;
        }
        let i1 = i0 | mask;
        acc += l[i0].conj() * (m[0][0] * r[i0] + m[0][1] * r[i1]);
        acc += l[i1].conj() * (m[1][0] * r[i0] + m[1][1] * r[i1]);
    }
    acc
}

fn undo_gate(state: &mut StateVector, gate: Gate, params: &QuantumParams, h: &[f64]) {
    match gate {
        Gate::Rot { qubit, theta } => {
            let t = &params.theta[theta..theta + 3];
            state.apply_matrix_unchecked(qubit, &adjoint(&rot_matrix(t[0], t[1], t[2])));
        }
        Gate::Cz(i, j) => state.apply_cz_unchecked(i, j),
        Gate::Rz { qubit, xi } => {
            let phi = params.xi[xi] * params.scale() * h[qubit];
            state.apply_diag_unchecked(
                qubit,
                Complex64::from_polar(1.0, phi / 2.0),
                Complex64::from_polar(1.0, -phi / 2.0),
            );
        }
    }
}

/// Forward features plus the exact gradient of `upstream · features`.
///
/// One reverse sweep over the gate list: the forward state is un-computed
/// gate by gate while a co-state `λ = U_{>j}† M ψ` is carried along, with
/// `M = Σ_k upstream_k O_k`. Each parameterized gate contributes
/// `2 Re ⟨λ| ∂G φ⟩`.
pub fn features_and_gradients(
    spec: &CircuitSpec,
    params: &QuantumParams,
    h: &[f64],
    upstream: &[f64],
) -> Result<(Vec<f64>, CircuitGradients)> {
    spec.validate()?;
    check_inputs(spec, params, h)?;
    let observables = spec.readout.observables(spec.n_qubits);
    if upstream.len() != observables.len() {
        return Err(Error::Config(format!(
            "upstream has {} entries, readout produces {}",
            upstream.len(),
            observables.len()
        )));
    }

    let program = spec.program();
    let mut phi = StateVector::zero(spec.n_qubits);
    for &gate in &program {
        apply_gate(&mut phi, gate, params, h);
    }
    let features: Vec<f64> = observables
        .iter()
        .map(|&o| expectation_unchecked(&phi, o))
        .collect();

    let mut grads = CircuitGradients {
        d_theta: vec![0.0; params.theta.len()],
        d_xi: vec![0.0; params.xi.len()],
        d_rho: 0.0,
        d_h: vec![0.0; h.len()],
    };
    if upstream.iter().all(|&u| u == 0.0) {
        return Ok((features, grads));
    }

    let mut lambda_amps = vec![Complex64::new(0.0, 0.0); phi.amplitudes().len()];
    for (&o, &u) in observables.iter().zip(upstream) {
        if u != 0.0 {
            accumulate_applied(&phi, o, u, &mut lambda_amps);
        }
    }
    let mut lambda = StateVector::from_amplitudes(lambda_amps)?;
    let scale = params.scale();

    for &gate in program.iter().rev() {
        undo_gate(&mut phi, gate, params, h);
        match gate {
            Gate::Rot { qubit, theta } => {
                let t = &params.theta[theta..theta + 3];
                let derivs = rot_matrix_derivatives(t[0], t[1], t[2]);
                for (k, d) in derivs.iter().enumerate() {
                    grads.d_theta[theta + k] += 2.0 * matrix_element(&lambda, &phi, qubit, d).re;
                }
            }
            Gate::Rz { qubit, xi } => {
                let angle = params.xi[xi] * scale * h[qubit];
                let i_half = Complex64::new(0.0, 0.5);
                let d: Mat2 = [
                    [-i_half * Complex64::from_polar(1.0, -angle / 2.0), Complex64::new(0.0, 0.0)],
                    [Complex64::new(0.0, 0.0), i_half * Complex64::from_polar(1.0, angle / 2.0)],
                ];
                let d_angle = 2.0 * matrix_element(&lambda, &phi, qubit, &d).re;
                grads.d_xi[xi] += d_angle * scale * h[qubit];
                grads.d_h[qubit] += d_angle * params.xi[xi] * scale;
                grads.d_rho += d_angle * params.xi[xi] * scale * h[qubit];
            }
            Gate::Cz(..) => {}
        }
        undo_gate(&mut lambda, gate, params, h);
    }
    if params.rho.is_none() {
        grads.d_rho = 0.0;
    }
    Ok((features, grads))
}

/// Gradient of `upstream · features` with respect to θ, ξ, ρ and h.
pub fn circuit_gradients(
    spec: &CircuitSpec,
    params: &QuantumParams,
    h: &[f64],
    upstream: &[f64],
) -> Result<CircuitGradients> {
    features_and_gradients(spec, params, h, upstream).map(|(_, g)| g)
}
