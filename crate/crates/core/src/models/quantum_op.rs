use crate::error::{Error, Result};
use crate::neural::{CustomOp, Tape, Values, Var};
use crate::qsim::{circuit_features, features_and_gradients, CircuitSpec, QuantumParams};

/// Circuit evaluated independently on every row of `h: [batch, n_qubits]`,
/// producing `[batch, feature_width]` expectation values.
struct CircuitOp {
    spec: CircuitSpec,
    h: Var,
    theta: Var,
    xi: Var,
    rho: Option<Var>,
}

fn params_from(values: &Values<'_>, theta: Var, xi: Var, rho: Option<Var>) -> QuantumParams {
    QuantumParams {
        theta: values.get(theta).to_vec(),
        xi: values.get(xi).to_vec(),
        rho: rho.map(|r| values.get(r)[0]),
    }
}

impl CustomOp for CircuitOp {
    fn name(&self) -> &'static str {
        "circuit"
    }

    fn inputs(&self) -> Vec<Var> {
        let mut v = vec![self.h, self.theta, self.xi];
        v.extend(self.rho);
        v
    }

    fn backward(&self, values: &Values<'_>, grad_out: &[f64]) -> Result<Vec<(Var, Vec<f64>)>> {
        let params = params_from(values, self.theta, self.xi, self.rho);
        let (n, nf) = (self.spec.n_qubits, self.spec.feature_width());
        let h = values.get(self.h);
        let mut d_h = vec![0.0; h.len()];
        let mut d_theta = vec![0.0; params.theta.len()];
        let mut d_xi = vec![0.0; params.xi.len()];
        let mut d_rho = 0.0;
        for (b, (row, up)) in h.chunks_exact(n).zip(grad_out.chunks_exact(nf)).enumerate() {
            let (_, g) = features_and_gradients(&self.spec, &params, row, up)?;
            d_h[b * n..(b + 1) * n].copy_from_slice(&g.d_h);
            d_theta.iter_mut().zip(&g.d_theta).for_each(|(a, v)| *a += v);
            d_xi.iter_mut().zip(&g.d_xi).for_each(|(a, v)| *a += v);
            d_rho += g.d_rho;
        }
        let mut out = vec![(self.h, d_h), (self.theta, d_theta), (self.xi, d_xi)];
        if let Some(r) = self.rho {
            out.push((r, vec![d_rho]));
        }
        Ok(out)
    }
}

/// Records the circuit on the tape.
pub(crate) fn circuit_var(
    tape: &mut Tape,
    spec: &CircuitSpec,
    h: Var,
    theta: Var,
    xi: Var,
    rho: Option<Var>,
) -> Result<Var> {
    let n = spec.n_qubits;
    let shape = tape.shape(h).to_vec();
    if shape.len() != 2 || shape[1] != n {
        return Err(Error::Shape(format!("circuit input {shape:?}, expected [batch, {n}]")));
    }
    let values = tape.values_view();
    let params = params_from(&values, theta, xi, rho);
    let mut features = Vec::with_capacity(shape[0] * spec.feature_width());
    for row in tape.value(h).chunks_exact(n) {
        features.extend(circuit_features(spec, &params, row)?);
    }
    let op = CircuitOp { spec: spec.clone(), h, theta, xi, rho };
    Ok(tape.push_custom(vec![shape[0], spec.feature_width()], features, Box::new(op)))
}
