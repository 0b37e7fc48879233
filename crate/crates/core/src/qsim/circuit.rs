use rand::Rng;
use serde::{Deserialize, Serialize};

use super::observable::{self, Observable};
use super::state::{rot_matrix, StateVector};
use crate::error::{Error, Result};

/// Which expectation values the circuit hands to the classical readout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ReadoutMode {
    /// `[⟨Z_0⟩, …, ⟨Z_{n-1}⟩]`.
    #[default]
    ZOnly,
    /// X-block, Y-block, Z-block, then ring correlators `⟨Z_i Z_{i+1 mod n}⟩`.
    Multibasis,
}

impl ReadoutMode {
    pub fn feature_width(self, n_qubits: usize) -> usize {
        match self {
            ReadoutMode::ZOnly => n_qubits,
            ReadoutMode::Multibasis => 4 * n_qubits,
        }
    }

    /// The observables in the order they appear in the feature vector.
    pub fn observables(self, n_qubits: usize) -> Vec<Observable> {
        match self {
            ReadoutMode::ZOnly => (0..n_qubits).map(Observable::Z).collect(),
            ReadoutMode::Multibasis => {
                let mut obs = Vec::with_capacity(4 * n_qubits);
                obs.extend((0..n_qubits).map(Observable::X));
                obs.extend((0..n_qubits).map(Observable::Y));
                obs.extend((0..n_qubits).map(Observable::Z));
                obs.extend((0..n_qubits).map(|i| Observable::ZZ(i, (i + 1) % n_qubits)));
                obs
            }
        }
    }
}

impl std::str::FromStr for ReadoutMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "z-only" | "z" => Ok(ReadoutMode::ZOnly),
            "multibasis" => Ok(ReadoutMode::Multibasis),
            other => Err(Error::Config(format!("unknown readout mode '{other}'"))),
        }
    }
}

/// Ordered CZ edge sets; parameter-layer repetition `k` uses set `k mod len`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntanglingPattern {
    layers: Vec<Vec<(usize, usize)>>,
}

impl EntanglingPattern {
    pub fn new(n_qubits: usize, layers: Vec<Vec<(usize, usize)>>) -> Result<Self> {
        for edges in &layers {
            let mut seen = vec![false; n_qubits];
            for &(i, j) in edges {
                if i == j || i >= n_qubits || j >= n_qubits || seen[i] || seen[j] {
                    return Err(Error::InvalidEdge(i, j));
                }
                seen[i] = true;
                seen[j] = true;
            }
        }
        Ok(Self { layers })
    }

    /// Alternating even/odd nearest-neighbour pairs on a ring.
    ///
    /// For six qubits this gives `{(0,1),(2,3),(4,5)}` and
    /// `{(1,2),(3,4),(5,0)}`.
    pub fn brick_wall(n_qubits: usize, n_layers: usize) -> Self {
        let layers = (0..n_layers)
            .map(|k| {
                if n_qubits < 2 {
                    return Vec::new();
                }
                let offset = k % 2;
                (offset..n_qubits)
                    .step_by(2)
                    .take(n_qubits / 2)
                    .map(|i| (i, (i + 1) % n_qubits))
                    .collect()
            })
            .collect();
        Self { layers }
    }

    /// A pattern with no entanglers at all.
    pub fn none() -> Self {
        Self { layers: Vec::new() }
    }

    pub fn layers(&self) -> &[Vec<(usize, usize)>] {
        &self.layers
    }

    fn edges_for(&self, rep: usize) -> &[(usize, usize)] {
        if self.layers.is_empty() {
            &[]
        } else {
            &self.layers[rep % self.layers.len()]
        }
    }
}

/// Circuit architecture: `W^(L+1) S^(L) W^(L) … S^(1) W^(1)` with `K`
/// rotation/entangler repetitions inside every parameter layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitSpec {
    pub n_qubits: usize,
    /// Number of encoding (re-upload) layers `L`; there are `L + 1` parameter layers.
    pub reuploads: usize,
    /// Rotation/entangler repetitions `K` per parameter layer.
    pub reps: usize,
    pub pattern: EntanglingPattern,
    pub readout: ReadoutMode,
    pub global_scale: bool,
}

impl CircuitSpec {
    /// Brick-wall entanglers, Z-only readout, no global scale.
    pub fn new(n_qubits: usize, reuploads: usize, reps: usize) -> Self {
        Self {
            n_qubits,
            reuploads,
            reps,
            pattern: EntanglingPattern::brick_wall(n_qubits, reps),
            readout: ReadoutMode::ZOnly,
            global_scale: false,
        }
    }

    pub fn with_readout(mut self, readout: ReadoutMode) -> Self {
        self.readout = readout;
        self
    }

    pub fn with_global_scale(mut self, on: bool) -> Self {
        self.global_scale = on;
        self
    }

    pub fn with_pattern(mut self, pattern: EntanglingPattern) -> Self {
        self.pattern = pattern;
        self
    }

    pub fn theta_len(&self) -> usize {
        (self.reuploads + 1) * self.reps * self.n_qubits * 3
    }

    pub fn xi_len(&self) -> usize {
        self.reuploads * self.n_qubits
    }

    /// Trainable quantum parameter count, including `ρ` when enabled.
    pub fn param_count(&self) -> usize {
        self.theta_len() + self.xi_len() + usize::from(self.global_scale)
    }

    pub fn feature_width(&self) -> usize {
        self.readout.feature_width(self.n_qubits)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 || self.n_qubits > 16 {
            return Err(Error::Config(format!("n_qubits = {} out of range 1..=16", self.n_qubits)));
        }
        if self.reps == 0 {
            return Err(Error::Config("reps (K) must be at least 1".into()));
        }
        EntanglingPattern::new(self.n_qubits, self.pattern.layers.clone())?;
        Ok(())
    }

    pub(crate) fn theta_index(&self, layer: usize, rep: usize, qubit: usize) -> usize {
        ((layer * self.reps + rep) * self.n_qubits + qubit) * 3
    }

    /// Gate sequence in application order.
    pub(crate) fn program(&self) -> Vec<Gate> {
        let mut gates = Vec::new();
        for layer in 0..=self.reuploads {
            for rep in 0..self.reps {
                for q in 0..self.n_qubits {
                    gates.push(Gate::Rot { qubit: q, theta: self.theta_index(layer, rep, q) });
                }
                for &(i, j) in self.pattern.edges_for(rep) {
                    gates.push(Gate::Cz(i, j));
                }
            }
            if layer < self.reuploads {
                for q in 0..self.n_qubits {
                    gates.push(Gate::Rz { qubit: q, xi: layer * self.n_qubits + q });
                }
            }
        }
        gates
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Gate {
    Rot { qubit: usize, theta: usize },
    Cz(usize, usize),
    Rz { qubit: usize, xi: usize },
}

/// Trainable circuit parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantumParams {
    /// Euler angles, indexed `[layer][rep][qubit][α, β, γ]`.
    pub theta: Vec<f64>,
    /// Encoding scales, indexed `[reupload][qubit]`.
    pub xi: Vec<f64>,
    /// Log global scale; the encoding angle is multiplied by `e^ρ`.
    pub rho: Option<f64>,
}

impl QuantumParams {
    /// θ uniform in `[0, 2π)`, ξ = 1, ρ = 0.
    pub fn init<R: Rng + ?Sized>(spec: &CircuitSpec, rng: &mut R) -> Self {
        let theta = (0..spec.theta_len())
            .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
            .collect();
        Self {
            theta,
            xi: vec![1.0; spec.xi_len()],
            rho: spec.global_scale.then_some(0.0),
        }
    }

    pub fn zeros(spec: &CircuitSpec) -> Self {
        Self {
            theta: vec![0.0; spec.theta_len()],
            xi: vec![1.0; spec.xi_len()],
            rho: spec.global_scale.then_some(0.0),
        }
    }

    pub fn scale(&self) -> f64 {
        self.rho.map_or(1.0, f64::exp)
    }

    pub fn check(&self, spec: &CircuitSpec) -> Result<()> {
        if self.theta.len() != spec.theta_len() {
            return Err(Error::Config(format!(
                "theta has {} entries, circuit needs {}",
                self.theta.len(),
                spec.theta_len()
            )));
        }
        if self.xi.len() != spec.xi_len() {
            return Err(Error::Config(format!(
                "xi has {} entries, circuit needs {}",
                self.xi.len(),
                spec.xi_len()
            )));
        }
        if self.rho.is_some() != spec.global_scale {
            return Err(Error::Config("rho presence does not match global_scale".into()));
        }
        Ok(())
    }
}

pub(crate) fn check_inputs(spec: &CircuitSpec, params: &QuantumParams, h: &[f64]) -> Result<()> {
    params.check(spec)?;
    if h.len() != spec.n_qubits {
        return Err(Error::Config(format!(
            "input angle vector has {} entries, circuit has {} qubits",
            h.len(),
            spec.n_qubits
        )));
    }
    if let Some(bad) = h.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("input angle {bad}")));
    }
    Ok(())
}

pub(crate) fn apply_gate(state: &mut StateVector, gate: Gate, params: &QuantumParams, h: &[f64]) {
    match gate {
        Gate::Rot { qubit, theta } => {
            let t = &params.theta[theta..theta + 3];
            state.apply_matrix_unchecked(qubit, &rot_matrix(t[0], t[1], t[2]));
        }
        Gate::Cz(i, j) => state.apply_cz_unchecked(i, j),
        Gate::Rz { qubit, xi } => {
            let phi = params.xi[xi] * params.scale() * h[qubit];
            state.apply_diag_unchecked(
                qubit,
                num_complex::Complex64::from_polar(1.0, -phi / 2.0),
                num_complex::Complex64::from_polar(1.0, phi / 2.0),
            );
        }
    }
}

/// `U(h)|0…0⟩`.
pub fn run_circuit(spec: &CircuitSpec, params: &QuantumParams, h: &[f64]) -> Result<StateVector> {
    spec.validate()?;
    check_inputs(spec, params, h)?;
    let mut state = StateVector::zero(spec.n_qubits);
    for gate in spec.program() {
        apply_gate(&mut state, gate, params, h);
    }
    Ok(state)
}

/// Expectation values for the spec's readout mode, in documented order.
pub fn circuit_features(spec: &CircuitSpec, params: &QuantumParams, h: &[f64]) -> Result<Vec<f64>> {
    let state = run_circuit(spec, params, h)?;
    Ok(spec
        .readout
        .observables(spec.n_qubits)
        .into_iter()
        .map(|o| observable::expectation_unchecked(&state, o))
        .collect())
}
