//! Exact statevector simulation of the data-reuploading decoder circuit.
//!
//! The circuit is `W^(L+1) S^(L)(h) W^(L) … S^(1)(h) W^(1)` acting on
//! `|0…0⟩`. Each parameter layer `W` repeats `K` times a column of Euler
//! rotations followed by one CZ edge set; each encoding layer `S` applies
//! `R_Z(ξ_i · s · h_i)` on every qubit, where `s = e^ρ` when the global
//! scale is enabled and `1` otherwise.
//!
//! Gradients come from a single adjoint sweep ([`features_and_gradients`]),
//! exact to floating-point precision.

mod adjoint;
mod circuit;
mod observable;
mod state;

pub use adjoint::{circuit_gradients, features_and_gradients, CircuitGradients};
pub use circuit::{
    circuit_features, run_circuit, CircuitSpec, EntanglingPattern, QuantumParams, ReadoutMode,
};
pub use observable::{expectation, Observable};
pub use state::{rot_matrix, Mat2, StateVector};
