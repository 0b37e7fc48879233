use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::state::StateVector;
use crate::error::{Error, Result};

/// Pauli observables the decoder can read out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Observable {
    X(usize),
    Y(usize),
    Z(usize),
    ZZ(usize, usize),
}

impl Observable {
    pub fn check(self, n_qubits: usize) -> Result<()> {
        let in_range = |q: usize| {
            if q < n_qubits {
                Ok(())
            } else {
                Err(Error::QubitIndex { index: q, n_qubits })
            }
        };
        match self {
            Observable::X(q) | Observable::Y(q) | Observable::Z(q) => in_range(q),
            Observable::ZZ(i, j) => {
                in_range(i)?;
                in_range(j)?;
                if i == j {
                    return Err(Error::InvalidEdge(i, j));
                }
                Ok(())
            }
        }
    }
}

/// `⟨ψ|O|ψ⟩`.
pub fn expectation(state: &StateVector, obs: Observable) -> Result<f64> {
    obs.check(state.n_qubits())?;
    Ok(expectation_unchecked(state, obs))
}

pub(crate) fn expectation_unchecked(state: &StateVector, obs: Observable) -> f64 {
    let amps = state.amplitudes();
    match obs {
        Observable::Z(q) => {
            let mask = state.mask(q);
            amps.iter()
                .enumerate()
                .map(|(i, a)| if i & mask == 0 { a.norm_sqr() } else { -a.norm_sqr() })
                .sum()
        }
        Observable::ZZ(p, q) => {
            let (mp, mq) = (state.mask(p), state.mask(q));
            amps.iter()
                .enumerate()
                .map(|(i, a)| {
                    let parity = ((i & mp != 0) as u8) ^ ((i & mq != 0) as u8);
                    if parity == 0 { a.norm_sqr() } else { -a.norm_sqr() }
                })
                .sum()
        }
        Observable::X(q) | Observable::Y(q) => {
            let mask = state.mask(q);
            let cross: Complex64 = (0..amps.len())
                .filter(|i| i & mask == 0)
                .map(|i0| amps[i0].conj() * amps[i0 | mask])
                .sum();
            if matches!(obs, Observable::X(_)) {
                2.0 * cross.re
            } else {
                2.0 * cross.im
            }
        }
    }
}

/// Adds `weight · O|ψ⟩` into `out`.
pub(crate) fn accumulate_applied(
    state: &StateVector,
    obs: Observable,
    weight: f64,
    out: &mut [Complex64],
) {
    let amps = state.amplitudes();
    match obs {
        Observable::Z(q) => {
            let mask = state.mask(q);
            for (i, (o, a)) in out.iter_mut().zip(amps).enumerate() {
                *o += if i & mask == 0 { weight * a } else { -weight * a };
            }
        }
        Observable::ZZ(p, q) => {
            let (mp, mq) = (state.mask(p), state.mask(q));
            for (i, (o, a)) in out.iter_mut().zip(amps).enumerate() {
                let parity = ((i & mp != 0) as u8) ^ ((i & mq != 0) as u8);
                *o += if parity == 0 { weight * a } else { -weight * a };
            }
        }
        Observable::X(q) => {
            let mask = state.mask(q);
            for (i, o) in out.iter_mut().enumerate() {
                *o += weight * amps[i ^ mask];
            }
        }
        Observable::Y(q) => {
            // Y|0⟩ = i|1⟩, Y|1⟩ = −i|0⟩
            let mask = state.mask(q);
            let iw = Complex64::new(0.0, weight);
            for (i, o) in out.iter_mut().enumerate() {
                let partner = amps[i ^ mask];
                *o += if i & mask == 0 { -iw * partner } else { iw * partner };
            }
        }
    }
}
