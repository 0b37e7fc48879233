use num_complex::Complex64;

use crate::error::{Error, Result};

/// A 2×2 complex matrix stored row-major.
pub type Mat2 = [[Complex64; 2]; 2];

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Euler rotation, entry by entry; equal to `RZ(α)·RY(β)·RZ(γ)`.
pub fn rot_matrix(alpha: f64, beta: f64, gamma: f64) -> Mat2 {
    let (s, c) = (beta / 2.0).sin_cos();
    let sum = (alpha + gamma) / 2.0;
    let diff = (alpha - gamma) / 2.0;
    [
        [Complex64::from_polar(c, -sum), -Complex64::from_polar(s, -diff)],
        [Complex64::from_polar(s, diff), Complex64::from_polar(c, sum)],
    ]
}

/// Partial derivatives of [`rot_matrix`] with respect to `(α, β, γ)`.
pub fn rot_matrix_derivatives(alpha: f64, beta: f64, gamma: f64) -> [Mat2; 3] {
    let m = rot_matrix(alpha, beta, gamma);
    let h = 0.5 * I;
    let d_alpha = [[-h * m[0][0], -h * m[0][1]], [h * m[1][0], h * m[1][1]]];
    let d_gamma = [[-h * m[0][0], h * m[0][1]], [-h * m[1][0], h * m[1][1]]];
    let (s, c) = (beta / 2.0).sin_cos();
    let sum = (alpha + gamma) / 2.0;
    let diff = (alpha - gamma) / 2.0;
    let d_beta = [
        [
            Complex64::from_polar(-0.5 * s, -sum),
            -Complex64::from_polar(0.5 * c, -diff),
        ],
        [
            Complex64::from_polar(0.5 * c, diff),
            Complex64::from_polar(-0.5 * s, sum),
        ],
    ];
    [d_alpha, d_beta, d_gamma]
}

pub fn adjoint(m: &Mat2) -> Mat2 {
    [
        [m[0][0].conj(), m[1][0].conj()],
        [m[0][1].conj(), m[1][1].conj()],
    ]
}

/// Dense statevector over `n_qubits` qubits.
///
/// Qubit 0 is the most significant bit of the basis-state index, so on two
/// qubits the amplitude order is `|00⟩, |01⟩, |10⟩, |11⟩` with the left
/// label belonging to qubit 0.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0…0⟩`.
    pub fn zero(n_qubits: usize) -> Self {
        assert!(n_qubits > 0 && n_qubits <= 24, "unsupported qubit count {n_qubits}");
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Self { n_qubits, amps }
    }

    /// Computational basis state with the given index.
    pub fn basis(n_qubits: usize, index: usize) -> Self {
        let mut state = Self::zero(n_qubits);
        state.amps[0] = Complex64::new(0.0, 0.0);
        state.amps[index] = Complex64::new(1.0, 0.0);
        state
    }

    /// Wraps raw amplitudes. The length must be a power of two; no
    /// normalization is applied.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::Shape(format!("amplitude count {len} is not 2^n with n >= 1")));
        }
        Ok(Self { n_qubits: len.trailing_zeros() as usize, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    #[inline]
    pub(crate) fn mask(&self, qubit: usize) -> usize {
        1 << (self.n_qubits - 1 - qubit)
    }

    pub(crate) fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.n_qubits {
            return Err(Error::QubitIndex { index: qubit, n_qubits: self.n_qubits });
        }
        Ok(())
    }

    /// Applies an arbitrary (not necessarily unitary) 2×2 matrix on `qubit`.
    pub fn apply_matrix(&mut self, qubit: usize, m: &Mat2) -> Result<()> {
        self.check_qubit(qubit)?;
        self.apply_matrix_unchecked(qubit, m);
        Ok(())
    }

    pub(crate) fn apply_matrix_unchecked(&mut self, qubit: usize, m: &Mat2) {
        let mask = self.mask(qubit);
        for i0 in 0..self.amps.len() {
            if i0 & mask != 0 {
                continue;
            }
            let i1 = i0 | mask;
            let a0 = self.amps[i0];
            let a1 = self.amps[i1];
            self.amps[i0] = m[0][0] * a0 + m[0][1] * a1;
            self.amps[i1] = m[1][0] * a0 + m[1][1] * a1;
        }
    }

    /// Euler rotation `Rot(α, β, γ)` on `qubit`.
    pub fn apply_rot(&mut self, qubit: usize, alpha: f64, beta: f64, gamma: f64) -> Result<()> {
        self.apply_matrix(qubit, &rot_matrix(alpha, beta, gamma))
    }

    /// `R_Z(φ) = diag(e^{-iφ/2}, e^{iφ/2})` on `qubit`.
    pub fn apply_rz(&mut self, qubit: usize, phi: f64) -> Result<()> {
        self.check_qubit(qubit)?;
        self.apply_diag_unchecked(
            qubit,
            Complex64::from_polar(1.0, -phi / 2.0),
            Complex64::from_polar(1.0, phi / 2.0),
        );
        Ok(())
    }

    pub(crate) fn apply_diag_unchecked(&mut self, qubit: usize, d0: Complex64, d1: Complex64) {
        let mask = self.mask(qubit);
        for (i, a) in self.amps.iter_mut().enumerate() {
            *a *= if i & mask == 0 { d0 } else { d1 };
        }
    }

    /// Controlled-Z between qubits `i` and `j`. Symmetric in its arguments.
    pub fn apply_cz(&mut self, i: usize, j: usize) -> Result<()> {
        self.check_qubit(i)?;
        self.check_qubit(j)?;
        if i == j {
            return Err(Error::InvalidEdge(i, j));
        }
        self.apply_cz_unchecked(i, j);
        Ok(())
    }

    pub(crate) fn apply_cz_unchecked(&mut self, i: usize, j: usize) {
        let both = self.mask(i) | self.mask(j);
        for (idx, a) in self.amps.iter_mut().enumerate() {
            if idx & both == both {
                *a = -*a;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: Complex64, b: Complex64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn rot_zero_is_identity() {
        let mut s = StateVector::zero(1);
        s.apply_rot(0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(s, StateVector::zero(1));
    }

    #[test]
    fn rot_beta_pi_flips_population() {
        let mut s = StateVector::zero(1);
        s.apply_rot(0, 0.0, PI, 0.0).unwrap();
        assert!(s.amplitudes()[0].norm() < 1e-15);
        assert!((s.amplitudes()[1].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rot_is_unitary() {
        let m = rot_matrix(0.3, -1.2, 2.5);
        let a = adjoint(&m);
        for r in 0..2 {
            for c in 0..2 {
                let v = a[r][0] * m[0][c] + a[r][1] * m[1][c];
                let expect = if r == c { 1.0 } else { 0.0 };
                assert!(close(v, Complex64::new(expect, 0.0)));
            }
        }
    }

    #[test]
    fn rot_factorizes_into_z_y_z() {
        let (a, b, g): (f64, f64, f64) = (0.7, 1.9, -0.4);
        let rz = |p: f64| -> Mat2 {
            [
                [Complex64::from_polar(1.0, -p / 2.0), Complex64::new(0.0, 0.0)],
                [Complex64::new(0.0, 0.0), Complex64::from_polar(1.0, p / 2.0)],
            ]
        };
        let ry: Mat2 = [
            [Complex64::new((b / 2.0).cos(), 0.0), Complex64::new(-(b / 2.0).sin(), 0.0)],
            [Complex64::new((b / 2.0).sin(), 0.0), Complex64::new((b / 2.0).cos(), 0.0)],
        ];
        let mul = |x: &Mat2, y: &Mat2| -> Mat2 {
            let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
            for r in 0..2 {
                for c in 0..2 {
                    out[r][c] = x[r][0] * y[0][c] + x[r][1] * y[1][c];
                }
            }
            out
        };
        let composed = mul(&rz(a), &mul(&ry, &rz(g)));
        let direct = rot_matrix(a, b, g);
        for r in 0..2 {
            for c in 0..2 {
                assert!(close(composed[r][c], direct[r][c]));
            }
        }
    }

    #[test]
    fn cz_negates_only_11() {
        let mut s = StateVector::basis(2, 3);
        s.apply_cz(0, 1).unwrap();
        assert!(close(s.amplitudes()[3], Complex64::new(-1.0, 0.0)));
        let mut s = StateVector::zero(2);
        s.apply_cz(0, 1).unwrap();
        assert_eq!(s, StateVector::zero(2));
    }

    #[test]
    fn cz_rejects_self_edge() {
        let mut s = StateVector::zero(2);
        assert!(matches!(s.apply_cz(1, 1), Err(Error::InvalidEdge(1, 1))));
    }

    #[test]
    fn out_of_range_qubit() {
        let mut s = StateVector::zero(2);
        assert!(matches!(s.apply_rz(2, 0.1), Err(Error::QubitIndex { index: 2, .. })));
        assert!(s.apply_rot(5, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn rz_zero_is_identity() {
        let mut s = StateVector::zero(3);
        s.apply_rot(1, 0.2, 0.5, 0.9).unwrap();
        let before = s.clone();
        s.apply_rz(1, 0.0).unwrap();
        assert_eq!(s, before);
    }
}
