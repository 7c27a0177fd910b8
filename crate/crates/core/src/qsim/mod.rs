//! Exact 4-qubit state-vector simulation.
//!
//! Implements the gate set used by the quantum feature-refinement heads
//! (RX, RY, Ising XX, controlled-RX, Pauli-Z expectation), the FE/SE layer
//! structure, and differentiable execution. Expectations are computed
//! exactly — never sampled — so the simulator is a pure deterministic
//! function of (input, angles).

mod gates;
mod grad;
mod head;

pub use gates::{crx_matrix, rx_matrix, ry_matrix, xx_matrix};
pub use grad::{head_gradient, parameter_shift_gradient, HeadGradient};
pub use head::{
    build_circuit, run_fe, run_head, run_se, CircuitGate, GateKind, HeadOptions, ParamSource,
    QfrbParams, QuantumHeadParams, XxPairing, FE_ANGLES, HEAD_ANGLES, N_HEADS, SE_ANGLES,
};

use num_complex::Complex64;

use crate::numerics::{apply_gate2, apply_gate4, ComplexTensor};
use crate::{Error, Result};

pub const N_QUBITS: usize = 4;
pub const DIM: usize = 16;

/// 16 complex amplitudes; qubit 0 is the most significant bit of the basis
/// index, so |q0 q1 q2 q3⟩ has index 8·q0 + 4·q1 + 2·q2 + q3.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub amp: ComplexTensor,
}

fn qubit_bit(qubit: usize) -> Result<usize> {
    if qubit >= N_QUBITS {
        return Err(Error::domain(format!(
            "qubit index {qubit} out of range 0..{N_QUBITS}"
        )));
    }
    Ok(1 << (N_QUBITS - 1 - qubit))
}

impl StateVector {
    /// |0000⟩.
    pub fn zero() -> Self {
        let mut amp = ComplexTensor::zeros(vec![DIM]);
        amp.re[0] = 1.0;
        StateVector { amp }
    }

    pub fn norm_sq(&self) -> f64 {
        self.amp.norm_sq()
    }

    pub fn get(&self, i: usize) -> Complex64 {
        self.amp.get(i)
    }

    pub fn apply_rx(&mut self, qubit: usize, theta: f64) -> Result<()> {
        let bit = qubit_bit(qubit)?;
        apply_gate2(&mut self.amp, &rx_matrix(theta), bit);
        Ok(())
    }

    pub fn apply_ry(&mut self, qubit: usize, theta: f64) -> Result<()> {
        let bit = qubit_bit(qubit)?;
        apply_gate2(&mut self.amp, &ry_matrix(theta), bit);
        Ok(())
    }

    /// Ising XX on the ordered qubit pair (the matrix is symmetric under
    /// swapping the pair).
    pub fn apply_xx(&mut self, qubit_a: usize, qubit_b: usize, theta: f64) -> Result<()> {
        if qubit_a == qubit_b {
            return Err(Error::domain(format!(
                "apply_xx requires distinct qubits, got {qubit_a} twice"
            )));
        }
        let (ba, bb) = (qubit_bit(qubit_a)?, qubit_bit(qubit_b)?);
        apply_gate4(&mut self.amp, &xx_matrix(theta), ba, bb);
        Ok(())
    }

    /// Controlled RX: RX(θ) on `target` within the control=1 subspace.
    pub fn apply_crx(&mut self, control: usize, target: usize, theta: f64) -> Result<()> {
        if control == target {
            return Err(Error::domain(format!(
                "apply_crx requires distinct qubits, got {control} twice"
            )));
        }
        let (bc, bt) = (qubit_bit(control)?, qubit_bit(target)?);
        apply_gate4(&mut self.amp, &crx_matrix(theta), bc, bt);
        Ok(())
    }

    /// Exact Pauli-Z expectation on one qubit, in [-1, 1].
    pub fn measure_z(&self, qubit: usize) -> Result<f64> {
        let bit = qubit_bit(qubit)?;
        let mut acc = 0.0;
        for i in 0..DIM {
            let p = self.amp.re[i] * self.amp.re[i] + self.amp.im[i] * self.amp.im[i];
            acc += if i & bit == 0 { p } else { -p };
        }
        Ok(acc)
    }
}

/// Quantum angle embedding: ⊗ⱼ RX(xⱼ)|0⟩. The inputs are data, not
/// trainables.
pub fn angle_embed(x: &[f64; N_QUBITS]) -> StateVector {
    let mut s = StateVector::zero();
    for (q, &xi) in x.iter().enumerate() {
        s.apply_rx(q, xi).expect("qubit index in range");
    }
    s
}
