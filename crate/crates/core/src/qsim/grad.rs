//! Gradients through the quantum head.
//!
//! The primary path is adjoint-style reverse-mode differentiation of the
//! complex amplitudes: exact, one forward pass plus one reverse sweep. The
//! parameter-shift rule is implemented as an independent cross-check (two
//! evaluations per rotation/XX angle, four per controlled-RX angle).

use num_complex::Complex64;

use super::gates::{crx_deriv, rx_deriv, ry_deriv, xx_deriv};
use super::head::{
    apply_gate, apply_kind, build_circuit, run_head, CircuitGate, GateKind, HeadOptions,
    ParamSource, QuantumHeadParams, HEAD_ANGLES,
};
use super::{StateVector, DIM, N_QUBITS};
use crate::numerics::{apply_gate2, apply_gate4, ComplexTensor};

/// Gradients of `upstream · head_output` with respect to the 4 input
/// components and the 28 head angles.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradient {
    pub d_input: [f64; N_QUBITS],
    pub d_angles: [f64; HEAD_ANGLES],
}

impl HeadGradient {
    fn zeros() -> Self {
        HeadGradient {
            d_input: [0.0; N_QUBITS],
            d_angles: [0.0; HEAD_ANGLES],
        }
    }
}

fn bit(qubit: usize) -> usize {
    1 << (N_QUBITS - 1 - qubit)
}

fn apply_inverse(state: &mut StateVector, gate: &CircuitGate) {
    apply_kind(state, gate.kind, -gate.theta);
}

/// Apply dU/dθ (not unitary) to a copy of the state.
fn apply_derivative(state: &StateVector, gate: &CircuitGate) -> ComplexTensor {
    let mut out = state.amp.clone();
    match gate.kind {
        GateKind::Rx { qubit } => apply_gate2(&mut out, &rx_deriv(gate.theta), bit(qubit)),
        GateKind::Ry { qubit } => apply_gate2(&mut out, &ry_deriv(gate.theta), bit(qubit)),
        GateKind::Xx { a, b } => apply_gate4(&mut out, &xx_deriv(gate.theta), bit(a), bit(b)),
        GateKind::Crx { control, target } => {
            apply_gate4(&mut out, &crx_deriv(gate.theta), bit(control), bit(target))
        }
    }
    out
}

/// H|ψ⟩ for the readout observable H = u₀·Z₀ + u₁·Z₂ (diagonal).
fn observable_apply(state: &StateVector, upstream: &[f64; 2]) -> ComplexTensor {
    let (b0, b2) = (bit(0), bit(2));
    let mut out = state.amp.clone();
    for i in 0..DIM {
        let z0 = if i & b0 == 0 { 1.0 } else { -1.0 };
        let z2 = if i & b2 == 0 { 1.0 } else { -1.0 };
        let w = upstream[0] * z0 + upstream[1] * z2;
        out.re[i] *= w;
        out.im[i] *= w;
    }
    out
}

/// Exact adjoint gradient of E = upstream · (⟨Z₀⟩, ⟨Z₂⟩).
///
/// Forward to |ψ⟩, seed λ = H|ψ⟩, then sweep the circuit backwards:
/// dE/dθₖ = 2·Re⟨λₖ| dUₖ |ψₖ₋₁⟩ with both vectors unwound gate by gate.
pub fn head_gradient(
    x: &[f64; N_QUBITS],
    params: &QuantumHeadParams,
    upstream: &[f64; 2],
    opts: &HeadOptions,
) -> HeadGradient {
    let mut grad = HeadGradient::zeros();
    if upstream[0] == 0.0 && upstream[1] == 0.0 {
        return grad;
    }
    let circuit = build_circuit(x, params, opts);
    let mut psi = StateVector::zero();
    for gate in &circuit {
        apply_gate(&mut psi, gate);
    }
    let mut lambda = StateVector {
        amp: observable_apply(&psi, upstream),
    };
    let mut phi = psi;
    for gate in circuit.iter().rev() {
        apply_inverse(&mut phi, gate);
        let dpsi = apply_derivative(&phi, gate);
        let inner: Complex64 = lambda.amp.inner(&dpsi);
        let g = 2.0 * inner.re;
        match gate.source {
            ParamSource::Input(j) => grad.d_input[j] += g,
            ParamSource::Angle(k) => grad.d_angles[k] += g,
        }
        apply_inverse(&mut lambda, gate);
    }
    grad
}

/// Parameter-shift gradients for the 28 trainable angles.
///
/// Rotations and Ising XX gates are generated by an involution, so the
/// two-term rule ½[f(θ+π/2) − f(θ−π/2)] is exact. Controlled-RX has
/// generator spectrum {0, ±1}, which needs the four-term rule with shifts
/// ±π/2 and ±3π/2.
pub fn parameter_shift_gradient(
    x: &[f64; N_QUBITS],
    params: &QuantumHeadParams,
    upstream: &[f64; 2],
    opts: &HeadOptions,
) -> [f64; HEAD_ANGLES] {
    let eval = |flat: &[f64; HEAD_ANGLES]| -> f64 {
        let p = QuantumHeadParams::from_flat(flat);
        let out = run_head(x, &p, opts);
        upstream[0] * out[0] + upstream[1] * out[1]
    };
    let base = params.to_flat();
    let mut grads = [0.0; HEAD_ANGLES];
    let half_pi = std::f64::consts::FRAC_PI_2;
    let n_angles = if opts.use_se { HEAD_ANGLES } else { 16 };
    for k in 0..n_angles {
        let shifted = |delta: f64| -> f64 {
            let mut flat = base;
            flat[k] += delta;
            eval(&flat)
        };
        if k < 16 {
            grads[k] = (shifted(half_pi) - shifted(-half_pi)) / 2.0;
        } else {
            // Four-term rule: (√2±1)/(4√2) coefficients.
            let sqrt2 = std::f64::consts::SQRT_2;
            let c_near = (sqrt2 + 1.0) / (4.0 * sqrt2);
            let c_far = (sqrt2 - 1.0) / (4.0 * sqrt2);
            grads[k] = c_near * (shifted(half_pi) - shifted(-half_pi))
                - c_far * (shifted(3.0 * half_pi) - shifted(-3.0 * half_pi));
        }
    }
    grads
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1.0)
    }

    fn fd_angle_grad(
        x: &[f64; 4],
        params: &QuantumHeadParams,
        upstream: &[f64; 2],
        opts: &HeadOptions,
        k: usize,
        h: f64,
    ) -> f64 {
        let eval = |flat: &[f64; HEAD_ANGLES]| {
            let p = QuantumHeadParams::from_flat(flat);
            let out = run_head(x, &p, opts);
            upstream[0] * out[0] + upstream[1] * out[1]
        };
        let base = params.to_flat();
        let mut up = base;
        let mut dn = base;
        up[k] += h;
        dn[k] -= h;
        (eval(&up) - eval(&dn)) / (2.0 * h)
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let p = QuantumHeadParams::random_init(&mut rng);
        let g = head_gradient(&[0.3, 0.1, -0.7, 1.0], &p, &[0.0, 0.0], &HeadOptions::default());
        assert!(g.d_input.iter().all(|&v| v == 0.0));
        assert!(g.d_angles.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_angle_matches_two_term_shift() {
        // One FE angle at a time, everything else zero.
        let opts = HeadOptions::default();
        let x = [0.4, -0.2, 0.9, 0.05];
        let upstream = [0.8, -0.5];
        for k in 0..16 {
            let mut flat = [0.0; HEAD_ANGLES];
            flat[k] = 0.77;
            let p = QuantumHeadParams::from_flat(&flat);
            let adj = head_gradient(&x, &p, &upstream, &opts);
            let shift = parameter_shift_gradient(&x, &p, &upstream, &opts);
            assert!(
                rel_err(adj.d_angles[k], shift[k]) < 1e-12,
                "angle {k}: adjoint {} vs shift {}",
                adj.d_angles[k],
                shift[k]
            );
        }
    }

    #[test]
    fn triple_agreement_on_random_configurations() {
        let mut rng = ChaCha12Rng::seed_from_u64(2024);
        let opts = HeadOptions::default();
        for _ in 0..10 {
            let p = QuantumHeadParams::random_init(&mut rng);
            let x = [
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            ];
            let upstream = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let adj = head_gradient(&x, &p, &upstream, &opts);
            let shift = parameter_shift_gradient(&x, &p, &upstream, &opts);
            for k in 0..HEAD_ANGLES {
                let fd = fd_angle_grad(&x, &p, &upstream, &opts, k, 1e-5);
                assert!(rel_err(adj.d_angles[k], shift[k]) < 1e-10, "angle {k}");
                assert!(
                    rel_err(adj.d_angles[k], fd) < 1e-6,
                    "angle {k}: adjoint {} vs fd {}",
                    adj.d_angles[k],
                    fd
                );
            }
        }
    }

    #[test]
    fn input_gradients_match_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let opts = HeadOptions::default();
        let p = QuantumHeadParams::random_init(&mut rng);
        let x = [0.6, -1.1, 0.2, 1.4];
        let upstream = [0.3, 0.9];
        let adj = head_gradient(&x, &p, &upstream, &opts);
        let h = 1e-5;
        for j in 0..4 {
            let eval = |xs: [f64; 4]| {
                let out = run_head(&xs, &p, &opts);
                upstream[0] * out[0] + upstream[1] * out[1]
            };
            let mut up = x;
            let mut dn = x;
            up[j] += h;
            dn[j] -= h;
            let fd = (eval(up) - eval(dn)) / (2.0 * h);
            assert!(rel_err(adj.d_input[j], fd) < 1e-6, "input {j}");
        }
    }

    #[test]
    fn no_se_gradients_skip_crx_angles() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let p = QuantumHeadParams::random_init(&mut rng);
        let opts = HeadOptions {
            use_se: false,
            pairing: super::super::XxPairing::Adjacent,
        };
        let g = head_gradient(&[0.1, 0.2, 0.3, 0.4], &p, &[1.0, 1.0], &opts);
        assert!(g.d_angles[16..].iter().all(|&v| v == 0.0));
    }
}
