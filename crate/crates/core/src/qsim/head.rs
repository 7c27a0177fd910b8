//! Quantum head circuits: angle embedding → FE module → SE module →
//! Pauli-Z readout on qubits 0 and 2.
//!
//! The FE module stacks RY, XX, RX, XX, RY layers (16 angles); the SE module
//! stacks four CRXMs, each wiring one control qubit to the other three
//! targets in ascending order (12 angles). 16 independently parameterized
//! heads of 4 qubits each give the 64-qubit budget.

use rand::Rng;

use super::{angle_embed, StateVector, N_QUBITS};
use crate::{Error, Result};

pub const N_HEADS: usize = 16;
pub const FE_ANGLES: usize = 16;
pub const SE_ANGLES: usize = 12;
pub const HEAD_ANGLES: usize = FE_ANGLES + SE_ANGLES;

/// Which qubit pairs the two Ising XX layers couple. The contiguous
/// register reshape reads as adjacent disjoint pairs; the alternative is
/// kept as a sensitivity knob.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XxPairing {
    /// (0,1), (2,3)
    Adjacent,
    /// (0,2), (1,3)
    Interleaved,
}

impl XxPairing {
    pub fn pairs(self) -> [(usize, usize); 2] {
        match self {
            XxPairing::Adjacent => [(0, 1), (2, 3)],
            XxPairing::Interleaved => [(0, 2), (1, 3)],
        }
    }
}

impl Default for XxPairing {
    fn default() -> Self {
        XxPairing::Adjacent
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HeadOptions {
    pub use_se: bool,
    pub pairing: XxPairing,
}

impl Default for HeadOptions {
    fn default() -> Self {
        HeadOptions {
            use_se: true,
            pairing: XxPairing::Adjacent,
        }
    }
}

/// The 28 trainable angles of one quantum head. Heads never share
/// parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumHeadParams {
    pub fe_ry1: [f64; 4],
    pub fe_xx1: [f64; 2],
    pub fe_rx: [f64; 4],
    pub fe_xx2: [f64; 2],
    pub fe_ry2: [f64; 4],
    pub se_crx: [f64; 12],
}

impl QuantumHeadParams {
    pub fn zeros() -> Self {
        QuantumHeadParams {
            fe_ry1: [0.0; 4],
            fe_xx1: [0.0; 2],
            fe_rx: [0.0; 4],
            fe_xx2: [0.0; 2],
            fe_ry2: [0.0; 4],
            se_crx: [0.0; 12],
        }
    }

    /// Near-identity start: angles uniform in [-π/10, π/10].
    pub fn random_init(rng: &mut impl Rng) -> Self {
        let bound = std::f64::consts::PI / 10.0;
        let mut flat = [0.0; HEAD_ANGLES];
        for v in &mut flat {
            *v = rng.gen_range(-bound..bound);
        }
        Self::from_flat(&flat)
    }

    /// Flat layout: fe_ry1 | fe_xx1 | fe_rx | fe_xx2 | fe_ry2 | se_crx.
    pub fn from_flat(flat: &[f64; HEAD_ANGLES]) -> Self {
        let mut p = QuantumHeadParams::zeros();
        p.fe_ry1.copy_from_slice(&flat[0..4]);
        p.fe_xx1.copy_from_slice(&flat[4..6]);
        p.fe_rx.copy_from_slice(&flat[6..10]);
        p.fe_xx2.copy_from_slice(&flat[10..12]);
        p.fe_ry2.copy_from_slice(&flat[12..16]);
        p.se_crx.copy_from_slice(&flat[16..28]);
        p
    }

    pub fn to_flat(&self) -> [f64; HEAD_ANGLES] {
        let mut flat = [0.0; HEAD_ANGLES];
        flat[0..4].copy_from_slice(&self.fe_ry1);
        flat[4..6].copy_from_slice(&self.fe_xx1);
        flat[6..10].copy_from_slice(&self.fe_rx);
        flat[10..12].copy_from_slice(&self.fe_xx2);
        flat[12..16].copy_from_slice(&self.fe_ry2);
        flat[16..28].copy_from_slice(&self.se_crx);
        flat
    }

    pub fn validate(&self) -> Result<()> {
        if self.to_flat().iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::domain("non-finite quantum head angle"))
        }
    }
}

/// Parameters of all 16 heads (448 angles with SE, 256 without).
#[derive(Debug, Clone, PartialEq)]
pub struct QfrbParams {
    pub heads: Vec<QuantumHeadParams>,
}

impl QfrbParams {
    pub fn zeros() -> Self {
        QfrbParams {
            heads: vec![QuantumHeadParams::zeros(); N_HEADS],
        }
    }

    pub fn random_init(rng: &mut impl Rng) -> Self {
        QfrbParams {
            heads: (0..N_HEADS).map(|_| QuantumHeadParams::random_init(rng)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateKind {
    Rx { qubit: usize },
    Ry { qubit: usize },
    Xx { a: usize, b: usize },
    Crx { control: usize, target: usize },
}

/// Where a gate angle comes from: an input component or a trainable angle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamSource {
    Input(usize),
    Angle(usize),
}

#[derive(Debug, Clone, Copy)]
pub struct CircuitGate {
    pub kind: GateKind,
    pub theta: f64,
    pub source: ParamSource,
}

/// SE wiring per Table-style CRXM(ijk|l) rows: control l = 0..3, targets in
/// ascending index order.
const CRXM_LAYOUT: [(usize, [usize; 3]); 4] = [
    (0, [1, 2, 3]),
    (1, [0, 2, 3]),
    (2, [0, 1, 3]),
    (3, [0, 1, 2]),
];

/// Build the full per-head gate list: embedding, FE layers, optionally SE.
pub fn build_circuit(
    x: &[f64; N_QUBITS],
    params: &QuantumHeadParams,
    opts: &HeadOptions,
) -> Vec<CircuitGate> {
    let pairs = opts.pairing.pairs();
    let mut gates = Vec::with_capacity(N_QUBITS + FE_ANGLES + SE_ANGLES);
    for (q, &xi) in x.iter().enumerate() {
        gates.push(CircuitGate {
            kind: GateKind::Rx { qubit: q },
            theta: xi,
            source: ParamSource::Input(q),
        });
    }
    let mut angle = 0usize;
    let push_rot =
        |gates: &mut Vec<CircuitGate>, kind: GateKind, theta: f64, angle: &mut usize| {
            gates.push(CircuitGate {
                kind,
                theta,
                source: ParamSource::Angle(*angle),
            });
            *angle += 1;
        };
    for q in 0..N_QUBITS {
        push_rot(&mut gates, GateKind::Ry { qubit: q }, params.fe_ry1[q], &mut angle);
    }
    for (i, &(a, b)) in pairs.iter().enumerate() {
        push_rot(&mut gates, GateKind::Xx { a, b }, params.fe_xx1[i], &mut angle);
    }
    for q in 0..N_QUBITS {
        push_rot(&mut gates, GateKind::Rx { qubit: q }, params.fe_rx[q], &mut angle);
    }
    for (i, &(a, b)) in pairs.iter().enumerate() {
        push_rot(&mut gates, GateKind::Xx { a, b }, params.fe_xx2[i], &mut angle);
    }
    for q in 0..N_QUBITS {
        push_rot(&mut gates, GateKind::Ry { qubit: q }, params.fe_ry2[q], &mut angle);
    }
    if opts.use_se {
        let mut k = 0usize;
        for &(control, targets) in &CRXM_LAYOUT {
            for &target in &targets {
                push_rot(
                    &mut gates,
                    GateKind::Crx { control, target },
                    params.se_crx[k],
                    &mut angle,
                );
                k += 1;
            }
        }
    }
    gates
}

pub(crate) fn apply_gate(state: &mut StateVector, gate: &CircuitGate) {
    apply_kind(state, gate.kind, gate.theta);
}

pub(crate) fn apply_kind(state: &mut StateVector, kind: GateKind, theta: f64) {
    let r = match kind {
        GateKind::Rx { qubit } => state.apply_rx(qubit, theta),
        GateKind::Ry { qubit } => state.apply_ry(qubit, theta),
        GateKind::Xx { a, b } => state.apply_xx(a, b, theta),
        GateKind::Crx { control, target } => state.apply_crx(control, target, theta),
    };
    r.expect("circuit gates use validated qubit indices");
}

/// FE module: RY layer → XX layer → RX layer → XX layer → RY layer.
pub fn run_fe(state: &mut StateVector, params: &QuantumHeadParams, pairing: XxPairing) {
    let pairs = pairing.pairs();
    for q in 0..N_QUBITS {
        state.apply_ry(q, params.fe_ry1[q]).unwrap();
    }
    for (i, &(a, b)) in pairs.iter().enumerate() {
        state.apply_xx(a, b, params.fe_xx1[i]).unwrap();
    }
    for q in 0..N_QUBITS {
        state.apply_rx(q, params.fe_rx[q]).unwrap();
    }
    for (i, &(a, b)) in pairs.iter().enumerate() {
        state.apply_xx(a, b, params.fe_xx2[i]).unwrap();
    }
    for q in 0..N_QUBITS {
        state.apply_ry(q, params.fe_ry2[q]).unwrap();
    }
}

/// SE module: CRXM(123|0), CRXM(023|1), CRXM(013|2), CRXM(012|3), targets
/// ascending within each CRXM. CRX gates sharing a control commute, so the
/// order is fixed purely for bit-reproducibility.
pub fn run_se(state: &mut StateVector, params: &QuantumHeadParams) {
    let mut k = 0usize;
    for &(control, targets) in &CRXM_LAYOUT {
        for &target in &targets {
            state.apply_crx(control, target, params.se_crx[k]).unwrap();
            k += 1;
        }
    }
}

/// Full head: embed → FE → (SE) → (⟨Z⟩ qubit 0, ⟨Z⟩ qubit 2).
pub fn run_head(x: &[f64; N_QUBITS], params: &QuantumHeadParams, opts: &HeadOptions) -> [f64; 2] {
    let mut state = angle_embed(x);
    run_fe(&mut state, params, opts.pairing);
    if opts.use_se {
        run_se(&mut state, params);
    }
    [state.measure_z(0).unwrap(), state.measure_z(2).unwrap()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn zero_fe_angles_is_identity() {
        let p = QuantumHeadParams::zeros();
        let mut s = angle_embed(&[0.8, -0.3, 1.9, 0.1]);
        let before = s.clone();
        run_fe(&mut s, &p, XxPairing::Adjacent);
        let dev: f64 = before
            .amp
            .re
            .iter()
            .zip(&s.amp.re)
            .chain(before.amp.im.iter().zip(&s.amp.im))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(dev < 1e-15);
    }

    #[test]
    fn zero_se_angles_is_identity() {
        let p = QuantumHeadParams::zeros();
        let mut s = angle_embed(&[0.5, 0.5, -0.5, 2.0]);
        let before = s.clone();
        run_se(&mut s, &p);
        assert_eq!(before, s);
    }

    #[test]
    fn se_on_all_zero_state_is_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let p = QuantumHeadParams::random_init(&mut rng);
        let mut s = StateVector::zero();
        run_se(&mut s, &p);
        // All controls are |0⟩, so nothing happens.
        assert!((s.get(0).re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_param_head_is_cosine_readout() {
        let p = QuantumHeadParams::zeros();
        let opts = HeadOptions::default();
        assert_eq!(run_head(&[0.0; 4], &p, &opts), [1.0, 1.0]);
        let out = run_head(
            &[std::f64::consts::PI, 0.0, std::f64::consts::PI, 0.0],
            &p,
            &opts,
        );
        assert!((out[0] + 1.0).abs() < 1e-15 && (out[1] + 1.0).abs() < 1e-15);
        let x = [1.234, -0.77, 0.31, 2.9];
        let out = run_head(&x, &p, &opts);
        assert!((out[0] - x[0].cos()).abs() < 1e-12);
        assert!((out[1] - x[2].cos()).abs() < 1e-12);
    }

    #[test]
    fn head_outputs_bounded() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        for _ in 0..50 {
            let p = QuantumHeadParams::random_init(&mut rng);
            let x = [
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            ];
            let out = run_head(&x, &p, &HeadOptions::default());
            assert!(out.iter().all(|v| (-1.0 - 1e-12..=1.0 + 1e-12).contains(v)));
        }
    }

    #[test]
    fn flat_round_trip() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let p = QuantumHeadParams::random_init(&mut rng);
        assert_eq!(QuantumHeadParams::from_flat(&p.to_flat()), p);
    }

    #[test]
    fn circuit_layout_counts() {
        let p = QuantumHeadParams::zeros();
        let x = [0.0; 4];
        let with_se = build_circuit(&x, &p, &HeadOptions::default());
        assert_eq!(with_se.len(), 4 + FE_ANGLES + SE_ANGLES);
        let no_se = build_circuit(
            &x,
            &p,
            &HeadOptions {
                use_se: false,
                pairing: XxPairing::Adjacent,
            },
        );
        assert_eq!(no_se.len(), 4 + FE_ANGLES);
    }

}
