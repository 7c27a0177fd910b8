//! Differentiable computation substrate.
//!
//! Every trainable module builds its forward pass on [`Tape`], a small eager
//! reverse-mode autodiff graph over dense row-major `f64` tensors, and
//! obtains exact gradients from [`Tape::backward`]. Complex amplitudes live
//! in [`ComplexTensor`]; the Adam optimizer operates on named parameter
//! groups.

pub mod adam;
pub mod complex;
pub mod tape;
pub mod tensor;

pub use adam::{AdamHyper, AdamState};
pub use complex::{apply_gate2, apply_gate4, CMat, ComplexTensor};
pub use tape::{CustomOp, FwdCtx, Gradients, Tape, Var};
pub use tensor::Tensor;

/// Mix a list of stream labels into one RNG seed (splitmix64 chain).
/// Deterministic and order-sensitive; used to derive independent
/// sub-streams for shuffling, dropout, and per-record synthesis.
pub fn derive_rng_seed(parts: &[u64]) -> u64 {
    let mut acc: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        acc = splitmix64(acc ^ p);
    }
    acc
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
