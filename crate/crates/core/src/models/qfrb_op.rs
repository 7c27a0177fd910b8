//! The quantum feature-refinement bank as a single differentiable graph op.
//!
//! Input 0 is the 1×64 token; inputs 1..=16 are the per-head angle vectors
//! (28 each). The token splits contiguously into sixteen 4-vectors, head i
//! consuming entries 4i..4i+4; outputs concatenate to the 1×32 feature s.
//! Backward runs the exact adjoint gradient per head.

use crate::numerics::{CustomOp, Tensor};
use crate::qsim::{
    head_gradient, run_head, HeadOptions, QuantumHeadParams, XxPairing, HEAD_ANGLES, N_HEADS,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct QfrbOp {
    pub use_se: bool,
    pub pairing: XxPairing,
}

impl QfrbOp {
    fn options(&self) -> HeadOptions {
        HeadOptions {
            use_se: self.use_se,
            pairing: self.pairing,
        }
    }

    fn head_inputs(token: &Tensor, i: usize) -> [f64; 4] {
        let d = token.data();
        [d[4 * i], d[4 * i + 1], d[4 * i + 2], d[4 * i + 3]]
    }

    fn head_params(angles: &Tensor) -> QuantumHeadParams {
        let mut flat = [0.0; HEAD_ANGLES];
        flat.copy_from_slice(angles.data());
        QuantumHeadParams::from_flat(&flat)
    }
}

impl CustomOp for QfrbOp {
    fn name(&self) -> &'static str {
        "qfrb"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        if inputs.len() != 1 + N_HEADS {
            return Err(Error::domain(format!(
                "qfrb wants 1 token + {N_HEADS} head tensors, got {}",
                inputs.len()
            )));
        }
        let token = inputs[0];
        if token.numel() != 4 * N_HEADS {
            return Err(Error::ShapeMismatch {
                op: "qfrb",
                left: token.shape().to_vec(),
                right: vec![1, 4 * N_HEADS],
            });
        }
        let opts = self.options();
        let mut out = vec![0.0; 2 * N_HEADS];
        for i in 0..N_HEADS {
            if inputs[1 + i].numel() != HEAD_ANGLES {
                return Err(Error::ShapeMismatch {
                    op: "qfrb",
                    left: inputs[1 + i].shape().to_vec(),
                    right: vec![HEAD_ANGLES],
                });
            }
            let x = Self::head_inputs(token, i);
            let params = Self::head_params(inputs[1 + i]);
            let s = run_head(&x, &params, &opts);
            out[2 * i] = s[0];
            out[2 * i + 1] = s[1];
        }
        Tensor::new(vec![1, 2 * N_HEADS], out)
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, upstream: &[f64]) -> Vec<Vec<f64>> {
        let token = inputs[0];
        let opts = self.options();
        let mut d_token = vec![0.0; token.numel()];
        let mut grads = Vec::with_capacity(1 + N_HEADS);
        grads.push(Vec::new()); // placeholder for the token slot
        for i in 0..N_HEADS {
            let x = Self::head_inputs(token, i);
            let params = Self::head_params(inputs[1 + i]);
            let up = [upstream[2 * i], upstream[2 * i + 1]];
            let g = head_gradient(&x, &params, &up, &opts);
            d_token[4 * i..4 * i + 4].copy_from_slice(&g.d_input);
            grads.push(g.d_angles.to_vec());
        }
        grads[0] = d_token;
        grads
    }
}

/// Run the bank outside a tape: t_DDM (64 values) → s (32 values).
pub fn qfrb_forward(
    token: &[f64],
    heads: &[QuantumHeadParams],
    use_se: bool,
    pairing: XxPairing,
) -> Result<Vec<f64>> {
    if token.len() != 4 * N_HEADS || heads.len() != N_HEADS {
        return Err(Error::domain(format!(
            "qfrb_forward wants a {}-vector and {N_HEADS} heads",
            4 * N_HEADS
        )));
    }
    let opts = HeadOptions { use_se, pairing };
    let mut out = Vec::with_capacity(2 * N_HEADS);
    for (i, params) in heads.iter().enumerate() {
        let x = [token[4 * i], token[4 * i + 1], token[4 * i + 2], token[4 * i + 3]];
        let s = run_head(&x, params, &opts);
        out.push(s[0]);
        out.push(s[1]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsim::QfrbParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn zero_angles_zero_token_give_ones() {
        let heads = QfrbParams::zeros();
        let s = qfrb_forward(&[0.0; 64], &heads.heads, true, XxPairing::Adjacent).unwrap();
        assert!(s.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn outputs_stay_in_z_range() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let heads = QfrbParams::random_init(&mut rng);
        let token: Vec<f64> = (0..64).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let s = qfrb_forward(&token, &heads.heads, true, XxPairing::Adjacent).unwrap();
        assert_eq!(s.len(), 32);
        assert!(s.iter().all(|&v| (-1.0..=1.0).contains(&v)));
    }

    #[test]
    fn head_independence_is_bit_exact() {
        let mut rng = ChaCha12Rng::seed_from_u64(22);
        let mut heads = QfrbParams::random_init(&mut rng);
        let token: Vec<f64> = (0..64).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let base = qfrb_forward(&token, &heads.heads, true, XxPairing::Adjacent).unwrap();
        // Perturb head 5 and check every other head's pair is unchanged bitwise.
        heads.heads[5].fe_rx[2] += 0.37;
        heads.heads[5].se_crx[7] -= 1.1;
        let bumped = qfrb_forward(&token, &heads.heads, true, XxPairing::Adjacent).unwrap();
        for i in 0..N_HEADS {
            if i == 5 {
                assert_ne!(&base[2 * i..2 * i + 2], &bumped[2 * i..2 * i + 2]);
            } else {
                assert_eq!(&base[2 * i..2 * i + 2], &bumped[2 * i..2 * i + 2]);
            }
        }
    }

    #[test]
    fn se_at_zero_matches_no_se() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let mut heads = QfrbParams::random_init(&mut rng);
        for h in &mut heads.heads {
            h.se_crx = [0.0; 12];
        }
        let token: Vec<f64> = (0..64).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let with_se = qfrb_forward(&token, &heads.heads, true, XxPairing::Adjacent).unwrap();
        let without = qfrb_forward(&token, &heads.heads, false, XxPairing::Adjacent).unwrap();
        assert_eq!(with_se, without);
    }
}
