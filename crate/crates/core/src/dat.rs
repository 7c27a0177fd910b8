//! DDM-aware transformer encoder.
//!
//! A normalized DDM is trimmed to 16×10, cut into forty 2×2 patches, and
//! projected to 64-dim tokens. The CLS token is fused with a projection of
//! the central 3×5 block through a learnable convex combination, a single
//! CLS-query attention layer mixes the patch tokens into it, and a
//! feed-forward block with residual produces the 64-dim output token.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ddm::{central_region, DelayDopplerMap, DOPPLER_BINS};
use crate::numerics::{FwdCtx, Tape, Tensor, Var};
use crate::{Error, Result};

pub const PATCH_SIZE: usize = 2;
pub const PATCH_DIM: usize = PATCH_SIZE * PATCH_SIZE;
pub const PATCH_GRID_ROWS: usize = 8;
pub const PATCH_GRID_COLS: usize = 5;
pub const N_PATCHES: usize = PATCH_GRID_ROWS * PATCH_GRID_COLS;
pub const TOKEN_DIM: usize = 64;
pub const SEQ_LEN: usize = N_PATCHES + 1;
pub const CENTRAL_DIM: usize = 15;

/// Architecture knobs that are not trainable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatConfig {
    /// Attention head count; 1 follows the single-query formulation.
    pub n_heads: usize,
    pub fnn_hidden: usize,
    pub dropout_rate: f64,
}

impl Default for DatConfig {
    fn default() -> Self {
        DatConfig {
            n_heads: 1,
            fnn_hidden: 128,
            dropout_rate: 0.1,
        }
    }
}

impl DatConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_heads == 0 || TOKEN_DIM % self.n_heads != 0 {
            return Err(Error::domain(format!(
                "n_heads {} must divide the token width {TOKEN_DIM}",
                self.n_heads
            )));
        }
        if self.fnn_hidden == 0 {
            return Err(Error::domain("fnn_hidden must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::domain("dropout_rate must be in [0, 1)"));
        }
        Ok(())
    }
}

/// Trainable transformer parameters.
#[derive(Debug, Clone)]
pub struct DatParams {
    pub patch_proj: Tensor,  // 4×64
    pub cls_token: Tensor,   // 1×64
    pub pos_embed: Tensor,   // 41×64
    pub alpha_raw: Tensor,   // 1×1; α = sigmoid(alpha_raw)
    pub central_w: Tensor,   // 15×64
    pub central_b: Tensor,   // 1×64
    pub wq: Tensor,          // 64×64
    pub wk: Tensor,          // 64×64
    pub wv: Tensor,          // 64×64
    pub ln1_scale: Tensor,   // 1×64
    pub ln1_shift: Tensor,   // 1×64
    pub ln2_scale: Tensor,   // 1×64
    pub ln2_shift: Tensor,   // 1×64
    pub fnn_w1: Tensor,      // 64×128
    pub fnn_b1: Tensor,      // 1×128
    pub fnn_w2: Tensor,      // 128×64
    pub fnn_b2: Tensor,      // 1×64
    pub config: DatConfig,
}

fn normal_tensor(rng: &mut impl Rng, rows: usize, cols: usize, std: f64) -> Tensor {
    let dist = Normal::new(0.0, std).expect("valid normal");
    let data: Vec<f64> = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Tensor::new(vec![rows, cols], data).expect("finite init")
}

impl DatParams {
    /// Projection matrices from N(0, 1/√64); CLS token and position
    /// embedding start at zero; α starts at 0.5 (raw 0).
    pub fn init(rng: &mut impl Rng, config: DatConfig) -> Result<Self> {
        config.validate()?;
        let std = 1.0 / (TOKEN_DIM as f64).sqrt();
        Ok(DatParams {
            patch_proj: normal_tensor(rng, PATCH_DIM, TOKEN_DIM, std),
            cls_token: Tensor::zeros(vec![1, TOKEN_DIM]),
            pos_embed: Tensor::zeros(vec![SEQ_LEN, TOKEN_DIM]),
            alpha_raw: Tensor::zeros(vec![1, 1]),
            central_w: normal_tensor(rng, CENTRAL_DIM, TOKEN_DIM, std),
            central_b: Tensor::zeros(vec![1, TOKEN_DIM]),
            wq: normal_tensor(rng, TOKEN_DIM, TOKEN_DIM, std),
            wk: normal_tensor(rng, TOKEN_DIM, TOKEN_DIM, std),
            wv: normal_tensor(rng, TOKEN_DIM, TOKEN_DIM, std),
            ln1_scale: Tensor::new(vec![1, TOKEN_DIM], vec![1.0; TOKEN_DIM])?,
            ln1_shift: Tensor::zeros(vec![1, TOKEN_DIM]),
            ln2_scale: Tensor::new(vec![1, TOKEN_DIM], vec![1.0; TOKEN_DIM])?,
            ln2_shift: Tensor::zeros(vec![1, TOKEN_DIM]),
            fnn_w1: normal_tensor(rng, TOKEN_DIM, config.fnn_hidden, std),
            fnn_b1: Tensor::zeros(vec![1, config.fnn_hidden]),
            fnn_w2: normal_tensor(rng, config.fnn_hidden, TOKEN_DIM, std),
            fnn_b2: Tensor::zeros(vec![1, TOKEN_DIM]),
            config,
        })
    }

    /// Rebuild from named tensors (checkpoint load); shapes are validated
    /// by the `fetch` callback.
    pub fn from_parts<F>(mut fetch: F, config: DatConfig) -> Result<Self>
    where
        F: FnMut(&str, &[usize]) -> Result<Tensor>,
    {
        config.validate()?;
        Ok(DatParams {
            patch_proj: fetch("dat.patch_proj", &[PATCH_DIM, TOKEN_DIM])?,
            cls_token: fetch("dat.cls_token", &[1, TOKEN_DIM])?,
            pos_embed: fetch("dat.pos_embed", &[SEQ_LEN, TOKEN_DIM])?,
            alpha_raw: fetch("dat.alpha_raw", &[1, 1])?,
            central_w: fetch("dat.central_proj.weight", &[CENTRAL_DIM, TOKEN_DIM])?,
            central_b: fetch("dat.central_proj.bias", &[1, TOKEN_DIM])?,
            wq: fetch("dat.wq", &[TOKEN_DIM, TOKEN_DIM])?,
            wk: fetch("dat.wk", &[TOKEN_DIM, TOKEN_DIM])?,
            wv: fetch("dat.wv", &[TOKEN_DIM, TOKEN_DIM])?,
            ln1_scale: fetch("dat.ln1.scale", &[1, TOKEN_DIM])?,
            ln1_shift: fetch("dat.ln1.shift", &[1, TOKEN_DIM])?,
            ln2_scale: fetch("dat.ln2.scale", &[1, TOKEN_DIM])?,
            ln2_shift: fetch("dat.ln2.shift", &[1, TOKEN_DIM])?,
            fnn_w1: fetch("dat.fnn.w1", &[TOKEN_DIM, config.fnn_hidden])?,
            fnn_b1: fetch("dat.fnn.b1", &[1, config.fnn_hidden])?,
            fnn_w2: fetch("dat.fnn.w2", &[config.fnn_hidden, TOKEN_DIM])?,
            fnn_b2: fetch("dat.fnn.b2", &[1, TOKEN_DIM])?,
            config,
        })
    }

    /// Stable (name, tensor) listing used by the optimizer and checkpoints.
    pub fn entries(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("dat.patch_proj".into(), &self.patch_proj),
            ("dat.cls_token".into(), &self.cls_token),
            ("dat.pos_embed".into(), &self.pos_embed),
            ("dat.alpha_raw".into(), &self.alpha_raw),
            ("dat.central_proj.weight".into(), &self.central_w),
            ("dat.central_proj.bias".into(), &self.central_b),
            ("dat.wq".into(), &self.wq),
            ("dat.wk".into(), &self.wk),
            ("dat.wv".into(), &self.wv),
            ("dat.ln1.scale".into(), &self.ln1_scale),
            ("dat.ln1.shift".into(), &self.ln1_shift),
            ("dat.ln2.scale".into(), &self.ln2_scale),
            ("dat.ln2.shift".into(), &self.ln2_shift),
            ("dat.fnn.w1".into(), &self.fnn_w1),
            ("dat.fnn.b1".into(), &self.fnn_b1),
            ("dat.fnn.w2".into(), &self.fnn_w2),
            ("dat.fnn.b2".into(), &self.fnn_b2),
        ]
    }

    pub fn entries_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("dat.patch_proj".into(), &mut self.patch_proj),
            ("dat.cls_token".into(), &mut self.cls_token),
            ("dat.pos_embed".into(), &mut self.pos_embed),
            ("dat.alpha_raw".into(), &mut self.alpha_raw),
            ("dat.central_proj.weight".into(), &mut self.central_w),
            ("dat.central_proj.bias".into(), &mut self.central_b),
            ("dat.wq".into(), &mut self.wq),
            ("dat.wk".into(), &mut self.wk),
            ("dat.wv".into(), &mut self.wv),
            ("dat.ln1.scale".into(), &mut self.ln1_scale),
            ("dat.ln1.shift".into(), &mut self.ln1_shift),
            ("dat.ln2.scale".into(), &mut self.ln2_scale),
            ("dat.ln2.shift".into(), &mut self.ln2_shift),
            ("dat.fnn.w1".into(), &mut self.fnn_w1),
            ("dat.fnn.b1".into(), &mut self.fnn_b1),
            ("dat.fnn.w2".into(), &mut self.fnn_w2),
            ("dat.fnn.b2".into(), &mut self.fnn_b2),
        ]
    }
}

/// Parameter nodes of one bound forward graph, in `entries()` order.
pub struct DatVars {
    pub vars: Vec<Var>,
}

impl DatVars {
    fn get(&self, i: usize) -> Var {
        self.vars[i]
    }
}

/// Insert every DAT parameter as a trainable leaf.
pub fn bind(tape: &mut Tape, params: &DatParams) -> DatVars {
    let vars = params
        .entries()
        .into_iter()
        .map(|(_, t)| tape.leaf(t.clone()))
        .collect();
    DatVars { vars }
}

/// Trim the (normalized) DDM to 16×10 and cut it into forty 2×2 patches,
/// scanned row-major over an 8×5 patch grid; each patch flattens row-major.
pub fn patchify(ddm: &DelayDopplerMap) -> Tensor {
    let mut data = vec![0.0; N_PATCHES * PATCH_DIM];
    for k in 0..N_PATCHES {
        let r0 = PATCH_SIZE * (k / PATCH_GRID_COLS);
        let c0 = PATCH_SIZE * (k % PATCH_GRID_COLS);
        for dr in 0..PATCH_SIZE {
            for dc in 0..PATCH_SIZE {
                data[k * PATCH_DIM + dr * PATCH_SIZE + dc] = ddm.get(r0 + dr, c0 + dc);
            }
        }
    }
    debug_assert!(DOPPLER_BINS - 1 == PATCH_GRID_COLS * PATCH_SIZE);
    Tensor::new(vec![N_PATCHES, PATCH_DIM], data).expect("patch layout is fixed")
}

/// Model-ready view of one record: patch matrix plus flattened central block.
#[derive(Debug, Clone)]
pub struct PreppedDdm {
    pub patches: Tensor,  // 40×4
    pub central: Tensor,  // 1×15
}

/// Normalize and slice a DDM for the encoder.
pub fn prep(ddm: &DelayDopplerMap) -> Result<PreppedDdm> {
    let normalized = crate::ddm::normalize(ddm)?;
    Ok(PreppedDdm {
        patches: patchify(&normalized),
        central: Tensor::row(central_region(&normalized).to_vec())?,
    })
}

pub struct DatOutput {
    /// 1×64 output token.
    pub t_ddm: Var,
    /// Per-head attention weight rows (1×40 each).
    pub attn: Vec<Var>,
}

// Indices into DatVars, matching `entries()` order.
const P_PATCH: usize = 0;
const P_CLS: usize = 1;
const P_POS: usize = 2;
const P_ALPHA: usize = 3;
const P_CW: usize = 4;
const P_CB: usize = 5;
const P_WQ: usize = 6;
const P_WK: usize = 7;
const P_WV: usize = 8;
const P_LN1S: usize = 9;
const P_LN1B: usize = 10;
const P_LN2S: usize = 11;
const P_LN2B: usize = 12;
const P_FW1: usize = 13;
const P_FB1: usize = 14;
const P_FW2: usize = 15;
const P_FB2: usize = 16;

/// Central-block embedding: d = GELU(W·x_central + b).
pub fn embed_central(tape: &mut Tape, vars: &DatVars, central: Var) -> Result<Var> {
    let lin = tape.matmul(central, vars.get(P_CW))?;
    let biased = tape.add(lin, vars.get(P_CB))?;
    tape.gelu(biased)
}

/// DDM-aware CLS token: (1-α)·c + α·d with α = sigmoid(alpha_raw).
pub fn ddm_aware_cls(tape: &mut Tape, vars: &DatVars, d: Var) -> Result<Var> {
    let alpha = tape.sigmoid(vars.get(P_ALPHA))?;
    let neg = tape.scale(alpha, -1.0)?;
    let one_minus = tape.add_const(neg, 1.0)?;
    let keep = tape.mul_scalar(one_minus, vars.get(P_CLS))?;
    let inject = tape.mul_scalar(alpha, d)?;
    tape.add(keep, inject)
}

/// Token sequence: (c_DDM ‖ P·L) + E.
pub fn build_sequence(tape: &mut Tape, vars: &DatVars, patches: Var, c_ddm: Var) -> Result<Var> {
    let projected = tape.matmul(patches, vars.get(P_PATCH))?;
    let seq = tape.concat_rows(&[c_ddm, projected])?;
    tape.add(seq, vars.get(P_POS))
}

/// Full encoder: returns the output token (row 0 after the FNN residual).
pub fn forward(
    tape: &mut Tape,
    vars: &DatVars,
    input: &PreppedDdm,
    config: &DatConfig,
    ctx: &mut FwdCtx,
) -> Result<DatOutput> {
    let patches = tape.constant(input.patches.clone());
    let central = tape.constant(input.central.clone());

    let d = embed_central(tape, vars, central)?;
    let c_ddm = ddm_aware_cls(tape, vars, d)?;
    let t_d = build_sequence(tape, vars, patches, c_ddm)?;

    // Layer norm feeds the attention projections; the residual uses the
    // pre-norm tokens.
    let normed = tape.layer_norm(t_d, vars.get(P_LN1S), vars.get(P_LN1B))?;
    let cls_ln = tape.slice_rows(normed, 0, 1)?;
    let local_ln = tape.slice_rows(normed, 1, SEQ_LEN)?;

    let q = tape.matmul(cls_ln, vars.get(P_WQ))?;
    let k = tape.matmul(local_ln, vars.get(P_WK))?;
    let v = tape.matmul(local_ln, vars.get(P_WV))?;

    let heads = config.n_heads;
    let dh = TOKEN_DIM / heads;
    let mut head_outs = Vec::with_capacity(heads);
    let mut attn = Vec::with_capacity(heads);
    for h in 0..heads {
        let (c0, c1) = (h * dh, (h + 1) * dh);
        let (qh, kh, vh) = if heads == 1 {
            (q, k, v)
        } else {
            (
                tape.slice_cols(q, c0, c1)?,
                tape.slice_cols(k, c0, c1)?,
                tape.slice_cols(v, c0, c1)?,
            )
        };
        let scores = tape.matmul_nt(qh, kh)?;
        let scaled = tape.scale(scores, 1.0 / (dh as f64).sqrt())?;
        let weights = tape.softmax_rows(scaled)?;
        let mixed = tape.matmul(weights, vh)?;
        attn.push(weights);
        head_outs.push(mixed);
    }
    let attn_out = if heads == 1 {
        head_outs[0]
    } else {
        tape.concat_cols(&head_outs)?
    };

    // Residual on the CLS row; patch rows pass through unchanged.
    let cls_pre = tape.slice_rows(t_d, 0, 1)?;
    let local_pre = tape.slice_rows(t_d, 1, SEQ_LEN)?;
    let cls_mixed = tape.add(attn_out, cls_pre)?;
    let t_d2 = tape.concat_rows(&[cls_mixed, local_pre])?;

    // FNN block with residual: out = T' + DO(LP(DO(GELU(LP(LN(T'))))))
    let normed2 = tape.layer_norm(t_d2, vars.get(P_LN2S), vars.get(P_LN2B))?;
    let h1 = tape.matmul(normed2, vars.get(P_FW1))?;
    let h1b = tape.add_row_vec(h1, vars.get(P_FB1))?;
    let g = tape.gelu(h1b)?;
    let g_do = tape.dropout(g, config.dropout_rate, ctx)?;
    let h2 = tape.matmul(g_do, vars.get(P_FW2))?;
    let h2b = tape.add_row_vec(h2, vars.get(P_FB2))?;
    let f_do = tape.dropout(h2b, config.dropout_rate, ctx)?;
    let out = tape.add(t_d2, f_do)?;

    let t_ddm = tape.slice_rows(out, 0, 1)?;
    Ok(DatOutput { t_ddm, attn })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ddm::DelayDopplerMap;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn test_params(seed: u64) -> DatParams {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        DatParams::init(&mut rng, DatConfig::default()).unwrap()
    }

    fn ramp_ddm() -> DelayDopplerMap {
        DelayDopplerMap::new((0..187).map(|i| i as f64).collect()).unwrap()
    }

    #[test]
    fn patchify_all_ones() {
        let d = DelayDopplerMap::new(vec![1.0; 187]).unwrap();
        let p = patchify(&d);
        assert_eq!(p.shape(), &[40, 4]);
        assert!(p.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn patchify_corner() {
        let mut d = DelayDopplerMap::zeros();
        d.set(0, 0, 1.0);
        let p = patchify(&d);
        assert_eq!(&p.data()[0..4], &[1.0, 0.0, 0.0, 0.0]);
        assert!(p.data()[4..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn patchify_ramp_index_oracle() {
        let p = patchify(&ramp_ddm());
        // Patch k covers rows {2⌊k/5⌋, 2⌊k/5⌋+1} and cols {2(k mod 5), 2(k mod 5)+1}.
        for k in 0..40 {
            let (r0, c0) = (2 * (k / 5), 2 * (k % 5));
            let expect = [
                (11 * r0 + c0) as f64,
                (11 * r0 + c0 + 1) as f64,
                (11 * (r0 + 1) + c0) as f64,
                (11 * (r0 + 1) + c0 + 1) as f64,
            ];
            assert_eq!(&p.data()[k * 4..k * 4 + 4], &expect);
        }
        // The trimmed last column (index 10) and last row (index 16) never appear.
        for &v in p.data() {
            let (r, c) = ((v as usize) / 11, (v as usize) % 11);
            assert!(r < 16 && c < 10);
        }
    }

    #[test]
    fn embed_central_matches_direct_recomputation() {
        let params = test_params(1);
        let mut tape = Tape::new();
        let vars = bind(&mut tape, &params);
        let x: Vec<f64> = (0..15).map(|i| (i as f64) * 0.1 - 0.7).collect();
        let xv = tape.constant(Tensor::row(x.clone()).unwrap());
        let d = embed_central(&mut tape, &vars, xv).unwrap();
        let got = tape.value(d);
        for j in 0..TOKEN_DIM {
            let mut acc = params.central_b.data()[j];
            for i in 0..15 {
                acc += x[i] * params.central_w.data()[i * TOKEN_DIM + j];
            }
            let want = 0.5 * acc * (1.0 + libm::erf(acc / std::f64::consts::SQRT_2));
            assert!((got.data()[j] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn ddm_aware_cls_limits_and_midpoint() {
        // Saturate alpha_raw to push α to each limit, then check the midpoint.
        for (raw, expect_c, expect_d) in [(-40.0, 1.0, 0.0), (40.0, 0.0, 1.0)] {
            let mut params = test_params(2);
            params.alpha_raw = Tensor::scalar(raw).unwrap();
            params.cls_token = Tensor::new(vec![1, 64], vec![2.0; 64]).unwrap();
            let mut tape = Tape::new();
            let vars = bind(&mut tape, &params);
            let d = tape.constant(Tensor::new(vec![1, 64], vec![-3.0; 64]).unwrap());
            let out = ddm_aware_cls(&mut tape, &vars, d).unwrap();
            let got = tape.value(out).data()[0];
            let want = expect_c * 2.0 + expect_d * (-3.0);
            assert!((got - want).abs() < 1e-12, "raw {raw}: {got} vs {want}");
        }
        let mut params = test_params(2);
        params.cls_token = Tensor::new(vec![1, 64], vec![2.0; 64]).unwrap();
        let mut tape = Tape::new();
        let vars = bind(&mut tape, &params);
        let d = tape.constant(Tensor::zeros(vec![1, 64]));
        let out = ddm_aware_cls(&mut tape, &vars, d).unwrap();
        // α = 0.5 at raw 0: midpoint of 2 and 0.
        assert!((tape.value(out).data()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sequence_assembly_cases() {
        // Zero patches and zero CLS leave exactly the position embedding.
        let mut params = test_params(3);
        let mut pos = vec![0.0; SEQ_LEN * TOKEN_DIM];
        for (i, v) in pos.iter_mut().enumerate() {
            *v = (i % 97) as f64 * 0.01;
        }
        params.pos_embed = Tensor::new(vec![SEQ_LEN, TOKEN_DIM], pos.clone()).unwrap();
        let mut tape = Tape::new();
        let vars = bind(&mut tape, &params);
        let patches = tape.constant(Tensor::zeros(vec![N_PATCHES, PATCH_DIM]));
        let c = tape.constant(Tensor::zeros(vec![1, TOKEN_DIM]));
        let projected = tape.matmul(patches, vars.get(P_PATCH)).unwrap();
        let stacked = tape.concat_rows(&[c, projected]).unwrap();
        let t_d = tape.add(stacked, vars.get(P_POS)).unwrap();
        assert_eq!(tape.value(t_d).data(), &pos[..]);
    }

    #[test]
    fn attention_weights_are_probabilities() {
        let params = test_params(4);
        let input = prep(&ramp_ddm()).unwrap();
        let mut tape = Tape::new();
        let vars = bind(&mut tape, &params);
        let out = forward(&mut tape, &vars, &input, &params.config, &mut FwdCtx::eval()).unwrap();
        let w = tape.value(out.attn[0]);
        assert_eq!(w.shape(), &[1, N_PATCHES]);
        let sum: f64 = w.data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(w.data().iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn identical_keys_give_uniform_attention() {
        // A constant DDM makes every patch token identical.
        let params = test_params(5);
        let d = DelayDopplerMap::new(vec![3.0; 187]).unwrap();
        let input = prep(&d).unwrap();
        let mut tape = Tape::new();
        let vars = bind(&mut tape, &params);
        let out = forward(&mut tape, &vars, &input, &params.config, &mut FwdCtx::eval()).unwrap();
        let w = tape.value(out.attn[0]);
        for &x in w.data() {
            assert!((x - 1.0 / N_PATCHES as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn eval_forward_is_bit_deterministic() {
        let params = test_params(6);
        let input = prep(&ramp_ddm()).unwrap();
        let run = || {
            let mut tape = Tape::new();
            let vars = bind(&mut tape, &params);
            let out =
                forward(&mut tape, &vars, &input, &params.config, &mut FwdCtx::eval()).unwrap();
            tape.value(out.t_ddm).data().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn patch_permutation_with_pos_swap_is_invariant() {
        // Swapping two patches together with their position rows leaves the
        // output token unchanged.
        let mut params = test_params(7);
        let mut rng = ChaCha12Rng::seed_from_u64(70);
        let pos: Vec<f64> = (0..SEQ_LEN * TOKEN_DIM)
            .map(|_| rng.gen_range(-0.5..0.5))
            .collect();
        params.pos_embed = Tensor::new(vec![SEQ_LEN, TOKEN_DIM], pos).unwrap();
        let input = prep(&ramp_ddm()).unwrap();

        let run = |params: &DatParams, input: &PreppedDdm| {
            let mut tape = Tape::new();
            let vars = bind(&mut tape, params);
            let out =
                forward(&mut tape, &vars, input, &params.config, &mut FwdCtx::eval()).unwrap();
            tape.value(out.t_ddm).data().to_vec()
        };
        let base = run(&params, &input);

        let (i, j) = (3, 27);
        let mut swapped = input.clone();
        let data = swapped.patches.data_mut();
        for k in 0..PATCH_DIM {
            data.swap(i * PATCH_DIM + k, j * PATCH_DIM + k);
        }
        let mut params2 = params.clone();
        let pe = params2.pos_embed.data_mut();
        for k in 0..TOKEN_DIM {
            pe.swap((i + 1) * TOKEN_DIM + k, (j + 1) * TOKEN_DIM + k);
        }
        let perm = run(&params2, &swapped);
        for (a, b) in base.iter().zip(&perm) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn multi_head_knob_runs() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let config = DatConfig {
            n_heads: 4,
            ..DatConfig::default()
        };
        let params = DatParams::init(&mut rng, config.clone()).unwrap();
        let input = prep(&ramp_ddm()).unwrap();
        let mut tape = Tape::new();
        let vars = bind(&mut tape, &params);
        let out = forward(&mut tape, &vars, &input, &config, &mut FwdCtx::eval()).unwrap();
        assert_eq!(out.attn.len(), 4);
        assert_eq!(tape.value(out.t_ddm).shape(), &[1, TOKEN_DIM]);
    }

    #[test]
    fn end_to_end_gradients_match_finite_differences() {
        // Perturb a handful of coordinates in every parameter group.
        let params = test_params(9);
        let input = prep(&ramp_ddm()).unwrap();
        let loss_of = |params: &DatParams| -> f64 {
            let mut tape = Tape::new();
            let vars = bind(&mut tape, &params);
            let out =
                forward(&mut tape, &vars, &input, &params.config, &mut FwdCtx::eval()).unwrap();
            let s = tape.sigmoid(out.t_ddm).unwrap();
            let l = tape.sum_all(s).unwrap();
            tape.value(l).scalar_value()
        };
        let grads = {
            let mut tape = Tape::new();
            let vars = bind(&mut tape, &params);
            let out =
                forward(&mut tape, &vars, &input, &params.config, &mut FwdCtx::eval()).unwrap();
            let s = tape.sigmoid(out.t_ddm).unwrap();
            let l = tape.sum_all(s).unwrap();
            let g = tape.backward(l).unwrap();
            vars.vars
                .iter()
                .map(|&v| g.get(v).map(|s| s.to_vec()))
                .collect::<Vec<_>>()
        };
        let mut rng = ChaCha12Rng::seed_from_u64(90);
        let h = 1e-5;
        for (gi, (name, tensor)) in params.entries().iter().enumerate() {
            let n = tensor.numel();
            for _ in 0..3 {
                let idx = rng.gen_range(0..n);
                let mut up = params.clone();
                up.entries_mut()[gi].1.data_mut()[idx] += h;
                let mut dn = params.clone();
                dn.entries_mut()[gi].1.data_mut()[idx] -= h;
                let fd = (loss_of(&up) - loss_of(&dn)) / (2.0 * h);
                let an = grads[gi].as_ref().expect("grad present")[idx];
                let denom = an.abs().max(fd.abs()).max(1.0);
                assert!(
                    (an - fd).abs() / denom <= 1e-4,
                    "{name}[{idx}]: analytic {an} vs fd {fd}"
                );
            }
        }
    }

}
