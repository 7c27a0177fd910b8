//! The quantum model: DAT → QFRB → MLP.

use std::collections::BTreeMap;

use rand::Rng;
use serde_json::json;

use super::mlp::{self, MlpParams};
use super::qfrb_op::QfrbOp;
use super::{ForwardVars, IwdModel, ModelKind, ParameterCensus};
use crate::dat::{self, DatConfig, DatParams, PreppedDdm};
use crate::numerics::{FwdCtx, Tape, Tensor};
use crate::qsim::{QuantumHeadParams, XxPairing, HEAD_ANGLES, N_HEADS, N_QUBITS, SE_ANGLES};
use crate::Result;

pub const QFRB_FEATURES: usize = 2 * N_HEADS;
pub const MLP_HIDDEN: usize = 16;

pub struct IwdQueenModel {
    pub dat: DatParams,
    /// 16 angle vectors of 28, one per head.
    pub heads: Vec<Tensor>,
    pub mlp: MlpParams,
    pub use_se: bool,
    pub pairing: XxPairing,
    pub dropout_rate: f64,
}

impl IwdQueenModel {
    pub fn init(rng: &mut impl Rng, use_se: bool) -> Result<Self> {
        Self::init_with(rng, use_se, DatConfig::default(), XxPairing::Adjacent)
    }

    pub fn init_with(
        rng: &mut impl Rng,
        use_se: bool,
        dat_config: DatConfig,
        pairing: XxPairing,
    ) -> Result<Self> {
        let dropout_rate = dat_config.dropout_rate;
        let dat = DatParams::init(rng, dat_config)?;
        let heads = (0..N_HEADS)
            .map(|_| {
                let p = QuantumHeadParams::random_init(rng);
                Tensor::new(vec![HEAD_ANGLES], p.to_flat().to_vec())
            })
            .collect::<Result<Vec<_>>>()?;
        let mlp = MlpParams::init(rng, QFRB_FEATURES, MLP_HIDDEN);
        Ok(IwdQueenModel {
            dat,
            heads,
            mlp,
            use_se,
            pairing,
            dropout_rate,
        })
    }

    pub fn head_params(&self, i: usize) -> QuantumHeadParams {
        let mut flat = [0.0; HEAD_ANGLES];
        flat.copy_from_slice(self.heads[i].data());
        QuantumHeadParams::from_flat(&flat)
    }

    fn head_name(i: usize) -> String {
        format!("qfrb.head{i:02}")
    }
}

impl IwdModel for IwdQueenModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Queen
    }

    fn forward(
        &self,
        tape: &mut Tape,
        input: &PreppedDdm,
        ctx: &mut FwdCtx,
    ) -> Result<ForwardVars> {
        let dat_vars = dat::bind(tape, &self.dat);
        let out = dat::forward(tape, &dat_vars, input, &self.dat.config, ctx)?;

        let mut head_vars = Vec::with_capacity(N_HEADS);
        for h in &self.heads {
            head_vars.push(tape.leaf(h.clone()));
        }
        let mut qfrb_inputs = vec![out.t_ddm];
        qfrb_inputs.extend_from_slice(&head_vars);
        let s = tape.custom(
            Box::new(QfrbOp {
                use_se: self.use_se,
                pairing: self.pairing,
            }),
            &qfrb_inputs,
        )?;

        let mlp_vars = mlp::bind(tape, &self.mlp);
        let p = mlp::mlp_fuse(tape, &mlp_vars, s, self.dropout_rate, ctx)?;

        let mut params = dat_vars.vars;
        params.extend(head_vars);
        params.extend(mlp_vars.vars);
        Ok(ForwardVars { p, params })
    }

    fn param_entries(&self) -> Vec<(String, &Tensor)> {
        let mut entries = self.dat.entries();
        for (i, h) in self.heads.iter().enumerate() {
            entries.push((Self::head_name(i), h));
        }
        entries.extend(self.mlp.entries());
        entries
    }

    fn param_entries_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut entries = self.dat.entries_mut();
        for (i, h) in self.heads.iter_mut().enumerate() {
            entries.push((Self::head_name(i), h));
        }
        entries.extend(self.mlp.entries_mut());
        entries
    }

    fn hyper(&self) -> BTreeMap<String, serde_json::Value> {
        BTreeMap::from([
            ("dropout_rate".to_string(), json!(self.dropout_rate)),
            ("threshold".to_string(), json!(super::CLASS_THRESHOLD)),
            ("attn_heads".to_string(), json!(self.dat.config.n_heads)),
            ("fnn_hidden".to_string(), json!(self.dat.config.fnn_hidden)),
            ("xx_pairing".to_string(), serde_json::to_value(self.pairing).unwrap()),
        ])
    }

    fn use_se(&self) -> bool {
        self.use_se
    }

    fn census(&self) -> ParameterCensus {
        let quantum_angles = N_HEADS * if self.use_se { HEAD_ANGLES } else { HEAD_ANGLES - SE_ANGLES };
        let classical_params = self
            .dat
            .entries()
            .iter()
            .map(|(_, t)| t.numel())
            .sum::<usize>()
            + self.mlp.n_params();
        ParameterCensus {
            qubits: N_HEADS * N_QUBITS,
            quantum_angles,
            classical_params,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ddm::DelayDopplerMap;
    use crate::models::classify;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn sample_ddm(scale: f64) -> DelayDopplerMap {
        let mut d = DelayDopplerMap::zeros();
        for r in 0..17 {
            for c in 0..11 {
                let dr = r as f64 - 8.0;
                let dc = c as f64 - 5.0;
                d.set(r, c, scale * (0.05 + (-0.5 * (dr * dr + dc * dc) / 2.0).exp()));
            }
        }
        d
    }

    #[test]
    fn census_counts() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let model = IwdQueenModel::init(&mut rng, true).unwrap();
        let census = model.census();
        assert_eq!(census.qubits, 64);
        assert_eq!(census.quantum_angles, 448);
        let no_se = IwdQueenModel::init(&mut rng, false).unwrap();
        assert_eq!(no_se.census().quantum_angles, 256);
    }

    #[test]
    fn prediction_is_scale_invariant_and_deterministic() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let model = IwdQueenModel::init(&mut rng, true).unwrap();
        let rec = crate::ddm::DdmRecord {
            id: "x".into(),
            lat: 0.0,
            lon: 0.0,
            time: "2021-01-01T00:00:00.000Z".into(),
            sp_inc_angle_deg: 10.0,
            ant_gain_db: 5.0,
            quality_flags: 0,
            noise_avg: 1.0,
            ddm: sample_ddm(1.0),
            label: None,
        };
        let p1 = model.predict_proba(&rec).unwrap();
        let mut scaled = rec.clone();
        scaled.ddm = sample_ddm(137.0);
        let p2 = model.predict_proba(&scaled).unwrap();
        // Max-normalization absorbs any positive rescaling bit-exactly:
        // scaling every entry scales the max identically.
        assert_eq!(classify(p1), classify(p2));
        assert!((p1 - p2).abs() < 1e-12);
        // Bit determinism.
        assert_eq!(p1.to_bits(), model.predict_proba(&rec).unwrap().to_bits());
    }

    #[test]
    fn se_zeroed_matches_no_se_model() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut model = IwdQueenModel::init(&mut rng, true).unwrap();
        for h in &mut model.heads {
            let data = h.data_mut();
            for k in 16..HEAD_ANGLES {
                data[k] = 0.0;
            }
        }
        let rec_ddm = sample_ddm(3.0);
        let input = crate::dat::prep(&rec_ddm).unwrap();
        let with_se = model.predict_proba_prepped(&input).unwrap();
        model.use_se = false;
        let without = model.predict_proba_prepped(&input).unwrap();
        assert_eq!(with_se.to_bits(), without.to_bits());
    }
}
