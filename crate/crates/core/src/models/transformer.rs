//! The classical model: DAT → CFEB → MLP.

use std::collections::BTreeMap;

use rand::Rng;
use serde_json::json;

use super::cfeb::{CfebOp, CfebParams, CFEB_CHANNELS};
use super::mlp::{self, MlpParams};
use super::{ForwardVars, IwdModel, ModelKind, ParameterCensus};
use crate::dat::{self, DatConfig, DatParams, PreppedDdm};
use crate::numerics::{FwdCtx, Tape, Tensor};
use crate::Result;

pub const MLP_HIDDEN: usize = 16;

pub struct IwdTransformerModel {
    pub dat: DatParams,
    pub cfeb: CfebParams,
    /// Input width 16, matching the one-scalar-per-channel CFEB output.
    pub mlp: MlpParams,
    pub dropout_rate: f64,
}

impl IwdTransformerModel {
    pub fn init(rng: &mut impl Rng) -> Result<Self> {
        Self::init_with(rng, DatConfig::default(), 1)
    }

    pub fn init_with(
        rng: &mut impl Rng,
        dat_config: DatConfig,
        depth_multiplier: usize,
    ) -> Result<Self> {
        let dropout_rate = dat_config.dropout_rate;
        let dat = DatParams::init(rng, dat_config)?;
        let cfeb = CfebParams::init(rng, depth_multiplier)?;
        let mlp = MlpParams::init(rng, CFEB_CHANNELS, MLP_HIDDEN);
        Ok(IwdTransformerModel {
            dat,
            cfeb,
            mlp,
            dropout_rate,
        })
    }
}

impl IwdModel for IwdTransformerModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Transformer
    }

    fn forward(
        &self,
        tape: &mut Tape,
        input: &PreppedDdm,
        ctx: &mut FwdCtx,
    ) -> Result<ForwardVars> {
        let dat_vars = dat::bind(tape, &self.dat);
        let out = dat::forward(tape, &dat_vars, input, &self.dat.config, ctx)?;

        let cfeb_vars: Vec<_> = self
            .cfeb
            .entries()
            .into_iter()
            .map(|(_, t)| tape.leaf(t.clone()))
            .collect();
        let mut cfeb_inputs = vec![out.t_ddm];
        cfeb_inputs.extend_from_slice(&cfeb_vars);
        let features = tape.custom(
            Box::new(CfebOp {
                depth_multiplier: self.cfeb.depth_multiplier,
            }),
            &cfeb_inputs,
        )?;

        let mlp_vars = mlp::bind(tape, &self.mlp);
        let p = mlp::mlp_fuse(tape, &mlp_vars, features, self.dropout_rate, ctx)?;

        let mut params = dat_vars.vars;
        params.extend(cfeb_vars);
        params.extend(mlp_vars.vars);
        Ok(ForwardVars { p, params })
    }

    fn param_entries(&self) -> Vec<(String, &Tensor)> {
        let mut entries = self.dat.entries();
        entries.extend(self.cfeb.entries());
        entries.extend(self.mlp.entries());
        entries
    }

    fn param_entries_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut entries = self.dat.entries_mut();
        entries.extend(self.cfeb.entries_mut());
        entries.extend(self.mlp.entries_mut());
        entries
    }

    fn hyper(&self) -> BTreeMap<String, serde_json::Value> {
        BTreeMap::from([
            ("dropout_rate".to_string(), json!(self.dropout_rate)),
            ("threshold".to_string(), json!(super::CLASS_THRESHOLD)),
            ("attn_heads".to_string(), json!(self.dat.config.n_heads)),
            ("fnn_hidden".to_string(), json!(self.dat.config.fnn_hidden)),
            (
                "cfeb_depth_multiplier".to_string(),
                json!(self.cfeb.depth_multiplier),
            ),
        ])
    }

    fn census(&self) -> ParameterCensus {
        let classical_params = self
            .param_entries()
            .iter()
            .map(|(_, t)| t.numel())
            .sum::<usize>();
        ParameterCensus {
            qubits: 0,
            quantum_angles: 0,
            classical_params,
        }
    }
}
