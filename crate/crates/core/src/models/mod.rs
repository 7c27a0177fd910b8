//! Model assemblies: the quantum pipeline (DAT → QFRB → MLP) and its
//! classical counterpart (DAT → CFEB → MLP).

mod cfeb;
mod checkpoint;
mod mlp;
mod qfrb_op;
mod queen;
mod transformer;

pub use cfeb::CfebParams;
pub use checkpoint::{load_checkpoint, save_checkpoint, ModelCheckpoint, TensorEntry};
pub use mlp::MlpParams;
pub use qfrb_op::{qfrb_forward, QfrbOp};
pub use queen::IwdQueenModel;
pub use transformer::IwdTransformerModel;

use serde::{Deserialize, Serialize};

use crate::dat::PreppedDdm;
use crate::ddm::DdmRecord;
use crate::numerics::{FwdCtx, Tape, Tensor, Var};
use crate::Result;

/// Decision threshold; the boundary p = 0.5 classifies as water.
pub const CLASS_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Queen,
    Transformer,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Queen => "queen",
            ModelKind::Transformer => "transformer",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "queen" => Ok(ModelKind::Queen),
            "transformer" => Ok(ModelKind::Transformer),
            other => Err(crate::Error::Config(format!(
                "unknown model kind '{other}' (expected queen|transformer)"
            ))),
        }
    }
}

/// Output of one bound forward pass: the probability node plus parameter
/// nodes in `param_entries()` order.
pub struct ForwardVars {
    pub p: Var,
    pub params: Vec<Var>,
}

/// Parameter accounting per component.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParameterCensus {
    pub qubits: usize,
    pub quantum_angles: usize,
    pub classical_params: usize,
}

/// Common surface of both model families. All methods are object-safe so
/// the trainer and CLI can work with `&mut dyn IwdModel`.
pub trait IwdModel: Send + Sync {
    fn kind(&self) -> ModelKind;

    /// Build the forward graph for one sample and return the probability
    /// node. Parameter leaves are bound fresh per tape.
    fn forward(&self, tape: &mut Tape, input: &PreppedDdm, ctx: &mut FwdCtx)
        -> Result<ForwardVars>;

    /// Stable (name, tensor) list; the order is the optimizer's contract.
    fn param_entries(&self) -> Vec<(String, &Tensor)>;
    fn param_entries_mut(&mut self) -> Vec<(String, &mut Tensor)>;

    /// Non-trainable hyperparameters for the checkpoint.
    fn hyper(&self) -> std::collections::BTreeMap<String, serde_json::Value>;

    fn census(&self) -> ParameterCensus;

    /// Whether the strong-entanglement circuit layer is active (always
    /// false for the classical model).
    fn use_se(&self) -> bool {
        false
    }

    /// Eval-mode probability for one record (normalizes the DDM first).
    fn predict_proba(&self, record: &DdmRecord) -> Result<f64> {
        let input = crate::dat::prep(&record.ddm)?;
        self.predict_proba_prepped(&input)
    }

    fn predict_proba_prepped(&self, input: &PreppedDdm) -> Result<f64> {
        let mut tape = Tape::new();
        let fv = self.forward(&mut tape, input, &mut FwdCtx::eval())?;
        Ok(tape.value(fv.p).scalar_value())
    }
}

/// Hard decision: 1 iff p ≥ 0.5.
pub fn classify(p: f64) -> u8 {
    u8::from(p >= CLASS_THRESHOLD)
}

/// Convenience wrapper: filter-agnostic prediction for one record.
pub fn predict(record: &DdmRecord, model: &dyn IwdModel) -> Result<(f64, u8)> {
    let p = model.predict_proba(record)?;
    Ok((p, classify(p)))
}

/// Either model family, as loaded from a checkpoint.
pub enum AnyModel {
    Queen(IwdQueenModel),
    Transformer(IwdTransformerModel),
}

impl AnyModel {
    pub fn as_model(&self) -> &dyn IwdModel {
        match self {
            AnyModel::Queen(m) => m,
            AnyModel::Transformer(m) => m,
        }
    }

    pub fn as_model_mut(&mut self) -> &mut dyn IwdModel {
        match self {
            AnyModel::Queen(m) => m,
            AnyModel::Transformer(m) => m,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_probability_is_water() {
        assert_eq!(classify(0.5), 1);
        assert_eq!(classify(0.499999), 0);
        assert_eq!(classify(0.9), 1);
    }
}
