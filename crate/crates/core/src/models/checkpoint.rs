//! Versioned model checkpoints.
//!
//! JSON with tensor names sorted lexicographically; 64-bit values are
//! serialized as shortest round-trippable decimals, so save → load → save
//! is byte-identical.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cfeb::CfebParams;
use super::mlp::MlpParams;
use super::queen::{IwdQueenModel, MLP_HIDDEN as QUEEN_HIDDEN, QFRB_FEATURES};
use super::transformer::{IwdTransformerModel, MLP_HIDDEN as TRANS_HIDDEN};
use super::{AnyModel, IwdModel, ModelKind};
use crate::dat::{DatConfig, DatParams};
use crate::models::cfeb::CFEB_CHANNELS;
use crate::numerics::Tensor;
use crate::qsim::{XxPairing, HEAD_ANGLES, N_HEADS};
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub format_version: u32,
    pub model_kind: String,
    pub use_se: bool,
    pub hyper: BTreeMap<String, serde_json::Value>,
    pub tensors: BTreeMap<String, TensorEntry>,
}

impl ModelCheckpoint {
    pub fn from_model(model: &dyn IwdModel) -> Self {
        let tensors = model
            .param_entries()
            .into_iter()
            .map(|(name, t)| {
                (
                    name,
                    TensorEntry {
                        shape: t.shape().to_vec(),
                        data: t.data().to_vec(),
                    },
                )
            })
            .collect();
        ModelCheckpoint {
            format_version: FORMAT_VERSION,
            model_kind: model.kind().as_str().to_string(),
            use_se: model.use_se(),
            hyper: model.hyper(),
            tensors,
        }
    }

    fn fetcher<'a>(&'a self) -> impl FnMut(&str, &[usize]) -> Result<Tensor> + 'a {
        move |name: &str, shape: &[usize]| {
            let entry = self
                .tensors
                .get(name)
                .ok_or_else(|| Error::domain(format!("checkpoint missing tensor '{name}'")))?;
            if entry.shape != shape {
                return Err(Error::ShapeMismatch {
                    op: "checkpoint",
                    left: entry.shape.clone(),
                    right: shape.to_vec(),
                });
            }
            Tensor::new(entry.shape.clone(), entry.data.clone())
        }
    }

    fn hyper_usize(&self, key: &str, default: usize) -> usize {
        self.hyper
            .get(key)
            .and_then(|v| v.as_u64())
            .map(|v| v as usize)
            .unwrap_or(default)
    }

    fn hyper_f64(&self, key: &str, default: f64) -> f64 {
        self.hyper.get(key).and_then(|v| v.as_f64()).unwrap_or(default)
    }

    pub fn into_model(&self) -> Result<AnyModel> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::domain(format!(
                "unsupported checkpoint format_version {}",
                self.format_version
            )));
        }
        let kind: ModelKind = self.model_kind.parse()?;
        let config = DatConfig {
            n_heads: self.hyper_usize("attn_heads", 1),
            fnn_hidden: self.hyper_usize("fnn_hidden", 128),
            dropout_rate: self.hyper_f64("dropout_rate", 0.1),
        };
        let dropout_rate = config.dropout_rate;
        match kind {
            ModelKind::Queen => {
                let pairing: XxPairing = self
                    .hyper
                    .get("xx_pairing")
                    .cloned()
                    .map(serde_json::from_value)
                    .transpose()?
                    .unwrap_or_default();
                let dat = DatParams::from_parts(self.fetcher(), config)?;
                let mut heads = Vec::with_capacity(N_HEADS);
                let mut fetch = self.fetcher();
                for i in 0..N_HEADS {
                    heads.push(fetch(&format!("qfrb.head{i:02}"), &[HEAD_ANGLES])?);
                }
                let mlp = MlpParams::from_parts(self.fetcher(), QFRB_FEATURES, QUEEN_HIDDEN)?;
                Ok(AnyModel::Queen(IwdQueenModel {
                    dat,
                    heads,
                    mlp,
                    use_se: self.use_se,
                    pairing,
                    dropout_rate,
                }))
            }
            ModelKind::Transformer => {
                let m = self.hyper_usize("cfeb_depth_multiplier", 1);
                let dat = DatParams::from_parts(self.fetcher(), config)?;
                let cfeb = CfebParams::from_parts(self.fetcher(), m)?;
                let mlp = MlpParams::from_parts(self.fetcher(), CFEB_CHANNELS, TRANS_HIDDEN)?;
                Ok(AnyModel::Transformer(IwdTransformerModel {
                    dat,
                    cfeb,
                    mlp,
                    dropout_rate,
                }))
            }
        }
    }
}

pub fn save_checkpoint(path: &Path, model: &dyn IwdModel) -> Result<()> {
    let ck = ModelCheckpoint::from_model(model);
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, &ck)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<AnyModel> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let ck: ModelCheckpoint = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::data(path, format!("bad checkpoint: {e}")))?;
    ck.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt.json");
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let model = IwdQueenModel::init(&mut rng, true).unwrap();
        save_checkpoint(&path, &model).unwrap();
        let bytes1 = std::fs::read(&path).unwrap();

        let loaded = load_checkpoint(&path).unwrap();
        let AnyModel::Queen(loaded) = loaded else {
            panic!("expected queen")
        };
        // Every value identical to the bit.
        for ((n1, t1), (n2, t2)) in model.param_entries().iter().zip(loaded.param_entries()) {
            assert_eq!(n1, &n2);
            assert_eq!(t1.shape(), t2.shape());
            for (a, b) in t1.data().iter().zip(t2.data()) {
                assert_eq!(a.to_bits(), b.to_bits(), "{n1}");
            }
        }
        // Re-save is byte-identical.
        let path2 = dir.path().join("model2.ckpt.json");
        save_checkpoint(&path2, &loaded).unwrap();
        let bytes2 = std::fs::read(&path2).unwrap();
        assert_eq!(bytes1, bytes2);
    }

    #[test]
    fn tensor_names_are_sorted() {
        let mut rng = ChaCha12Rng::seed_from_u64(43);
        let model = IwdTransformerModel::init(&mut rng).unwrap();
        let ck = ModelCheckpoint::from_model(&model);
        let names: Vec<&String> = ck.tensors.keys().collect();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
        assert_eq!(ck.model_kind, "transformer");
        assert!(!ck.use_se);
    }

    #[test]
    fn rejects_unknown_version_and_bad_shapes() {
        let mut rng = ChaCha12Rng::seed_from_u64(44);
        let model = IwdQueenModel::init(&mut rng, true).unwrap();
        let mut ck = ModelCheckpoint::from_model(&model);
        ck.format_version = 9;
        assert!(ck.into_model().is_err());
        let mut ck = ModelCheckpoint::from_model(&model);
        ck.tensors.get_mut("dat.wq").unwrap().shape = vec![8, 8];
        assert!(ck.into_model().is_err());
    }
}
