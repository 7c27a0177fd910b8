//! Fusion MLP: LP → GELU → DO → LP → Sigmoid, ending in a probability.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::numerics::{FwdCtx, Tape, Tensor, Var};
use crate::Result;

#[derive(Debug, Clone)]
pub struct MlpParams {
    pub w1: Tensor, // in×hidden
    pub b1: Tensor, // 1×hidden
    pub w2: Tensor, // hidden×1
    pub b2: Tensor, // 1×1
}

impl MlpParams {
    pub fn init(rng: &mut impl Rng, input_dim: usize, hidden: usize) -> Self {
        let mut layer = |fan_in: usize, rows: usize, cols: usize| {
            let dist = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("valid normal");
            let data: Vec<f64> = (0..rows * cols).map(|_| dist.sample(rng)).collect();
            Tensor::new(vec![rows, cols], data).expect("finite init")
        };
        MlpParams {
            w1: layer(input_dim, input_dim, hidden),
            b1: Tensor::zeros(vec![1, hidden]),
            w2: layer(hidden, hidden, 1),
            b2: Tensor::zeros(vec![1, 1]),
        }
    }

    pub fn from_parts<F>(mut fetch: F, input_dim: usize, hidden: usize) -> Result<Self>
    where
        F: FnMut(&str, &[usize]) -> Result<Tensor>,
    {
        Ok(MlpParams {
            w1: fetch("mlp.w1", &[input_dim, hidden])?,
            b1: fetch("mlp.b1", &[1, hidden])?,
            w2: fetch("mlp.w2", &[hidden, 1])?,
            b2: fetch("mlp.b2", &[1, 1])?,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.w1.shape()[0]
    }

    pub fn n_params(&self) -> usize {
        self.w1.numel() + self.b1.numel() + self.w2.numel() + self.b2.numel()
    }

    pub fn entries(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("mlp.w1".into(), &self.w1),
            ("mlp.b1".into(), &self.b1),
            ("mlp.w2".into(), &self.w2),
            ("mlp.b2".into(), &self.b2),
        ]
    }

    pub fn entries_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("mlp.w1".into(), &mut self.w1),
            ("mlp.b1".into(), &mut self.b1),
            ("mlp.w2".into(), &mut self.w2),
            ("mlp.b2".into(), &mut self.b2),
        ]
    }
}

/// Bound MLP parameter nodes, in `entries()` order.
pub struct MlpVars {
    pub vars: Vec<Var>,
}

pub fn bind(tape: &mut Tape, params: &MlpParams) -> MlpVars {
    MlpVars {
        vars: params
            .entries()
            .into_iter()
            .map(|(_, t)| tape.leaf(t.clone()))
            .collect(),
    }
}

/// features → probability in (0, 1).
pub fn mlp_fuse(
    tape: &mut Tape,
    vars: &MlpVars,
    features: Var,
    dropout_rate: f64,
    ctx: &mut FwdCtx,
) -> Result<Var> {
    let h = tape.matmul(features, vars.vars[0])?;
    let hb = tape.add(h, vars.vars[1])?;
    let g = tape.gelu(hb)?;
    let gd = tape.dropout(g, dropout_rate, ctx)?;
    let o = tape.matmul(gd, vars.vars[2])?;
    let ob = tape.add(o, vars.vars[3])?;
    tape.sigmoid(ob)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn fuse(params: &MlpParams, features: &[f64]) -> f64 {
        let mut tape = Tape::new();
        let vars = bind(&mut tape, params);
        let f = tape.constant(Tensor::row(features.to_vec()).unwrap());
        let p = mlp_fuse(&mut tape, &vars, f, 0.1, &mut FwdCtx::eval()).unwrap();
        tape.value(p).scalar_value()
    }

    #[test]
    fn zero_weights_give_half() {
        let params = MlpParams {
            w1: Tensor::zeros(vec![32, 16]),
            b1: Tensor::zeros(vec![1, 16]),
            w2: Tensor::zeros(vec![16, 1]),
            b2: Tensor::zeros(vec![1, 1]),
        };
        assert_eq!(fuse(&params, &[0.3; 32]), 0.5);
    }

    #[test]
    fn output_strictly_inside_unit_interval() {
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        let params = MlpParams::init(&mut rng, 32, 16);
        for scale in [0.1, 1.0, 50.0] {
            let features: Vec<f64> = (0..32).map(|i| scale * ((i as f64) - 16.0)).collect();
            let p = fuse(&params, &features);
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn matches_direct_recomputation() {
        let mut rng = ChaCha12Rng::seed_from_u64(78);
        let params = MlpParams::init(&mut rng, 32, 16);
        let features: Vec<f64> = (0..32).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect();
        let got = fuse(&params, &features);
        // Independent re-evaluation.
        let mut hidden = vec![0.0; 16];
        for j in 0..16 {
            let mut acc = params.b1.data()[j];
            for i in 0..32 {
                acc += features[i] * params.w1.data()[i * 16 + j];
            }
            hidden[j] = 0.5 * acc * (1.0 + libm::erf(acc / std::f64::consts::SQRT_2));
        }
        let mut logit = params.b2.data()[0];
        for j in 0..16 {
            logit += hidden[j] * params.w2.data()[j];
        }
        let want = 1.0 / (1.0 + (-logit).exp());
        assert!((got - want).abs() < 1e-12);
    }
}
