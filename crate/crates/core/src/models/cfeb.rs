//! Classical feature extraction block: the non-quantum stand-in for the
//! head bank.
//!
//! The 64-dim token reshapes to 16 channels of 2×2. Each channel runs a
//! depthwise 2×2 convolution with same padding (zero pad right/bottom) plus
//! GELU, then a valid 2×2 convolution collapsing to one scalar, so channels
//! never mix — mirroring the non-shared-weight head structure. With the
//! default depth multiplier of 1 the block carries 160 parameters; a
//! multiplier of 3 matches the 448 angles of the quantum bank.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::numerics::tape::{gelu, gelu_grad};
use crate::numerics::{CustomOp, Tensor};
use crate::{Error, Result};

pub const CFEB_CHANNELS: usize = 16;

#[derive(Debug, Clone)]
pub struct CfebParams {
    /// Per channel, `depth_multiplier` kernels of 2×2: shape [16·m, 4].
    pub conv1_kernels: Tensor,
    /// Shape [1, 16·m].
    pub conv1_bias: Tensor,
    /// Per channel, one 2×2 kernel per intermediate map: shape [16, m·4].
    pub conv2_kernels: Tensor,
    /// Shape [1, 16].
    pub conv2_bias: Tensor,
    pub depth_multiplier: usize,
}

impl CfebParams {
    pub fn init(rng: &mut impl Rng, depth_multiplier: usize) -> Result<Self> {
        if depth_multiplier == 0 {
            return Err(Error::domain("depth_multiplier must be >= 1"));
        }
        let m = depth_multiplier;
        let dist = Normal::new(0.0, 0.5).expect("valid normal");
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| dist.sample(rng)).collect() };
        Ok(CfebParams {
            conv1_kernels: Tensor::new(vec![CFEB_CHANNELS * m, 4], draw(CFEB_CHANNELS * m * 4))?,
            conv1_bias: Tensor::zeros(vec![1, CFEB_CHANNELS * m]),
            conv2_kernels: Tensor::new(vec![CFEB_CHANNELS, m * 4], draw(CFEB_CHANNELS * m * 4))?,
            conv2_bias: Tensor::zeros(vec![1, CFEB_CHANNELS]),
            depth_multiplier: m,
        })
    }

    pub fn from_parts<F>(mut fetch: F, depth_multiplier: usize) -> Result<Self>
    where
        F: FnMut(&str, &[usize]) -> Result<Tensor>,
    {
        if depth_multiplier == 0 {
            return Err(Error::domain("depth_multiplier must be >= 1"));
        }
        let m = depth_multiplier;
        Ok(CfebParams {
            conv1_kernels: fetch("cfeb.conv1.kernels", &[CFEB_CHANNELS * m, 4])?,
            conv1_bias: fetch("cfeb.conv1.bias", &[1, CFEB_CHANNELS * m])?,
            conv2_kernels: fetch("cfeb.conv2.kernels", &[CFEB_CHANNELS, m * 4])?,
            conv2_bias: fetch("cfeb.conv2.bias", &[1, CFEB_CHANNELS])?,
            depth_multiplier: m,
        })
    }

    pub fn n_params(&self) -> usize {
        self.conv1_kernels.numel()
            + self.conv1_bias.numel()
            + self.conv2_kernels.numel()
            + self.conv2_bias.numel()
    }

    pub fn entries(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("cfeb.conv1.kernels".into(), &self.conv1_kernels),
            ("cfeb.conv1.bias".into(), &self.conv1_bias),
            ("cfeb.conv2.kernels".into(), &self.conv2_kernels),
            ("cfeb.conv2.bias".into(), &self.conv2_bias),
        ]
    }

    pub fn entries_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("cfeb.conv1.kernels".into(), &mut self.conv1_kernels),
            ("cfeb.conv1.bias".into(), &mut self.conv1_bias),
            ("cfeb.conv2.kernels".into(), &mut self.conv2_kernels),
            ("cfeb.conv2.bias".into(), &mut self.conv2_bias),
        ]
    }
}

/// Graph op: inputs are [token 1×64, conv1_k, conv1_b, conv2_k, conv2_b],
/// output is 1×16.
#[derive(Debug, Clone, Copy)]
pub struct CfebOp {
    pub depth_multiplier: usize,
}

/// Same-padded 2×2 depthwise conv evaluated on one 2×2 channel
/// (v = [v00, v01, v10, v11]): output y at the four positions, with the
/// pad-right/pad-bottom zeros dropping terms.
fn conv_same(v: &[f64; 4], k: &[f64], b: f64) -> [f64; 4] {
    [
        k[0] * v[0] + k[1] * v[1] + k[2] * v[2] + k[3] * v[3] + b,
        k[0] * v[1] + k[2] * v[3] + b,
        k[0] * v[2] + k[1] * v[3] + b,
        k[0] * v[3] + b,
    ]
}

impl CustomOp for CfebOp {
    fn name(&self) -> &'static str {
        "cfeb"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let m = self.depth_multiplier;
        let [token, k1, b1, k2, b2] = inputs else {
            return Err(Error::domain("cfeb wants 5 inputs"));
        };
        if token.numel() != 4 * CFEB_CHANNELS {
            return Err(Error::ShapeMismatch {
                op: "cfeb",
                left: token.shape().to_vec(),
                right: vec![1, 4 * CFEB_CHANNELS],
            });
        }
        let mut out = vec![0.0; CFEB_CHANNELS];
        for ch in 0..CFEB_CHANNELS {
            let v: [f64; 4] = token.data()[4 * ch..4 * ch + 4].try_into().unwrap();
            let mut acc = b2.data()[ch];
            for j in 0..m {
                let slot = ch * m + j;
                let y = conv_same(&v, &k1.data()[4 * slot..4 * slot + 4], b1.data()[slot]);
                let z = y.map(gelu);
                let w = &k2.data()[ch * 4 * m + 4 * j..ch * 4 * m + 4 * j + 4];
                acc += w[0] * z[0] + w[1] * z[1] + w[2] * z[2] + w[3] * z[3];
            }
            out[ch] = acc;
        }
        Tensor::new(vec![1, CFEB_CHANNELS], out)
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, upstream: &[f64]) -> Vec<Vec<f64>> {
        let m = self.depth_multiplier;
        let (token, k1, b1, k2, b2) = (inputs[0], inputs[1], inputs[2], inputs[3], inputs[4]);
        let mut d_token = vec![0.0; token.numel()];
        let mut d_k1 = vec![0.0; k1.numel()];
        let mut d_b1 = vec![0.0; b1.numel()];
        let mut d_k2 = vec![0.0; k2.numel()];
        let mut d_b2 = vec![0.0; b2.numel()];
        for ch in 0..CFEB_CHANNELS {
            let u = upstream[ch];
            let v: [f64; 4] = token.data()[4 * ch..4 * ch + 4].try_into().unwrap();
            d_b2[ch] += u;
            for j in 0..m {
                let slot = ch * m + j;
                let k = &k1.data()[4 * slot..4 * slot + 4];
                let y = conv_same(&v, k, b1.data()[slot]);
                let z = y.map(gelu);
                let wo = ch * 4 * m + 4 * j;
                let w = &k2.data()[wo..wo + 4];
                // Second conv.
                for t in 0..4 {
                    d_k2[wo + t] += u * z[t];
                }
                // Through GELU into the first conv outputs.
                let dy = [
                    u * w[0] * gelu_grad(y[0]),
                    u * w[1] * gelu_grad(y[1]),
                    u * w[2] * gelu_grad(y[2]),
                    u * w[3] * gelu_grad(y[3]),
                ];
                d_b1[slot] += dy[0] + dy[1] + dy[2] + dy[3];
                let dk = &mut d_k1[4 * slot..4 * slot + 4];
                dk[0] += v[0] * dy[0] + v[1] * dy[1] + v[2] * dy[2] + v[3] * dy[3];
                dk[1] += v[1] * dy[0] + v[3] * dy[2];
                dk[2] += v[2] * dy[0] + v[3] * dy[1];
                dk[3] += v[3] * dy[0];
                let dv = &mut d_token[4 * ch..4 * ch + 4];
                dv[0] += k[0] * dy[0];
                dv[1] += k[1] * dy[0] + k[0] * dy[1];
                dv[2] += k[2] * dy[0] + k[0] * dy[2];
                dv[3] += k[3] * dy[0] + k[2] * dy[1] + k[1] * dy[2] + k[0] * dy[3];
            }
        }
        vec![d_token, d_k1, d_b1, d_k2, d_b2]
    }
}
