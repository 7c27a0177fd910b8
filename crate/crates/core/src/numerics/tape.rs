//! Eager reverse-mode autodiff over [`Tensor`] values.
//!
//! A [`Tape`] owns one computation graph. Nodes are inserted eagerly (the
//! forward value is computed at insertion time) and [`Tape::backward`]
//! walks the graph in reverse, producing a gradient for every node that
//! requires one. Graphs are single-threaded; distinct graphs on distinct
//! threads are independent.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use super::tensor::Tensor;
use crate::{Error, Result};

/// Handle to a node in a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Forward-pass context: training mode plus the RNG driving dropout masks.
pub struct FwdCtx<'r> {
    pub train: bool,
    pub rng: Option<&'r mut ChaCha12Rng>,
}

impl<'r> FwdCtx<'r> {
    pub fn eval() -> FwdCtx<'static> {
        FwdCtx {
            train: false,
            rng: None,
        }
    }

    pub fn train(rng: &'r mut ChaCha12Rng) -> FwdCtx<'r> {
        FwdCtx {
            train: true,
            rng: Some(rng),
        }
    }
}

/// An externally-defined differentiable operation (e.g. the quantum head
/// bank). The forward value is produced once at insertion; `backward`
/// receives the saved inputs and the upstream gradient and must return one
/// gradient buffer per input, each congruent with that input's data.
pub trait CustomOp: Send + Sync {
    fn name(&self) -> &'static str;
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor>;
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, upstream: &[f64]) -> Vec<Vec<f64>>;
}

enum Op {
    Leaf,
    /// C = A·B
    MatMul(Var, Var),
    /// C = A·Bᵀ
    MatMulNT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    MulElem(Var, Var),
    DivElem(Var, Var),
    /// M (r×c) + v (1×c), v broadcast over rows.
    AddRowVec(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    /// out = s·T with s a 1×1 node.
    MulScalar(Var, Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize, usize),
    SliceCols(Var, usize, usize),
    Reshape(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        /// Per-row (mean, 1/std) saved at forward time.
        stats: Vec<(f64, f64)>,
    },
    Gelu(Var),
    Sigmoid(Var),
    Log(Var),
    Clamp(Var, f64, f64),
    /// Mask already folds the 1/keep scaling.
    Dropout(Var, Vec<f64>),
    SumAll(Var),
    Custom {
        inputs: Vec<Var>,
        op: Box<dyn CustomOp>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
pub struct Gradients {
    by_node: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.by_node[v.0].as_deref()
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

const LN_EPS: f64 = 1e-5;

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn finish(&mut self, value: Tensor, op: Op, requires_grad: bool, name: &str) -> Result<Var> {
        value.check_finite(name)?;
        Ok(self.push(value, op, requires_grad))
    }

    /// Insert a constant (non-trainable) leaf.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Insert a trainable leaf; gradients are produced for it.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (m, k, k2, n) = (ta.rows(), ta.cols(), tb.rows(), tb.cols());
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let out = mm_nn(ta.data(), tb.data(), m, k, n);
        let t = Tensor::new(vec![m, n], out)?;
        let rg = self.needs(a) || self.needs(b);
        self.finish(t, Op::MatMul(a, b), rg, "matmul")
    }

    /// C = A·Bᵀ with A m×k and B n×k.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (m, k, n, k2) = (ta.rows(), ta.cols(), tb.rows(), tb.cols());
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul_nt",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let out = mm_nt(ta.data(), tb.data(), m, k, n);
        let t = Tensor::new(vec![m, n], out)?;
        let rg = self.needs(a) || self.needs(b);
        self.finish(t, Op::MatMulNT(a, b), rg, "matmul_nt")
    }

    fn binary_same_shape(
        &mut self,
        a: Var,
        b: Var,
        op_name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.shape() != tb.shape() {
            return Err(Error::ShapeMismatch {
                op: op_name,
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let data: Vec<f64> = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let t = Tensor::new(ta.shape().to_vec(), data);
        let rg = self.needs(a) || self.needs(b);
        self.finish(t?, op, rg, op_name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape(a, b, "mul", |x, y| x * y, Op::MulElem(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape(a, b, "div", |x, y| x / y, Op::DivElem(a, b))
    }

    /// Broadcast a 1×c row vector over the rows of an r×c matrix.
    pub fn add_row_vec(&mut self, m: Var, v: Var) -> Result<Var> {
        let (tm, tv) = (&self.nodes[m.0].value, &self.nodes[v.0].value);
        let (r, c) = (tm.rows(), tm.cols());
        if tv.numel() != c || tv.rows() != 1 {
            return Err(Error::ShapeMismatch {
                op: "add_row_vec",
                left: tm.shape().to_vec(),
                right: tv.shape().to_vec(),
            });
        }
        let mut data = tm.data().to_vec();
        for i in 0..r {
            for j in 0..c {
                data[i * c + j] += tv.data()[j];
            }
        }
        let t = Tensor::new(vec![r, c], data)?;
        let rg = self.needs(m) || self.needs(v);
        self.finish(t, Op::AddRowVec(m, v), rg, "add_row_vec")
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let ta = &self.nodes[a.0].value;
        let data: Vec<f64> = ta.data().iter().map(|&x| x * c).collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.needs(a);
        self.finish(t, Op::Scale(a, c), rg, "scale")
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Result<Var> {
        let ta = &self.nodes[a.0].value;
        let data: Vec<f64> = ta.data().iter().map(|&x| x + c).collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.needs(a);
        self.finish(t, Op::AddConst(a), rg, "add_const")
    }

    /// out = s·T where `s` is a 1×1 node.
    pub fn mul_scalar(&mut self, s: Var, t: Var) -> Result<Var> {
        let ts = &self.nodes[s.0].value;
        if !ts.is_scalar() {
            return Err(Error::ShapeMismatch {
                op: "mul_scalar",
                left: ts.shape().to_vec(),
                right: self.nodes[t.0].value.shape().to_vec(),
            });
        }
        let sv = ts.scalar_value();
        let tt = &self.nodes[t.0].value;
        let data: Vec<f64> = tt.data().iter().map(|&x| sv * x).collect();
        let out = Tensor::new(tt.shape().to_vec(), data)?;
        let rg = self.needs(s) || self.needs(t);
        self.finish(out, Op::MulScalar(s, t), rg, "mul_scalar")
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self.nodes[parts[0].0].value.cols();
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let tp = &self.nodes[p.0].value;
            if tp.cols() != cols {
                return Err(Error::ShapeMismatch {
                    op: "concat_rows",
                    left: self.nodes[parts[0].0].value.shape().to_vec(),
                    right: tp.shape().to_vec(),
                });
            }
            rows += tp.rows();
            data.extend_from_slice(tp.data());
        }
        let t = Tensor::new(vec![rows, cols], data)?;
        let rg = parts.iter().any(|&p| self.needs(p));
        self.finish(t, Op::ConcatRows(parts.to_vec()), rg, "concat_rows")
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.nodes[parts[0].0].value.rows();
        let mut cols = 0;
        for &p in parts {
            let tp = &self.nodes[p.0].value;
            if tp.rows() != rows {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    left: self.nodes[parts[0].0].value.shape().to_vec(),
                    right: tp.shape().to_vec(),
                });
            }
            cols += tp.cols();
        }
        let mut data = vec![0.0; rows * cols];
        let mut off = 0;
        for &p in parts {
            let tp = &self.nodes[p.0].value;
            let c = tp.cols();
            for i in 0..rows {
                data[i * cols + off..i * cols + off + c]
                    .copy_from_slice(&tp.data()[i * c..(i + 1) * c]);
            }
            off += c;
        }
        let t = Tensor::new(vec![rows, cols], data)?;
        let rg = parts.iter().any(|&p| self.needs(p));
        self.finish(t, Op::ConcatCols(parts.to_vec()), rg, "concat_cols")
    }

    pub fn slice_rows(&mut self, a: Var, r0: usize, r1: usize) -> Result<Var> {
        let ta = &self.nodes[a.0].value;
        let (r, c) = (ta.rows(), ta.cols());
        if r0 >= r1 || r1 > r {
            return Err(Error::domain(format!(
                "slice_rows {r0}..{r1} out of range for {r} rows"
            )));
        }
        let data = ta.data()[r0 * c..r1 * c].to_vec();
        let t = Tensor::new(vec![r1 - r0, c], data)?;
        let rg = self.needs(a);
        self.finish(t, Op::SliceRows(a, r0, r1), rg, "slice_rows")
    }

    pub fn slice_cols(&mut self, a: Var, c0: usize, c1: usize) -> Result<Var> {
        let ta = &self.nodes[a.0].value;
        let (r, c) = (ta.rows(), ta.cols());
        if c0 >= c1 || c1 > c {
            return Err(Error::domain(format!(
                "slice_cols {c0}..{c1} out of range for {c} cols"
            )));
        }
        let mut data = Vec::with_capacity(r * (c1 - c0));
        for i in 0..r {
            data.extend_from_slice(&ta.data()[i * c + c0..i * c + c1]);
        }
        let t = Tensor::new(vec![r, c1 - c0], data)?;
        let rg = self.needs(a);
        self.finish(t, Op::SliceCols(a, c0, c1), rg, "slice_cols")
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let ta = &self.nodes[a.0].value;
        let n: usize = shape.iter().product();
        if n != ta.numel() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                left: ta.shape().to_vec(),
                right: shape,
            });
        }
        let t = Tensor::new(shape, ta.data().to_vec())?;
        let rg = self.needs(a);
        self.finish(t, Op::Reshape(a), rg, "reshape")
    }

    /// Row-wise softmax with max subtraction; each output row sums to 1.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let ta = &self.nodes[a.0].value;
        let (r, c) = (ta.rows(), ta.cols());
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            let row = &ta.data()[i * c..(i + 1) * c];
            let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let mut sum = 0.0;
            for j in 0..c {
                let e = (row[j] - m).exp();
                data[i * c + j] = e;
                sum += e;
            }
            for j in 0..c {
                data[i * c + j] /= sum;
            }
        }
        let t = Tensor::new(vec![r, c], data)?;
        let rg = self.needs(a);
        self.finish(t, Op::SoftmaxRows(a), rg, "softmax_rows")
    }

    /// Per-row layer normalization followed by the affine (gamma, beta).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let tx = &self.nodes[x.0].value;
        let (r, c) = (tx.rows(), tx.cols());
        let tg = &self.nodes[gamma.0].value;
        let tb = &self.nodes[beta.0].value;
        if tg.numel() != c || tb.numel() != c {
            return Err(Error::ShapeMismatch {
                op: "layer_norm",
                left: tx.shape().to_vec(),
                right: tg.shape().to_vec(),
            });
        }
        let mut data = vec![0.0; r * c];
        let mut stats = Vec::with_capacity(r);
        for i in 0..r {
            let row = &tx.data()[i * c..(i + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let rstd = 1.0 / (var + LN_EPS).sqrt();
            stats.push((mean, rstd));
            for j in 0..c {
                let xhat = (row[j] - mean) * rstd;
                data[i * c + j] = xhat * tg.data()[j] + tb.data()[j];
            }
        }
        let t = Tensor::new(vec![r, c], data)?;
        let rg = self.needs(x) || self.needs(gamma) || self.needs(beta);
        self.finish(
            t,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                stats,
            },
            rg,
            "layer_norm",
        )
    }

    /// Exact (erf-based) GELU.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let ta = &self.nodes[a.0].value;
        let data: Vec<f64> = ta.data().iter().map(|&x| gelu(x)).collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.needs(a);
        self.finish(t, Op::Gelu(a), rg, "gelu")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let ta = &self.nodes[a.0].value;
        let data: Vec<f64> = ta.data().iter().map(|&x| sigmoid(x)).collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.needs(a);
        self.finish(t, Op::Sigmoid(a), rg, "sigmoid")
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let ta = &self.nodes[a.0].value;
        let data: Vec<f64> = ta.data().iter().map(|&x| x.ln()).collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.needs(a);
        self.finish(t, Op::Log(a), rg, "log")
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        let ta = &self.nodes[a.0].value;
        let data: Vec<f64> = ta.data().iter().map(|&x| x.clamp(lo, hi)).collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.needs(a);
        self.finish(t, Op::Clamp(a, lo, hi), rg, "clamp")
    }

    /// Inverted dropout: at train time every element is zeroed with
    /// probability `rate`, survivors scaled by 1/(1-rate). In eval mode or
    /// at rate 0 this is an exact identity (the input var is returned and no
    /// node is inserted).
    pub fn dropout(&mut self, a: Var, rate: f64, ctx: &mut FwdCtx) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::domain(format!("dropout rate {rate} outside [0,1)")));
        }
        if !ctx.train || rate == 0.0 {
            return Ok(a);
        }
        let rng = ctx
            .rng
            .as_deref_mut()
            .ok_or_else(|| Error::domain("dropout in train mode requires an RNG"))?;
        let ta = &self.nodes[a.0].value;
        let keep = 1.0 - rate;
        let mask: Vec<f64> = (0..ta.numel())
            .map(|_| {
                if rng.gen::<f64>() < rate {
                    0.0
                } else {
                    1.0 / keep
                }
            })
            .collect();
        let data: Vec<f64> = ta.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.needs(a);
        self.finish(t, Op::Dropout(a, mask), rg, "dropout")
    }

    /// Sum of all entries, as a 1×1 node.
    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let ta = &self.nodes[a.0].value;
        let s = ta.data().iter().sum();
        let t = Tensor::scalar(s)?;
        let rg = self.needs(a);
        self.finish(t, Op::SumAll(a), rg, "sum_all")
    }

    pub fn custom(&mut self, op: Box<dyn CustomOp>, inputs: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor> = inputs.iter().map(|&v| &self.nodes[v.0].value).collect();
        let out = op.forward(&tensors)?;
        out.check_finite(op.name())?;
        let rg = inputs.iter().any(|&v| self.needs(v));
        Ok(self.push(
            out,
            Op::Custom {
                inputs: inputs.to_vec(),
                op,
            },
            rg,
        ))
    }

    /// Reverse pass from a scalar output node (seed gradient 1).
    pub fn backward(&self, out: Var) -> Result<Gradients> {
        if !self.nodes[out.0].value.is_scalar() {
            return Err(Error::domain(format!(
                "backward requires a scalar output, got shape {:?}",
                self.nodes[out.0].value.shape()
            )));
        }
        self.backward_seeded(out, &[1.0])
    }

    /// Reverse pass with an explicit upstream gradient for `out`.
    pub fn backward_seeded(&self, out: Var, seed: &[f64]) -> Result<Gradients> {
        let n = self.nodes.len();
        if seed.len() != self.nodes[out.0].value.numel() {
            return Err(Error::domain("seed gradient shape mismatch".to_string()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[out.0] = Some(seed.to_vec());
        for idx in (0..=out.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.accumulate_inputs(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        // Drop gradients of interior nodes the caller did not request?
        // Keep them all: the tape is per-sample and short-lived.
        for (idx, slot) in grads.iter().enumerate() {
            if let Some(g) = slot {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite {
                        op: format!("backward (node {idx})"),
                    });
                }
            }
        }
        Ok(Gradients { by_node: grads })
    }

    fn accumulate_inputs(
        &self,
        idx: usize,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) -> Result<()> {
        let node = &self.nodes[idx];
        let add_to = |grads: &mut [Option<Vec<f64>>], v: Var, contrib: Vec<f64>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(buf) => {
                    for (b, c) in buf.iter_mut().zip(&contrib) {
                        *b += c;
                    }
                }
                slot => {
                    *slot = Some(contrib);
                }
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let (m, k, n2) = (ta.rows(), ta.cols(), tb.cols());
                if self.needs(*a) {
                    add_to(grads, *a, mm_nt(g, tb.data(), m, n2, k));
                }
                if self.needs(*b) {
                    add_to(grads, *b, mm_tn(ta.data(), g, m, k, n2));
                }
            }
            Op::MatMulNT(a, b) => {
                let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let (m, k, n2) = (ta.rows(), ta.cols(), tb.rows());
                if self.needs(*a) {
                    add_to(grads, *a, mm_nn(g, tb.data(), m, n2, k));
                }
                if self.needs(*b) {
                    add_to(grads, *b, mm_tn(g, ta.data(), m, n2, k));
                }
            }
            Op::Add(a, b) => {
                add_to(grads, *a, g.to_vec());
                add_to(grads, *b, g.to_vec());
            }
            Op::Sub(a, b) => {
                add_to(grads, *a, g.to_vec());
                add_to(grads, *b, g.iter().map(|&v| -v).collect());
            }
            Op::MulElem(a, b) => {
                let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                add_to(grads, *a, g.iter().zip(tb.data()).map(|(&gv, &bv)| gv * bv).collect());
                add_to(grads, *b, g.iter().zip(ta.data()).map(|(&gv, &av)| gv * av).collect());
            }
            Op::DivElem(a, b) => {
                let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                add_to(grads, *a, g.iter().zip(tb.data()).map(|(&gv, &bv)| gv / bv).collect());
                add_to(
                    grads,
                    *b,
                    g.iter()
                        .zip(ta.data().iter().zip(tb.data()))
                        .map(|(&gv, (&av, &bv))| -gv * av / (bv * bv))
                        .collect(),
                );
            }
            Op::AddRowVec(m, v) => {
                let (r, c) = {
                    let t = &node.value;
                    (t.rows(), t.cols())
                };
                add_to(grads, *m, g.to_vec());
                if self.needs(*v) {
                    let mut gv = vec![0.0; c];
                    for i in 0..r {
                        for j in 0..c {
                            gv[j] += g[i * c + j];
                        }
                    }
                    add_to(grads, *v, gv);
                }
            }
            Op::Scale(a, c) => {
                add_to(grads, *a, g.iter().map(|&v| v * c).collect());
            }
            Op::AddConst(a) => {
                add_to(grads, *a, g.to_vec());
            }
            Op::MulScalar(s, t) => {
                let (ts, tt) = (&self.nodes[s.0].value, &self.nodes[t.0].value);
                if self.needs(*s) {
                    let d = g.iter().zip(tt.data()).map(|(&gv, &tv)| gv * tv).sum();
                    add_to(grads, *s, vec![d]);
                }
                let sv = ts.scalar_value();
                add_to(grads, *t, g.iter().map(|&v| v * sv).collect());
            }
            Op::ConcatRows(parts) => {
                let c = node.value.cols();
                let mut off = 0;
                for &p in parts {
                    let pr = self.nodes[p.0].value.rows();
                    add_to(grads, p, g[off * c..(off + pr) * c].to_vec());
                    off += pr;
                }
            }
            Op::ConcatCols(parts) => {
                let (r, c) = (node.value.rows(), node.value.cols());
                let mut off = 0;
                for &p in parts {
                    let pc = self.nodes[p.0].value.cols();
                    if self.needs(p) {
                        let mut gp = vec![0.0; r * pc];
                        for i in 0..r {
                            gp[i * pc..(i + 1) * pc]
                                .copy_from_slice(&g[i * c + off..i * c + off + pc]);
                        }
                        add_to(grads, p, gp);
                    }
                    off += pc;
                }
            }
            Op::SliceRows(a, r0, _r1) => {
                if self.needs(*a) {
                    let ta = &self.nodes[a.0].value;
                    let (r, c) = (ta.rows(), ta.cols());
                    let mut ga = vec![0.0; r * c];
                    ga[r0 * c..r0 * c + g.len()].copy_from_slice(g);
                    add_to(grads, *a, ga);
                }
            }
            Op::SliceCols(a, c0, c1) => {
                if self.needs(*a) {
                    let ta = &self.nodes[a.0].value;
                    let (r, c) = (ta.rows(), ta.cols());
                    let w = c1 - c0;
                    let mut ga = vec![0.0; r * c];
                    for i in 0..r {
                        ga[i * c + c0..i * c + c1].copy_from_slice(&g[i * w..(i + 1) * w]);
                    }
                    add_to(grads, *a, ga);
                }
            }
            Op::Reshape(a) => {
                add_to(grads, *a, g.to_vec());
            }
            Op::SoftmaxRows(a) => {
                if self.needs(*a) {
                    let y = node.value.data();
                    let (r, c) = (node.value.rows(), node.value.cols());
                    let mut ga = vec![0.0; r * c];
                    for i in 0..r {
                        let dot: f64 = (0..c).map(|j| g[i * c + j] * y[i * c + j]).sum();
                        for j in 0..c {
                            ga[i * c + j] = y[i * c + j] * (g[i * c + j] - dot);
                        }
                    }
                    add_to(grads, *a, ga);
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                stats,
            } => {
                let tx = &self.nodes[x.0].value;
                let tg = &self.nodes[gamma.0].value;
                let (r, c) = (tx.rows(), tx.cols());
                let cf = c as f64;
                let mut gx = vec![0.0; r * c];
                let mut gg = vec![0.0; c];
                let mut gb = vec![0.0; c];
                for i in 0..r {
                    let (mean, rstd) = stats[i];
                    let row = &tx.data()[i * c..(i + 1) * c];
                    let gi = &g[i * c..(i + 1) * c];
                    // h = gamma ⊙ upstream; backward in terms of xhat.
                    let mut sum_h = 0.0;
                    let mut sum_hx = 0.0;
                    for j in 0..c {
                        let xhat = (row[j] - mean) * rstd;
                        let h = gi[j] * tg.data()[j];
                        sum_h += h;
                        sum_hx += h * xhat;
                        gg[j] += gi[j] * xhat;
                        gb[j] += gi[j];
                    }
                    for j in 0..c {
                        let xhat = (row[j] - mean) * rstd;
                        let h = gi[j] * tg.data()[j];
                        gx[i * c + j] = rstd * (h - sum_h / cf - xhat * sum_hx / cf);
                    }
                }
                add_to(grads, *x, gx);
                add_to(grads, *gamma, gg);
                add_to(grads, *beta, gb);
            }
            Op::Gelu(a) => {
                if self.needs(*a) {
                    let ta = &self.nodes[a.0].value;
                    add_to(
                        grads,
                        *a,
                        g.iter()
                            .zip(ta.data())
                            .map(|(&gv, &x)| gv * gelu_grad(x))
                            .collect(),
                    );
                }
            }
            Op::Sigmoid(a) => {
                if self.needs(*a) {
                    let y = node.value.data();
                    add_to(
                        grads,
                        *a,
                        g.iter().zip(y).map(|(&gv, &yv)| gv * yv * (1.0 - yv)).collect(),
                    );
                }
            }
            Op::Log(a) => {
                if self.needs(*a) {
                    let ta = &self.nodes[a.0].value;
                    add_to(
                        grads,
                        *a,
                        g.iter().zip(ta.data()).map(|(&gv, &x)| gv / x).collect(),
                    );
                }
            }
            Op::Clamp(a, lo, hi) => {
                if self.needs(*a) {
                    let ta = &self.nodes[a.0].value;
                    add_to(
                        grads,
                        *a,
                        g.iter()
                            .zip(ta.data())
                            .map(|(&gv, &x)| if x >= *lo && x <= *hi { gv } else { 0.0 })
                            .collect(),
                    );
                }
            }
            Op::Dropout(a, mask) => {
                add_to(
                    grads,
                    *a,
                    g.iter().zip(mask).map(|(&gv, &m)| gv * m).collect(),
                );
            }
            Op::SumAll(a) => {
                if self.needs(*a) {
                    let n = self.nodes[a.0].value.numel();
                    add_to(grads, *a, vec![g[0]; n]);
                }
            }
            Op::Custom { inputs, op } => {
                let tensors: Vec<&Tensor> = inputs.iter().map(|&v| &self.nodes[v.0].value).collect();
                let input_grads = op.backward(&tensors, &node.value, g);
                debug_assert_eq!(input_grads.len(), inputs.len());
                for (&v, gi) in inputs.iter().zip(input_grads) {
                    add_to(grads, v, gi);
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Exact GELU: x·Φ(x) with the Gaussian CDF, not the tanh approximation.
pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let phi_cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let phi_pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    phi_cdf + x * phi_pdf
}

fn mm_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av != 0.0 {
                let bo = p * n;
                let oo = i * n;
                for j in 0..n {
                    out[oo + j] += av * b[bo + j];
                }
            }
        }
    }
    out
}

/// A (m×k) times Bᵀ where B is n×k.
fn mm_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a[i * k + p] * b[j * k + p];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

/// Aᵀ (A is m×k) times B (m×n), giving k×n.
fn mm_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av != 0.0 {
                let oo = p * n;
                let bo = i * n;
                for j in 0..n {
                    out[oo + j] += av * b[bo + j];
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn t(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        Tensor::new(shape, data).unwrap()
    }

    #[test]
    fn softmax_uniform_rows() {
        let mut tape = Tape::new();
        let a = tape.constant(t(vec![1, 3], vec![0.0, 0.0, 0.0]));
        let s = tape.softmax_rows(a).unwrap();
        for v in tape.value(s).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut tape = Tape::new();
        let a = tape.constant(t(vec![2, 4], vec![3.0, -1.0, 0.5, 9.0, 1.0, 1.0, 1.0, 1.0]));
        let s = tape.softmax_rows(a).unwrap();
        let v = tape.value(s);
        for i in 0..2 {
            let sum: f64 = v.data()[i * 4..(i + 1) * 4].iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(v.data()[i * 4..(i + 1) * 4].iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn gelu_and_sigmoid_fixed_points() {
        let mut tape = Tape::new();
        let a = tape.constant(t(vec![1, 1], vec![0.0]));
        let g = tape.gelu(a).unwrap();
        assert_eq!(tape.value(g).scalar_value(), 0.0);
        let s = tape.sigmoid(a).unwrap();
        assert_eq!(tape.value(s).scalar_value(), 0.5);
    }

    #[test]
    fn square_gradient() {
        // d/dx (x·x) at x = 3 is 6.
        let mut tape = Tape::new();
        let x = tape.leaf(t(vec![1, 1], vec![3.0]));
        let y = tape.mul(x, x).unwrap();
        let grads = tape.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap()[0], 6.0);
    }

    #[test]
    fn sigmoid_gradient_at_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(vec![1, 1], vec![0.0]));
        let y = tape.sigmoid(x).unwrap();
        let grads = tape.backward(y).unwrap();
        assert!((grads.get(x).unwrap()[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn dropout_identities() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(vec![1, 4], vec![1.0, 2.0, 3.0, 4.0]));
        // Eval mode: exact identity (same var returned).
        let mut ctx = FwdCtx::eval();
        let y = tape.dropout(x, 0.5, &mut ctx).unwrap();
        assert_eq!(x, y);
        // Rate 0 in train mode: identity as well.
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let mut ctx = FwdCtx::train(&mut rng);
        let y = tape.dropout(x, 0.0, &mut ctx).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(t(vec![2, 3], vec![0.0; 6]));
        let b = tape.constant(t(vec![2, 2], vec![0.0; 4]));
        let err = tape.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
    }

    #[test]
    fn non_finite_is_hard_error() {
        let mut tape = Tape::new();
        let a = tape.constant(t(vec![1, 1], vec![0.0]));
        assert!(matches!(tape.log(a), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn layer_norm_moments() {
        let mut tape = Tape::new();
        let x = tape.constant(t(vec![2, 4], vec![1.0, 2.0, 3.0, 4.0, -1.0, 0.0, 5.0, 2.0]));
        let g = tape.constant(t(vec![1, 4], vec![1.0; 4]));
        let b = tape.constant(t(vec![1, 4], vec![0.0; 4]));
        let y = tape.layer_norm(x, g, b).unwrap();
        let v = tape.value(y);
        for i in 0..2 {
            let row = &v.data()[i * 4..(i + 1) * 4];
            let mean: f64 = row.iter().sum::<f64>() / 4.0;
            let var: f64 = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    /// Central finite-difference check over a composite graph touching most ops.
    #[test]
    fn composite_graph_matches_finite_differences() {
        use rand::Rng;
        let mut rng = ChaCha12Rng::seed_from_u64(123);
        for _ in 0..100 {
            let vals: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let eval = |v: &[f64]| -> f64 {
                let mut tape = Tape::new();
                let a = tape.leaf(t(vec![1, 2], vec![v[0], v[1]]));
                let b = tape.leaf(t(vec![2, 2], vec![v[2], v[3], v[4], 0.7]));
                let m = tape.matmul(a, b).unwrap();
                let s = tape.sigmoid(m).unwrap();
                let gl = tape.gelu(s).unwrap();
                let sm = tape.softmax_rows(gl).unwrap();
                let prod = tape.mul(sm, m).unwrap();
                let out = tape.sum_all(prod).unwrap();
                tape.value(out).scalar_value()
            };
            let grad = {
                let mut tape = Tape::new();
                let a = tape.leaf(t(vec![1, 2], vec![vals[0], vals[1]]));
                let b = tape.leaf(t(vec![2, 2], vec![vals[2], vals[3], vals[4], 0.7]));
                let m = tape.matmul(a, b).unwrap();
                let s = tape.sigmoid(m).unwrap();
                let gl = tape.gelu(s).unwrap();
                let sm = tape.softmax_rows(gl).unwrap();
                let prod = tape.mul(sm, m).unwrap();
                let out = tape.sum_all(prod).unwrap();
                let gr = tape.backward(out).unwrap();
                let mut flat = gr.get(a).unwrap().to_vec();
                flat.extend_from_slice(&gr.get(b).unwrap()[..3]);
                flat
            };
            let h = 1e-5;
            for i in 0..5 {
                let mut vp = vals.clone();
                let mut vm = vals.clone();
                vp[i] += h;
                vm[i] -= h;
                let fd = (eval(&vp) - eval(&vm)) / (2.0 * h);
                let denom = grad[i].abs().max(fd.abs()).max(1.0);
                assert!(
                    (grad[i] - fd).abs() / denom <= 1e-4,
                    "param {i}: analytic {} vs fd {fd}",
                    grad[i]
                );
            }
        }
    }
}
