//! Complex-valued state containers and dense complex matrices.
//!
//! Quantum amplitudes are stored as separate `re`/`im` arrays; gradients in
//! the simulator flow through both parts independently. The 2×2 and 4×4 gate
//! application kernels here are the only mutation paths for amplitude data.

use num_complex::Complex64;

use crate::{Error, Result};

/// Flat complex tensor (row-major), split into real and imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor {
    pub shape: Vec<usize>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ComplexTensor {
    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        ComplexTensor {
            shape,
            re: vec![0.0; n],
            im: vec![0.0; n],
        }
    }

    pub fn numel(&self) -> usize {
        self.re.len()
    }

    pub fn get(&self, i: usize) -> Complex64 {
        Complex64::new(self.re[i], self.im[i])
    }

    pub fn set(&mut self, i: usize, v: Complex64) {
        self.re[i] = v.re;
        self.im[i] = v.im;
    }

    /// Squared 2-norm Σ|zᵢ|².
    pub fn norm_sq(&self) -> f64 {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(r, i)| r * r + i * i)
            .sum()
    }

    pub fn check_finite(&self, op: &str) -> Result<()> {
        let ok = self.re.iter().all(|v| v.is_finite()) && self.im.iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::NonFinite { op: op.to_string() })
        }
    }

    /// ⟨self|other⟩ with the left side conjugated.
    pub fn inner(&self, other: &ComplexTensor) -> Complex64 {
        debug_assert_eq!(self.numel(), other.numel());
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..self.numel() {
            acc += self.get(i).conj() * other.get(i);
        }
        acc
    }
}

/// Apply a 2×2 unitary to every amplitude pair differing in `bit`.
/// `m` is row-major `[m00, m01, m10, m11]`.
pub fn apply_gate2(state: &mut ComplexTensor, m: &[Complex64; 4], bit: usize) {
    let n = state.numel();
    debug_assert!(bit < n && bit.is_power_of_two());
    for base in 0..n {
        if base & bit == 0 {
            let i0 = base;
            let i1 = base | bit;
            let a = state.get(i0);
            let b = state.get(i1);
            state.set(i0, m[0] * a + m[1] * b);
            state.set(i1, m[2] * a + m[3] * b);
        }
    }
}

/// Apply a 4×4 unitary to the two-qubit subspace given by (`bit_hi`,
/// `bit_lo`); the 2-bit subindex is `2·bit(hi) + bit(lo)`. `m` is row-major.
pub fn apply_gate4(state: &mut ComplexTensor, m: &[Complex64; 16], bit_hi: usize, bit_lo: usize) {
    let n = state.numel();
    debug_assert!(bit_hi != bit_lo);
    for base in 0..n {
        if base & bit_hi == 0 && base & bit_lo == 0 {
            let idx = [base, base | bit_lo, base | bit_hi, base | bit_hi | bit_lo];
            let amp = [
                state.get(idx[0]),
                state.get(idx[1]),
                state.get(idx[2]),
                state.get(idx[3]),
            ];
            for row in 0..4 {
                let mut acc = Complex64::new(0.0, 0.0);
                for col in 0..4 {
                    acc += m[row * 4 + col] * amp[col];
                }
                state.set(idx[row], acc);
            }
        }
    }
}

/// Dense square complex matrix used by oracles and unitarity checks.
#[derive(Debug, Clone)]
pub struct CMat {
    pub n: usize,
    pub data: Vec<Complex64>,
}

impl CMat {
    pub fn identity(n: usize) -> Self {
        let mut data = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        CMat { n, data }
    }

    pub fn from_rows(n: usize, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(data.len(), n * n);
        CMat { n, data }
    }

    pub fn mul(&self, other: &CMat) -> CMat {
        debug_assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a.norm_sqr() != 0.0 {
                    for j in 0..n {
                        out[i * n + j] += a * other.data[k * n + j];
                    }
                }
            }
        }
        CMat { n, data: out }
    }

    pub fn dagger(&self) -> CMat {
        let n = self.n;
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                out[j * n + i] = self.data[i * n + j].conj();
            }
        }
        CMat { n, data: out }
    }

    pub fn kron(&self, other: &CMat) -> CMat {
        let (a, b) = (self.n, other.n);
        let n = a * b;
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..a {
            for j in 0..a {
                let v = self.data[i * a + j];
                for p in 0..b {
                    for q in 0..b {
                        out[(i * b + p) * n + (j * b + q)] = v * other.data[p * b + q];
                    }
                }
            }
        }
        CMat { n, data: out }
    }

    pub fn apply(&self, v: &ComplexTensor) -> ComplexTensor {
        let n = self.n;
        debug_assert_eq!(v.numel(), n);
        let mut out = ComplexTensor::zeros(v.shape.clone());
        for i in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..n {
                acc += self.data[i * n + j] * v.get(j);
            }
            out.set(i, acc);
        }
        out
    }

    /// max |(U†U − I)ᵢⱼ|, the unitarity defect.
    pub fn unitarity_defect(&self) -> f64 {
        let p = self.dagger().mul(self);
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j { 1.0 } else { 0.0 };
                let d = (p.data[i * n + j] - Complex64::new(expect, 0.0)).norm();
                worst = worst.max(d);
            }
        }
        worst
    }
}
