//! Adam optimizer with bias correction.

use super::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

struct Slot {
    name: String,
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Per-parameter first/second moment state plus the shared step counter.
pub struct AdamState {
    pub hyper: AdamHyper,
    step: u64,
    slots: Vec<Slot>,
}

impl AdamState {
    /// Allocate moment buffers congruent with the given parameter groups.
    pub fn new(hyper: AdamHyper, params: &[(String, &Tensor)]) -> Self {
        let slots = params
            .iter()
            .map(|(name, t)| Slot {
                name: name.clone(),
                m: vec![0.0; t.numel()],
                v: vec![0.0; t.numel()],
            })
            .collect();
        AdamState {
            hyper,
            step: 0,
            slots,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update. `params` and `grads` must be ordered exactly as the
    /// groups passed to [`AdamState::new`]. Deterministic given inputs.
    pub fn step(&mut self, params: &mut [(String, &mut Tensor)], grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != self.slots.len() || grads.len() != self.slots.len() {
            return Err(Error::domain(format!(
                "adam: expected {} parameter groups, got {} params / {} grads",
                self.slots.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((slot, (name, _)), g) in self.slots.iter().zip(params.iter()).zip(grads) {
            if slot.name != *name {
                return Err(Error::domain(format!(
                    "adam: parameter group order changed ({} vs {})",
                    slot.name, name
                )));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericalAbort(format!(
                    "NaN/Inf gradient in parameter group '{name}'"
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let h = self.hyper;
        let bc1 = 1.0 - h.beta1.powi(t);
        let bc2 = 1.0 - h.beta2.powi(t);
        for (slot, ((_, param), g)) in self.slots.iter_mut().zip(params.iter_mut().zip(grads)) {
            let data = param.data_mut();
            for i in 0..data.len() {
                slot.m[i] = h.beta1 * slot.m[i] + (1.0 - h.beta1) * g[i];
                slot.v[i] = h.beta2 * slot.v[i] + (1.0 - h.beta2) * g[i] * g[i];
                let m_hat = slot.m[i] / bc1;
                let v_hat = slot.v[i] / bc2;
                data[i] -= h.lr * m_hat / (v_hat.sqrt() + h.eps);
            }
        }
        Ok(())
    }
}
