//! Adam optimizer with bias correction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::graph::Gradients;
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-parameter first/second moment accumulators plus a shared step count.
/// Moments are allocated lazily the first time a parameter shows up, so one
/// state can serve a parameter set that is decided at runtime.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdamState {
    pub hyper: AdamHyper,
    step_count: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl AdamState {
    pub fn new(hyper: AdamHyper) -> Self {
        AdamState {
            hyper,
            step_count: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update in place: `p -= lr * m_hat / (sqrt(v_hat) + eps)`.
    ///
    /// Parameters without a matching gradient are left untouched; gradients
    /// without a matching parameter are an error.
    pub fn step(
        &mut self,
        params: &mut BTreeMap<String, Tensor>,
        grads: &Gradients,
    ) -> Result<()> {
        self.step_count += 1;
        let t = self.step_count as i32;
        let h = self.hyper;
        let bc1 = 1.0 - h.beta1.powi(t);
        let bc2 = 1.0 - h.beta2.powi(t);

        for (name, grad) in grads {
            let param = params.get_mut(name).ok_or_else(|| {
                Error::UnknownInput(format!("gradient for unknown parameter '{name}'"))
            })?;
            if param.shape() != grad.shape() {
                return Err(Error::shape(
                    "adam_step",
                    format!(
                        "parameter '{name}' is {:?}, gradient is {:?}",
                        param.shape(),
                        grad.shape()
                    ),
                ));
            }
            if !grad.is_finite() {
                return Err(Error::NonFinite(format!("gradient for '{name}'")));
            }
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(param.shape().to_vec()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(param.shape().to_vec()));
            for ((p, g), (mi, vi)) in param
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut()))
            {
                *mi = h.beta1 * *mi + (1.0 - h.beta1) * g;
                *vi = h.beta2 * *vi + (1.0 - h.beta2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *p -= h.lr * m_hat / (v_hat.sqrt() + h.epsilon);
            }
        }
        Ok(())
    }
}
