use std::collections::BTreeMap;

use super::graph::Graph;
use super::tensor::RealTensor;
use crate::error::{KunnError, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Named trainable tensors together with their ADAM moment estimates.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamSet {
    params: BTreeMap<String, RealTensor>,
    adam_m: BTreeMap<String, RealTensor>,
    adam_v: BTreeMap<String, RealTensor>,
    step_count: u64,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: RealTensor) {
        let name = name.into();
        self.adam_m.insert(name.clone(), RealTensor::zeros(value.shape()));
        self.adam_v.insert(name.clone(), RealTensor::zeros(value.shape()));
        self.params.insert(name, value);
    }

    pub fn get(&self, name: &str) -> Option<&RealTensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut RealTensor> {
        self.params.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &RealTensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self, name: &str) -> Option<&RealTensor> {
        self.adam_m.get(name)
    }

    pub fn second_moment(&self, name: &str) -> Option<&RealTensor> {
        self.adam_v.get(name)
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|t| t.len()).sum()
    }

    /// Copy every parameter into the matching leaf of `graph`.
    pub fn load_into(&self, graph: &mut Graph) -> Result<()> {
        for (name, value) in &self.params {
            graph.set_param(name, value.clone())?;
        }
        Ok(())
    }

    /// One bias-corrected ADAM update (beta1 = 0.9, beta2 = 0.999, eps = 1e-8).
    pub fn adam_step(&mut self, grads: &BTreeMap<String, RealTensor>, lr: f64) -> Result<()> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(KunnError::invalid(format!("learning rate must be positive, got {lr}")));
        }
        if grads.len() != self.params.len() {
            return Err(KunnError::invalid(format!(
                "{} gradients for {} parameters",
                grads.len(),
                self.params.len()
            )));
        }
        for (name, p) in &self.params {
            let g = grads
                .get(name)
                .ok_or_else(|| KunnError::invalid(format!("missing gradient for '{name}'")))?;
            if g.shape() != p.shape() {
                return Err(KunnError::shape(
                    format!("gradient '{name}'"),
                    format!("{:?} vs parameter {:?}", g.shape(), p.shape()),
                ));
            }
            if !g.is_finite() {
                return Err(KunnError::NonFinite(format!("gradient of '{name}'")));
            }
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - BETA1.powi(t);
        let bc2 = 1.0 - BETA2.powi(t);
        for (name, p) in self.params.iter_mut() {
            let g = &grads[name];
            let m = self.adam_m.get_mut(name).expect("moments mirror params");
            let v = self.adam_v.get_mut(name).expect("moments mirror params");
            for (((pv, gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = BETA1 * *mv + (1.0 - BETA1) * gv;
                *vv = BETA2 * *vv + (1.0 - BETA2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
        Ok(())
    }
}
