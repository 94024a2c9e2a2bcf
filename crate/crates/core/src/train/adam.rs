use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::params::ParamStore;
use crate::tensor::{Element, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| b > 0.0 && b < 1.0;
        if !(self.lr > 0.0 && unit(self.beta1) && unit(self.beta2) && self.eps > 0.0) {
            return Err(Error::Config(format!("invalid optimizer settings {self:?}")));
        }
        Ok(())
    }
}

/// One Adam update of a flat buffer at (1-based) step `t`.
pub fn adam_update<T: Element>(param: &mut [T], grad: &[T], m: &mut [T], v: &mut [T], t: u64, cfg: &AdamConfig) {
    let (b1, b2) = (T::from_f64(cfg.beta1), T::from_f64(cfg.beta2));
    let c1 = T::from_f64(1.0 - cfg.beta1.powi(t as i32));
    let c2 = T::from_f64(1.0 - cfg.beta2.powi(t as i32));
    let (lr, eps) = (T::from_f64(cfg.lr), T::from_f64(cfg.eps));
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = b1 * m[i] + (T::one() - b1) * g;
        v[i] = b2 * v[i] + (T::one() - b2) * g * g;
        let mh = m[i] / c1;
        let vh = v[i] / c2;
        param[i] -= lr * mh / (vh.sqrt() + eps);
    }
}

/// First and second moment buffers for every parameter.
#[derive(Clone, Debug)]
pub struct Adam<T: Element> {
    pub cfg: AdamConfig,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    step: u64,
}

impl<T: Element> Adam<T> {
    pub fn new(cfg: AdamConfig, params: &ParamStore<T>) -> Self {
        let zeros = || params.values().iter().map(|p| vec![T::zero(); p.numel()]).collect();
        Self {
            cfg,
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update. A missing gradient counts as zero.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &[Option<Tensor<T>>]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(dim_err!("{} gradients for {} parameters", grads.len(), params.len()));
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if g.shape() != params.values()[i].shape() {
                    return Err(dim_err!(
                        "gradient {:?} for parameter `{}` {:?}",
                        g.shape(),
                        params.specs()[i].name,
                        params.values()[i].shape()
                    ));
                }
            }
        }
        self.step += 1;
        let mut zero = Vec::new();
        for (i, g) in grads.iter().enumerate() {
            let gd = match g {
                Some(g) => g.data(),
                None => {
                    zero.resize(self.m[i].len(), T::zero());
                    &zero[..self.m[i].len()]
                }
            };
            adam_update(params.data_mut(i), gd, &mut self.m[i], &mut self.v[i], self.step, &self.cfg);
        }
        Ok(())
    }
}
