use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be > 0".into()));
        }
        Ok(())
    }
}

/// Bias-corrected Adam moments for one group of parameters.
#[derive(Clone, Debug)]
pub struct AdamState<F> {
    pub config: AdamConfig,
    step: u64,
    first: BTreeMap<ParamId, Vec<F>>,
    second: BTreeMap<ParamId, Vec<F>>,
}

impl<F: Real> AdamState<F> {
    pub fn new(config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            step: 0,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, id: ParamId) -> Option<&[F]> {
        self.first.get(&id).map(Vec::as_slice)
    }

    pub fn second_moment(&self, id: ParamId) -> Option<&[F]> {
        self.second.get(&id).map(Vec::as_slice)
    }

    /// Applies one update to every parameter in `ids` using the gradients
    /// stored in `store`. A parameter with no gradient buffer is treated as
    /// having a zero gradient.
    pub fn step(&mut self, store: &mut ParamStore<F>, ids: &BTreeSet<ParamId>) -> Result<()> {
        for &id in ids {
            let p = store.get(id);
            if let Some(g) = p.value.grad() {
                if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
                    return Err(Error::numerical(
                        format!("gradient of {}", p.name),
                        format!("non-finite value {bad}"),
                    ));
                }
            }
        }
        self.step += 1;
        let c = &self.config;
        let b1 = F::from_f64_lossy(c.beta1);
        let b2 = F::from_f64_lossy(c.beta2);
        let lr = F::from_f64_lossy(c.lr);
        let eps = F::from_f64_lossy(c.epsilon);
        let t = self.step as i32;
        let corr1 = F::one() - F::from_f64_lossy(c.beta1.powi(t));
        let corr2 = F::one() - F::from_f64_lossy(c.beta2.powi(t));

        for &id in ids {
            let param = store.get_mut(id);
            let n = param.value.numel();
            let grad: Vec<F> = param
                .value
                .grad()
                .map(<[F]>::to_vec)
                .unwrap_or_else(|| vec![F::zero(); n]);
            let m = self.first.entry(id).or_insert_with(|| vec![F::zero(); n]);
            let v = self.second.entry(id).or_insert_with(|| vec![F::zero(); n]);
            let data = param.value.data_mut();
            for i in 0..n {
                let g = grad[i];
                m[i] = b1 * m[i] + (F::one() - b1) * g;
                v[i] = b2 * v[i] + (F::one() - b2) * g * g;
                let mhat = m[i] / corr1;
                let vhat = v[i] / corr2;
                data[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Global L2 norm of the gradients in `ids`.
pub fn grad_norm<F: Real>(store: &ParamStore<F>, ids: &BTreeSet<ParamId>) -> f64 {
    ids.iter()
        .filter_map(|&id| store.value(id).grad())
        .flat_map(|g| g.iter())
        .map(|v| {
            let x = v.as_f64();
            x * x
        })
        .sum::<f64>()
        .sqrt()
}

/// Rescales the gradients in `ids` so their global norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_grad_norm<F: Real>(
    store: &mut ParamStore<F>,
    ids: &BTreeSet<ParamId>,
    max_norm: f64,
) -> f64 {
    let norm = grad_norm(store, ids);
    if norm.is_finite() && norm > max_norm && norm > 0.0 {
        let k = F::from_f64_lossy(max_norm / norm);
        for &id in ids {
            let value = &mut store.get_mut(id).value;
            if value.grad().is_some() {
                value.grad_mut().iter_mut().for_each(|g| *g *= k);
            }
        }
    }
    norm
}
