//! Named parameter registry and storage.
//!
//! Modules declare their parameters against a [`Registry`] (shapes and
//! initializers only, nothing allocated), which makes parameter counting
//! free at any scale. A [`ParamStore`] materializes the values; binding it to
//! a tape yields one [`Var`] per parameter.

use std::collections::HashMap;
use std::sync::Arc;

use rand_distr::{Distribution, Normal, Uniform};

use crate::autograd::{Tape, Var};
use crate::error::{dim_err, Error, Result};
use crate::rng::Rng;
use crate::tensor::{numel, Element, Tensor};

/// How a parameter is filled at construction.
#[derive(Clone, Debug, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// Uniform in `[-bound, bound]`.
    Uniform(f64),
    Normal(f64),
    /// `ln(j + 1)` along the last axis, so that `-exp` gives `-(j + 1)`.
    StateLog,
    /// Inverse softplus of a log-uniform step in `[lo, hi]`.
    StepBias { lo: f64, hi: f64 },
}

impl Init {
    /// Kaiming-uniform bound for a layer with `fan_in` inputs.
    pub fn fan_in(fan_in: usize) -> Init {
        Init::Uniform(1.0 / (fan_in.max(1) as f64).sqrt())
    }
}

#[derive(Clone, Debug)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

/// Index of a parameter inside its registry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, Default)]
pub struct Registry {
    specs: Vec<ParamSpec>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn param(&mut self, name: impl Into<String>, shape: &[usize], init: Init) -> ParamId {
        let name = name.into();
        debug_assert!(
            self.specs.iter().all(|s| s.name != name),
            "duplicate parameter {name}"
        );
        self.specs.push(ParamSpec {
            name,
            shape: shape.to_vec(),
            init,
        });
        ParamId(self.specs.len() - 1)
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    /// Total number of learnable scalars.
    pub fn count(&self) -> usize {
        self.specs.iter().map(|s| numel(&s.shape)).sum()
    }
}

/// Materialized parameter values in registry order.
#[derive(Clone, Debug)]
pub struct ParamStore<T: Element> {
    specs: Vec<ParamSpec>,
    values: Vec<Arc<Tensor<T>>>,
}

fn fill(spec: &ParamSpec, rng: &mut Rng) -> Vec<f64> {
    let n = numel(&spec.shape);
    match spec.init {
        Init::Zeros => vec![0.0; n],
        Init::Ones => vec![1.0; n],
        Init::Uniform(b) => {
            let d = Uniform::new_inclusive(-b, b).expect("finite bound");
            (0..n).map(|_| d.sample(rng)).collect()
        }
        Init::Normal(std) => {
            let d = Normal::new(0.0, std).expect("finite std");
            (0..n).map(|_| d.sample(rng)).collect()
        }
        Init::StateLog => {
            let last = *spec.shape.last().unwrap_or(&1);
            (0..n).map(|i| ((i % last) as f64 + 1.0).ln()).collect()
        }
        Init::StepBias { lo, hi } => {
            let d = Uniform::new(lo.ln(), hi.ln()).expect("valid range");
            (0..n)
                .map(|_| {
                    let dt: f64 = d.sample(rng).exp();
                    // softplus^-1(dt) = dt + ln(1 - e^-dt)
                    dt + (-(-dt).exp_m1()).ln()
                })
                .collect()
        }
    }
}

impl<T: Element> ParamStore<T> {
    /// Initialize every parameter. Each tensor draws from its own stream
    /// keyed by its position, so adding a parameter never perturbs others.
    pub fn init(registry: &Registry, rng: &Rng) -> Self {
        let values = registry
            .specs
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let mut r = rng.split(i as u64);
                let data: Vec<T> = fill(s, &mut r).into_iter().map(T::from_f64).collect();
                Arc::new(Tensor::from_parts(s.shape.clone(), data))
            })
            .collect();
        Self {
            specs: registry.specs.clone(),
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn count(&self) -> usize {
        self.values.iter().map(|v| v.numel()).sum()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn values(&self) -> &[Arc<Tensor<T>>] {
        &self.values
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.specs.iter().position(|s| s.name == name).map(|i| &*self.values[i])
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.specs.iter().map(|s| s.name.as_str())
    }

    /// Replace one value; the shape must not change.
    pub fn set(&mut self, id: ParamId, value: Tensor<T>) -> Result<()> {
        let spec = &self.specs[id.0];
        if value.shape() != spec.shape.as_slice() {
            return Err(Error::Incompatible {
                tensor: spec.name.clone(),
                reason: format!("shape {:?}, expected {:?}", value.shape(), spec.shape),
            });
        }
        self.values[id.0] = Arc::new(value);
        Ok(())
    }

    /// Mutable access to the buffer of one parameter (copy-on-write).
    pub fn data_mut(&mut self, index: usize) -> &mut [T] {
        Arc::make_mut(&mut self.values[index]).data_mut()
    }

    /// Replace every value at once from a name-keyed map. Nothing is
    /// assigned unless every tensor is present with the right shape.
    pub fn load_named(&mut self, mut named: HashMap<String, Tensor<T>>) -> Result<()> {
        for s in &self.specs {
            match named.get(&s.name) {
                None => {
                    return Err(Error::Incompatible {
                        tensor: s.name.clone(),
                        reason: "missing from checkpoint".into(),
                    })
                }
                Some(t) if t.shape() != s.shape.as_slice() => {
                    return Err(Error::Incompatible {
                        tensor: s.name.clone(),
                        reason: format!("shape {:?}, expected {:?}", t.shape(), s.shape),
                    })
                }
                _ => {}
            }
        }
        if named.len() != self.specs.len() {
            let mut extra: Vec<_> = named
                .keys()
                .filter(|k| self.specs.iter().all(|s| &s.name != *k))
                .cloned()
                .collect();
            extra.sort();
            return Err(Error::Incompatible {
                tensor: extra.into_iter().next().unwrap_or_default(),
                reason: "not part of this model".into(),
            });
        }
        for (s, v) in self.specs.iter().zip(self.values.iter_mut()) {
            *v = Arc::new(named.remove(&s.name).expect("checked above"));
        }
        Ok(())
    }

    /// Record every parameter as a leaf on `tape`.
    pub fn bind<'t>(&self, tape: &'t Tape<T>, requires_grad: bool) -> Bound<'t, T> {
        Bound {
            vars: self.values.iter().map(|v| tape.leaf(v.clone(), requires_grad)).collect(),
        }
    }
}

/// Parameters recorded on one tape.
pub struct Bound<'t, T: Element> {
    vars: Vec<Var<'t, T>>,
}

impl<'t, T: Element> Bound<'t, T> {
    /// Use caller-recorded variables as the parameters, one per registry
    /// entry in order. Shapes are checked against `store`.
    pub fn from_vars(store: &ParamStore<T>, vars: &[Var<'t, T>]) -> Result<Self> {
        if vars.len() != store.len() {
            return Err(dim_err!("expected {} parameter variables, got {}", store.len(), vars.len()));
        }
        for (v, spec) in vars.iter().zip(store.specs()) {
            if v.shape() != spec.shape {
                return Err(dim_err!("parameter `{}` is {:?}, got {:?}", spec.name, spec.shape, v.shape()));
            }
        }
        Ok(Self { vars: vars.to_vec() })
    }

    pub fn var(&self, id: ParamId) -> Var<'t, T> {
        self.vars[id.0]
    }

    /// Gradients in registry order after `backward`; `None` where a
    /// parameter did not influence the loss.
    pub fn grads(&self) -> Vec<Option<Tensor<T>>> {
        self.vars.iter().map(|v| v.take_grad()).collect()
    }
}

impl<'t, T: Element> std::ops::Index<ParamId> for Bound<'t, T> {
    type Output = Var<'t, T>;

    fn index(&self, id: ParamId) -> &Var<'t, T> {
        &self.vars[id.0]
    }
}
