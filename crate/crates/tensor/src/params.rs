//! Named parameter storage and the Adam optimizer.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;

use crate::array::Tensor;
use crate::error::{Result, TensorError};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
struct Entry {
    name: String,
    value: Tensor,
    m: Tensor,
    v: Tensor,
}

/// Ordered name → array map. Iteration follows insertion order, shapes never
/// change after creation.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<Entry>,
    index: HashMap<String, usize>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(TensorError::DuplicateParameter(name));
        }
        let (r, c) = value.shape();
        let id = self.entries.len();
        self.index.insert(name.clone(), id);
        self.entries.push(Entry { name, value, m: Tensor::zeros(r, c), v: Tensor::zeros(r, c) });
        Ok(ParamId(id))
    }

    /// Glorot-uniform weights: U(−√(6/(fan_in+fan_out)), +√(6/(fan_in+fan_out))).
    pub fn insert_glorot<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        fan_out: usize,
        fan_in: usize,
        rng: &mut R,
    ) -> Result<ParamId> {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_out * fan_in).map(|_| rng.random_range(-limit..=limit)).collect();
        self.insert(name, Tensor::from_vec(fan_out, fan_in, data))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn require(&self, name: &str) -> Result<ParamId> {
        self.id(name).ok_or_else(|| TensorError::UnknownParameter(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| self.value(id))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let id = self.id(name)?;
        Some(self.value_mut(id))
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Optimizer steps taken so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|e| (e.name.as_str(), &e.value))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    /// Copies every parameter value of `other` that shares a name with this
    /// store (used for target-network syncs).
    pub fn copy_values_from(&mut self, other: &ParamStore, prefix_from: &str, prefix_to: &str) -> Result<()> {
        for e in &other.entries {
            if let Some(rest) = e.name.strip_prefix(prefix_from) {
                let target = format!("{prefix_to}{rest}");
                let id = self.require(&target)?;
                let dst = self.value_mut(id);
                if dst.shape() != e.value.shape() {
                    return Err(TensorError::ShapeMismatch(format!("copy into `{target}`")));
                }
                *dst = e.value.clone();
            }
        }
        Ok(())
    }

    /// Polyak averaging `to ← (1−τ)·to + τ·from` over matching prefixes of the same store.
    pub fn soft_update(&mut self, prefix_from: &str, prefix_to: &str, tau: f64) -> Result<()> {
        let pairs: Vec<(usize, usize)> = self
            .entries
            .iter()
            .enumerate()
            .filter_map(|(i, e)| {
                let rest = e.name.strip_prefix(prefix_from)?;
                Some((i, *self.index.get(&format!("{prefix_to}{rest}"))?))
            })
            .collect();
        for (src, dst) in pairs {
            let from = self.entries[src].value.clone();
            let to = &mut self.entries[dst].value;
            if to.shape() != from.shape() {
                return Err(TensorError::ShapeMismatch("soft update".into()));
            }
            for (t, f) in to.data_mut().iter_mut().zip(from.data()) {
                *t = (1.0 - tau) * *t + tau * f;
            }
        }
        Ok(())
    }

    pub(crate) fn set_step(&mut self, step: u64) {
        self.step = step;
    }
}

/// Gradients keyed by parameter name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    map: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.map.get(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, grad: Tensor) {
        self.map.insert(name.into(), grad);
    }

    /// Adds `grad` to the accumulated gradient for `name`.
    pub fn accumulate(&mut self, name: &str, grad: &Tensor) {
        match self.map.get_mut(name) {
            Some(g) => g.add_assign(grad),
            None => {
                self.map.insert(name.to_string(), grad.clone());
            }
        }
    }

    pub fn merge(&mut self, other: &Gradients) {
        for (k, g) in &other.map {
            self.accumulate(k, g);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.map.values_mut() {
            g.scale_assign(s);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Adam with optional per-prefix learning rates and decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay: `w ← w − lr·wd·w` before the moment update.
    pub weight_decay: f64,
    /// `(name prefix, learning rate)`; the longest matching prefix wins.
    pub lr_overrides: Vec<(String, f64)>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0, lr_overrides: Vec::new() }
    }

    pub fn with_override(mut self, prefix: impl Into<String>, lr: f64) -> Self {
        self.lr_overrides.push((prefix.into(), lr));
        self
    }

    pub fn with_weight_decay(mut self, wd: f64) -> Self {
        self.weight_decay = wd;
        self
    }

    pub fn lr_for(&self, name: &str) -> f64 {
        self.lr_overrides
            .iter()
            .filter(|(p, _)| name.starts_with(p.as_str()))
            .max_by_key(|(p, _)| p.len())
            .map_or(self.lr, |&(_, lr)| lr)
    }

    /// One Adam update over every parameter that has a gradient. The store's
    /// step counter advances exactly once per call.
    pub fn step(&self, store: &mut ParamStore, grads: &Gradients) -> Result<()> {
        let mut ids = Vec::with_capacity(grads.len());
        for (name, g) in grads.iter() {
            let id = store.require(name)?;
            if store.value(id).shape() != g.shape() {
                return Err(TensorError::ShapeMismatch(format!("gradient for `{name}`")));
            }
            ids.push((id, name, g));
        }
        let t = store.step + 1;
        let bc1 = 1.0 - self.beta1.powi(t as i32);
        let bc2 = 1.0 - self.beta2.powi(t as i32);
        for (id, name, g) in ids {
            let lr = self.lr_for(name);
            let e = &mut store.entries[id.0];
            let (w, m, v) = (e.value.data_mut(), e.m.data_mut(), e.v.data_mut());
            for (((w, m), v), &g) in w.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g.data()) {
                if self.weight_decay != 0.0 {
                    *w -= lr * self.weight_decay * *w;
                }
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *w -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        store.step = t;
        Ok(())
    }
}
