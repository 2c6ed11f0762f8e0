//! Parameter storage, initialization, and optimization shared by the
//! autoencoder and the denoiser.

use std::collections::BTreeMap;

use ndarray::{ArrayD, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::tensor::{Tape, VarId};

/// Named parameter tensors. A `BTreeMap` keeps iteration order stable so
/// binding, optimizer sweeps, and checkpoints are deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    map: BTreeMap<String, ArrayD<f64>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: ArrayD<f64>) {
        self.map.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&ArrayD<f64>> {
        self.map.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ArrayD<f64>> {
        self.map.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ArrayD<f64>)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.map.values().map(|v| v.len()).sum()
    }

    pub fn into_map(self) -> BTreeMap<String, ArrayD<f64>> {
        self.map
    }

    pub fn from_map(map: BTreeMap<String, ArrayD<f64>>) -> Self {
        Self { map }
    }

    /// True when every tensor matches `other` exactly (shape and bits).
    pub fn bit_equal(&self, other: &ParamStore) -> bool {
        if self.map.len() != other.map.len() {
            return false;
        }
        self.map.iter().all(|(k, v)| {
            other
                .map
                .get(k)
                .map(|o| o.shape() == v.shape() && o.iter().zip(v.iter()).all(|(a, b)| a == b))
                .unwrap_or(false)
        })
    }
}

/// Parameters bound onto a tape as gradient-tracked leaves.
pub struct BoundParams {
    ids: BTreeMap<String, VarId>,
}

impl BoundParams {
    pub fn id(&self, name: &str) -> VarId {
        *self
            .ids
            .get(name)
            .unwrap_or_else(|| panic!("unbound parameter `{name}`"))
    }
}

/// Binds every parameter as a trainable tape leaf.
pub fn bind_params(tape: &mut Tape, store: &ParamStore) -> BoundParams {
    let ids = store
        .iter()
        .map(|(name, value)| (name.clone(), tape.param(value.clone())))
        .collect();
    BoundParams { ids }
}

/// Binds every parameter as a frozen (no-grad) tape leaf.
pub fn bind_frozen(tape: &mut Tape, store: &ParamStore) -> BoundParams {
    let ids = store
        .iter()
        .map(|(name, value)| (name.clone(), tape.leaf(value.clone())))
        .collect();
    BoundParams { ids }
}

/// Collects gradients for every bound parameter; absent gradients are zero.
pub fn collect_grads(
    tape: &Tape,
    bound: &BoundParams,
    grads: &crate::tensor::Gradients,
    store: &ParamStore,
) -> BTreeMap<String, ArrayD<f64>> {
    let _ = tape;
    store
        .iter()
        .map(|(name, value)| {
            let g = grads
                .get(bound.id(name))
                .cloned()
                .unwrap_or_else(|| ArrayD::zeros(value.raw_dim()));
            (name.clone(), g)
        })
        .collect()
}

/// Global L2 norm over a gradient map.
pub fn global_norm(grads: &BTreeMap<String, ArrayD<f64>>) -> f64 {
    grads
        .values()
        .map(|g| g.iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// Scales gradients in place so the global norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut BTreeMap<String, ArrayD<f64>>, max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.values_mut() {
            g.mapv_inplace(|x| x * s);
        }
    }
    norm
}

/// True when any gradient entry is NaN or infinite.
pub fn has_non_finite(grads: &BTreeMap<String, ArrayD<f64>>) -> bool {
    grads.values().any(|g| g.iter().any(|x| !x.is_finite()))
}

/// Adam optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: BTreeMap<String, ArrayD<f64>>,
    v: BTreeMap<String, ArrayD<f64>>,
}

/// Serializable Adam hyperparameters (moments travel as checkpoint tensors).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_adam_eps")]
    pub eps: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}

impl Adam {
    pub fn new(cfg: &AdamConfig) -> Self {
        Self {
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One Adam update. Missing moment entries start at zero.
    pub fn step(&mut self, params: &mut ParamStore, grads: &BTreeMap<String, ArrayD<f64>>) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (name, g) in grads {
            let p = params
                .get_mut(name)
                .unwrap_or_else(|| panic!("gradient for unknown parameter `{name}`"));
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(g.raw_dim()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(g.raw_dim()));
            ndarray::Zip::from(p)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|p, m, v, g| {
                    *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                    *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                    let mh = *m / bc1;
                    let vh = *v / bc2;
                    *p -= self.lr * mh / (vh.sqrt() + self.eps);
                });
        }
    }

    /// Exports moment tensors for checkpointing, prefixed per slot.
    pub fn export_state(&self) -> BTreeMap<String, ArrayD<f64>> {
        let mut out = BTreeMap::new();
        for (k, v) in &self.m {
            out.insert(format!("adam.m.{k}"), v.clone());
        }
        for (k, v) in &self.v {
            out.insert(format!("adam.v.{k}"), v.clone());
        }
        out.insert(
            "adam.t".to_string(),
            ArrayD::from_elem(IxDyn(&[]), self.t as f64),
        );
        out
    }

    /// Restores moments previously produced by [`Adam::export_state`].
    pub fn import_state(&mut self, state: &BTreeMap<String, ArrayD<f64>>) {
        self.m.clear();
        self.v.clear();
        for (k, v) in state {
            if let Some(name) = k.strip_prefix("adam.m.") {
                self.m.insert(name.to_string(), v.clone());
            } else if let Some(name) = k.strip_prefix("adam.v.") {
                self.v.insert(name.to_string(), v.clone());
            } else if k == "adam.t" {
                self.t = v.iter().next().copied().unwrap_or(0.0) as u64;
            }
        }
    }
}

/// He-style normal init: stddev `sqrt(2 / fan_in)`.
pub fn he_normal(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> ArrayD<f64> {
    let std = (2.0 / fan_in as f64).sqrt();
    let dist = Normal::new(0.0, std).unwrap();
    ArrayD::from_shape_fn(IxDyn(shape), |_| dist.sample(rng))
}

pub fn zeros(shape: &[usize]) -> ArrayD<f64> {
    ArrayD::zeros(IxDyn(shape))
}

/// Stable sub-seed derivation: mixes a base seed with a label so independent
/// random streams never alias across stages, records, or updates.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

/// ChaCha stream seeded via [`derive_seed`].
pub fn seeded_rng(base: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, label))
}
