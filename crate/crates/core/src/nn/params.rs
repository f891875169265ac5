use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::graph::{Grads, Graph, Var};
use super::tensor::Tensor;

static NEXT_STORE: AtomicU64 = AtomicU64::new(1);

/// Named parameter tensors of one network, plus their accumulated gradients.
pub struct ParamStore {
    uid: u64,
    names: Vec<String>,
    values: Vec<Arc<Tensor<f32>>>,
    grads: Vec<Option<Tensor<f32>>>,
    rng: ChaCha8Rng,
    frozen: bool,
}

impl Clone for ParamStore {
    fn clone(&self) -> Self {
        Self {
            uid: NEXT_STORE.fetch_add(1, Ordering::Relaxed),
            names: self.names.clone(),
            values: self
                .values
                .iter()
                .map(|v| Arc::new(Tensor::clone(v)))
                .collect(),
            grads: vec![None; self.values.len()],
            rng: self.rng.clone(),
            frozen: self.frozen,
        }
    }
}

impl std::fmt::Debug for ParamStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParamStore")
            .field("params", &self.names.len())
            .field("elements", &self.num_elements())
            .finish()
    }
}

impl ParamStore {
    /// Empty store whose initializers draw from a ChaCha stream keyed by `seed`.
    pub fn new(seed: u64) -> Self {
        Self {
            uid: NEXT_STORE.fetch_add(1, Ordering::Relaxed),
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            frozen: false,
        }
    }

    pub fn uid(&self) -> u64 {
        self.uid
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn value(&self, idx: usize) -> &Tensor<f32> {
        &self.values[idx]
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<f32>) -> usize {
        self.names.push(name.into());
        self.values.push(Arc::new(value));
        self.grads.push(None);
        self.values.len() - 1
    }

    /// Gaussian-initialized parameter.
    pub fn add_normal(&mut self, name: impl Into<String>, shape: [usize; 4], std: f64) -> usize {
        let normal = Normal::new(0.0, std).expect("valid std");
        let data = (0..shape.iter().product::<usize>())
            .map(|_| normal.sample(&mut self.rng) as f32)
            .collect();
        self.add(name, Tensor::from_vec(shape, data))
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: [usize; 4]) -> usize {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn var(&self, g: &mut Graph<f32>, idx: usize) -> Var {
        g.bind_param(self.uid, idx, &self.values[idx], self.frozen)
    }

    /// While frozen, parameters enter graphs as constants.
    pub fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    /// Collect gradients for every parameter of this store bound in `g`.
    pub fn accumulate(&mut self, g: &Graph<f32>, grads: &Grads<f32>) {
        for (idx, v) in g.bindings_for(self.uid) {
            if let Some(gr) = grads.get(v) {
                match &mut self.grads[idx] {
                    Some(acc) => acc.add_assign(gr),
                    slot @ None => *slot = Some(gr.clone()),
                }
            }
        }
    }

    pub fn grad(&self, idx: usize) -> Option<&Tensor<f32>> {
        self.grads[idx].as_ref()
    }

    /// Mutable access for optimizer updates; copies only if a graph still
    /// holds the old value.
    pub(crate) fn value_mut(&mut self, idx: usize) -> &mut Tensor<f32> {
        Arc::make_mut(&mut self.values[idx])
    }

    /// Overwrite values from a snapshot with identical names and shapes.
    pub fn load_values(&mut self, named: &[(String, Tensor<f32>)]) -> Result<(), String> {
        if named.len() != self.values.len() {
            return Err(format!(
                "expected {} tensors, found {}",
                self.values.len(),
                named.len()
            ));
        }
        for (i, (name, t)) in named.iter().enumerate() {
            if name != &self.names[i] || t.shape() != self.values[i].shape() {
                return Err(format!(
                    "tensor {i}: expected {} {:?}, found {name} {:?}",
                    self.names[i],
                    self.values[i].shape(),
                    t.shape()
                ));
            }
            self.values[i] = Arc::new(t.clone());
        }
        Ok(())
    }

    pub fn snapshot(&self) -> Vec<(String, Tensor<f32>)> {
        self.names
            .iter()
            .cloned()
            .zip(self.values.iter().map(|v| Tensor::clone(v)))
            .collect()
    }

    /// Bitwise equality of all parameter values.
    pub fn bit_equal(&self, other: &Self) -> bool {
        self.names == other.names
            && self.values.iter().zip(&other.values).all(|(a, b)| {
                a.shape() == b.shape()
                    && a.data()
                        .iter()
                        .zip(b.data())
                        .all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}

/// Adaptive-moment optimizer state for one [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Tensor<f32>>,
    pub v: Vec<Tensor<f32>>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64, beta1: f64, beta2: f64) -> Self {
        let zeros: Vec<Tensor<f32>> = (0..store.len())
            .map(|i| Tensor::zeros(store.value(i).shape()))
            .collect();
        Self {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Apply one update from the store's accumulated gradients, then clear them.
    pub fn step(&mut self, store: &mut ParamStore) {
        self.step += 1;
        let t = self.step as f64;
        let b1 = self.beta1 as f32;
        let b2 = self.beta2 as f32;
        let c1 = (1.0 - self.beta1.powf(t)) as f32;
        let c2 = (1.0 - self.beta2.powf(t)) as f32;
        let lr = self.lr as f32;
        let eps = self.eps as f32;
        for i in 0..store.len() {
            let Some(g) = store.grads[i].take() else { continue };
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let p = store.value_mut(i).data_mut();
            for j in 0..p.len() {
                let gj = g.data()[j];
                m[j] = b1 * m[j] + (1.0 - b1) * gj;
                v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                p[j] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}
