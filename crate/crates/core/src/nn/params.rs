use std::collections::HashMap;

use rand::Rng;
use sha2::{Digest, Sha256};

use super::{NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Named parameters with their Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    pub(crate) first_moment: Vec<Tensor>,
    pub(crate) second_moment: Vec<Tensor>,
    pub(crate) step: u64,
    index: HashMap<String, usize>,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            step: 0,
            index: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> Result<ParamId, NnError> {
        if self.index.contains_key(name) {
            return Err(NnError::DuplicateParam(name.to_string()));
        }
        value.check_finite(name)?;
        let id = self.values.len();
        self.first_moment.push(Tensor::zeros(value.shape()));
        self.second_moment.push(Tensor::zeros(value.shape()));
        self.values.push(value);
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        Ok(ParamId(id))
    }

    /// Kaiming-uniform initialised parameter: `U(-b, b)`, `b = sqrt(6 / fan_in)`.
    pub fn add_kaiming<R: Rng>(&mut self, name: &str, shape: &[usize], fan_in: usize, rng: &mut R) -> Result<ParamId, NnError> {
        let bound = (6.0 / fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
        self.add(name, Tensor::from_vec(shape, data)?)
    }

    pub fn add_constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<ParamId, NnError> {
        let mut t = Tensor::zeros(shape);
        t.fill(value);
        self.add(name, t)
    }

    pub fn id(&self, name: &str) -> Result<ParamId, NnError> {
        self.index.get(name).map(|&i| ParamId(i)).ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn zero_grads(&self) -> Grads {
        Grads(self.values.iter().map(|v| Tensor::zeros(v.shape())).collect())
    }

    /// All parameter values flattened in store order.
    pub fn flatten(&self) -> Vec<f64> {
        self.values.iter().flat_map(|v| v.data().iter().copied()).collect()
    }

    /// Overwrites all parameter values from a flat vector in store order.
    pub fn unflatten(&mut self, flat: &[f64]) {
        let mut off = 0;
        for v in &mut self.values {
            let n = v.len();
            v.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        assert_eq!(off, flat.len(), "flat parameter vector length mismatch");
    }

    /// SHA-256 over names, shapes and exact value bits.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for (name, v) in self.names.iter().zip(&self.values) {
            h.update(name.as_bytes());
            for d in v.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for x in v.data() {
                h.update(x.to_bits().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Gradient buffers aligned with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads(pub(crate) Vec<Tensor>);

impl Grads {
    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.0[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.0[id.0]
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.0.iter_mut().for_each(|t| t.scale(s));
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.0.iter().flat_map(|v| v.data().iter().copied()).collect()
    }

    pub fn global_norm(&self) -> f64 {
        self.0.iter().flat_map(|t| t.data()).map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Rescales so the global L2 norm is at most `max_norm`.
    pub fn clip_global_norm(&mut self, max_norm: f64) {
        let n = self.global_norm();
        if n > max_norm && n.is_finite() {
            self.scale(max_norm / n);
        }
    }

    pub fn check_finite(&self, store: &ParamStore) -> Result<(), NnError> {
        for (i, g) in self.0.iter().enumerate() {
            g.check_finite(&format!("gradient of {}", store.names[i]))?;
        }
        Ok(())
    }
}
