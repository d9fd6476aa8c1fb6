use rand::Rng;

use super::linalg::gemm;
use super::{shape_err, Grads, NnError, ParamId, ParamStore, Tensor};

/// Fully connected layer `y = x W + b` over rows of `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, inputs: usize, outputs: usize, rng: &mut R) -> Result<Self, NnError> {
        let weight = store.add_kaiming(&format!("{name}.weight"), &[inputs, outputs], inputs, rng)?;
        let bias = store.add_constant(&format!("{name}.bias"), &[outputs], 0.0)?;
        Ok(Self { weight, bias, inputs, outputs })
    }

    /// Rebinds to existing parameters `{name}.weight` / `{name}.bias`.
    pub fn bind(store: &ParamStore, name: &str) -> Result<Self, NnError> {
        let weight = store.id(&format!("{name}.weight"))?;
        let bias = store.id(&format!("{name}.bias"))?;
        let s = store.get(weight).shape();
        Ok(Self { weight, bias, inputs: s[0], outputs: s[1] })
    }

    fn rows(&self, x: &Tensor) -> Result<usize, NnError> {
        let s = x.shape();
        if s.is_empty() || s[s.len() - 1] != self.inputs {
            return Err(shape_err("dense", format!("input {s:?}, expected trailing dim {}", self.inputs)));
        }
        Ok(x.len() / self.inputs)
    }

    /// `x`: `[rows, inputs]` (or `[inputs]`) → `[rows, outputs]`.
    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor, NnError> {
        let rows = self.rows(x)?;
        let b = store.get(self.bias).data();
        let mut y: Vec<f64> = Vec::with_capacity(rows * self.outputs);
        for _ in 0..rows {
            y.extend_from_slice(b);
        }
        gemm(rows, self.inputs, self.outputs, x.data(), false, store.get(self.weight).data(), false, &mut y, 1.0);
        Tensor::from_vec(&[rows, self.outputs], y)
    }

    /// Accumulates weight/bias gradients and returns `dL/dx`.
    pub fn backward(&self, store: &ParamStore, x: &Tensor, dy: &Tensor, grads: &mut Grads) -> Result<Tensor, NnError> {
        let rows = self.rows(x)?;
        if dy.len() != rows * self.outputs {
            return Err(shape_err("dense backward", format!("dy {:?} for {rows} rows", dy.shape())));
        }
        gemm(self.inputs, rows, self.outputs, x.data(), true, dy.data(), false, grads.get_mut(self.weight).data_mut(), 1.0);
        let db = grads.get_mut(self.bias).data_mut();
        for row in dy.data().chunks_exact(self.outputs) {
            db.iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
        let mut dx = vec![0.0; rows * self.inputs];
        gemm(rows, self.outputs, self.inputs, dy.data(), false, store.get(self.weight).data(), true, &mut dx, 0.0);
        Tensor::from_vec(x.shape(), dx)
    }
}
