use super::{shape_err, Grads, NnError, ParamId, ParamStore, Tensor};

const EPS: f64 = 1e-5;

/// Layer normalization over the last axis with learned gain and bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Result<Self, NnError> {
        let gain = store.add_constant(&format!("{name}.gain"), &[dim], 1.0)?;
        let bias = store.add_constant(&format!("{name}.bias"), &[dim], 0.0)?;
        Ok(Self { gain, bias, dim })
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<(Tensor, LayerNormCache), NnError> {
        let s = x.shape();
        if s.is_empty() || s[s.len() - 1] != self.dim {
            return Err(shape_err("layernorm", format!("input {s:?}, dim {}", self.dim)));
        }
        let d = self.dim;
        let gain = store.get(self.gain).data();
        let bias = store.get(self.bias).data();
        let rows = x.len() / d;
        let mut y = vec![0.0; x.len()];
        let mut xhat = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; rows];
        for r in 0..rows {
            let row = &x.data()[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + EPS).sqrt();
            inv_std[r] = is;
            for i in 0..d {
                let h = (row[i] - mean) * is;
                xhat[r * d + i] = h;
                y[r * d + i] = h * gain[i] + bias[i];
            }
        }
        Ok((Tensor::from_vec(s, y)?, LayerNormCache { xhat, inv_std }))
    }

    pub fn backward(&self, store: &ParamStore, cache: &LayerNormCache, dy: &Tensor, grads: &mut Grads) -> Result<Tensor, NnError> {
        let d = self.dim;
        if dy.len() != cache.xhat.len() {
            return Err(shape_err("layernorm backward", format!("dy {:?}", dy.shape())));
        }
        let gain = store.get(self.gain).data();
        let rows = dy.len() / d;
        let mut dx = vec![0.0; dy.len()];
        {
            let dg = grads.get_mut(self.gain).data_mut();
            for r in 0..rows {
                for i in 0..d {
                    dg[i] += dy.data()[r * d + i] * cache.xhat[r * d + i];
                }
            }
        }
        {
            let db = grads.get_mut(self.bias).data_mut();
            for r in 0..rows {
                for i in 0..d {
                    db[i] += dy.data()[r * d + i];
                }
            }
        }
        for r in 0..rows {
            let dyr = &dy.data()[r * d..(r + 1) * d];
            let xh = &cache.xhat[r * d..(r + 1) * d];
            let dxhat: Vec<f64> = (0..d).map(|i| dyr[i] * gain[i]).collect();
            let mean_dxhat = dxhat.iter().sum::<f64>() / d as f64;
            let mean_dxhat_xhat = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
            for i in 0..d {
                dx[r * d + i] = cache.inv_std[r] * (dxhat[i] - mean_dxhat - xh[i] * mean_dxhat_xhat);
            }
        }
        Tensor::from_vec(dy.shape(), dx)
    }
}
