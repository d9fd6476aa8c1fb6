use rand::Rng;

use super::linalg::gemm;
use super::{shape_err, Grads, NnError, ParamId, ParamStore, Tensor};

/// Valid (unpadded) 2-D cross-correlation with a square stride.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

struct Geometry {
    n: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
}

impl Conv2d {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        if stride == 0 || kernel == 0 {
            return Err(shape_err("conv2d", "kernel and stride must be positive"));
        }
        let fan_in = in_channels * kernel * kernel;
        let weight = store.add_kaiming(&format!("{name}.weight"), &[out_channels, in_channels, kernel, kernel], fan_in, rng)?;
        let bias = store.add_constant(&format!("{name}.bias"), &[out_channels], 0.0)?;
        Ok(Self { weight, bias, in_channels, out_channels, kernel, stride })
    }

    pub fn bind(store: &ParamStore, name: &str, stride: usize) -> Result<Self, NnError> {
        let weight = store.id(&format!("{name}.weight"))?;
        let bias = store.id(&format!("{name}.bias"))?;
        let s = store.get(weight).shape();
        if s.len() != 4 || s[2] != s[3] {
            return Err(shape_err("conv2d", format!("weight shape {s:?}")));
        }
        Ok(Self { weight, bias, in_channels: s[1], out_channels: s[0], kernel: s[2], stride })
    }

    pub fn output_size(&self, input: usize) -> Option<usize> {
        (input >= self.kernel).then(|| (input - self.kernel) / self.stride + 1)
    }

    fn geometry(&self, x: &Tensor) -> Result<Geometry, NnError> {
        let s = x.shape();
        if s.len() != 4 || s[1] != self.in_channels {
            return Err(shape_err("conv2d", format!("input {s:?}, expected [N, {}, H, W]", self.in_channels)));
        }
        let (oh, ow) = match (self.output_size(s[2]), self.output_size(s[3])) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(shape_err("conv2d", format!("kernel {} larger than input {s:?}", self.kernel))),
        };
        Ok(Geometry { n: s[0], h: s[2], w: s[3], oh, ow })
    }

    /// Unfolds one sample into `[C*k*k, oh*ow]`.
    fn im2col(&self, x: &[f64], g: &Geometry, col: &mut [f64]) {
        let k = self.kernel;
        let cols = g.oh * g.ow;
        for c in 0..self.in_channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let dst = &mut col[row * cols..(row + 1) * cols];
                    for oy in 0..g.oh {
                        let src = &x[(c * g.h + oy * self.stride + ky) * g.w..];
                        for ox in 0..g.ow {
                            dst[oy * g.ow + ox] = src[ox * self.stride + kx];
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, col: &[f64], g: &Geometry, dx: &mut [f64]) {
        let k = self.kernel;
        let cols = g.oh * g.ow;
        for c in 0..self.in_channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let src = &col[row * cols..(row + 1) * cols];
                    for oy in 0..g.oh {
                        let base = (c * g.h + oy * self.stride + ky) * g.w + kx;
                        for ox in 0..g.ow {
                            dx[base + ox * self.stride] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }

    /// `[N, C, H, W]` → `[N, K, oh, ow]`.
    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor, NnError> {
        let g = self.geometry(x)?;
        let patch = self.in_channels * self.kernel * self.kernel;
        let cols = g.oh * g.ow;
        let in_len = self.in_channels * g.h * g.w;
        let out_len = self.out_channels * cols;
        let w = store.get(self.weight).data();
        let b = store.get(self.bias).data();
        let mut col = vec![0.0; patch * cols];
        let mut y = vec![0.0; g.n * out_len];
        for i in 0..g.n {
            self.im2col(&x.data()[i * in_len..(i + 1) * in_len], &g, &mut col);
            let out = &mut y[i * out_len..(i + 1) * out_len];
            for (k, chunk) in out.chunks_exact_mut(cols).enumerate() {
                chunk.fill(b[k]);
            }
            gemm(self.out_channels, patch, cols, w, false, &col, false, out, 1.0);
        }
        Tensor::from_vec(&[g.n, self.out_channels, g.oh, g.ow], y)
    }

    pub fn backward(&self, store: &ParamStore, x: &Tensor, dy: &Tensor, grads: &mut Grads) -> Result<Tensor, NnError> {
        let g = self.geometry(x)?;
        if dy.shape() != [g.n, self.out_channels, g.oh, g.ow] {
            return Err(shape_err("conv2d backward", format!("dy {:?}", dy.shape())));
        }
        let patch = self.in_channels * self.kernel * self.kernel;
        let cols = g.oh * g.ow;
        let in_len = self.in_channels * g.h * g.w;
        let out_len = self.out_channels * cols;
        let w = store.get(self.weight).data();
        let mut col = vec![0.0; patch * cols];
        let mut dcol = vec![0.0; patch * cols];
        let mut dx = vec![0.0; x.len()];
        for i in 0..g.n {
            let xi = &x.data()[i * in_len..(i + 1) * in_len];
            let dyi = &dy.data()[i * out_len..(i + 1) * out_len];
            self.im2col(xi, &g, &mut col);
            gemm(self.out_channels, cols, patch, dyi, false, &col, true, grads.get_mut(self.weight).data_mut(), 1.0);
            let db = grads.get_mut(self.bias).data_mut();
            for (k, chunk) in dyi.chunks_exact(cols).enumerate() {
                db[k] += chunk.iter().sum::<f64>();
            }
            gemm(patch, self.out_channels, cols, w, true, dyi, false, &mut dcol, 0.0);
            self.col2im(&dcol, &g, &mut dx[i * in_len..(i + 1) * in_len]);
        }
        Tensor::from_vec(x.shape(), dx)
    }
}
