use rand::Rng;

use super::linalg::gemm;
use super::{gelu, gelu_backward, shape_err, softmax_rows, Dense, Grads, LayerNorm, LayerNormCache, NnError, ParamStore, Tensor};

/// Sinusoidal positional encoding, `[len, dim]` row-major.
pub fn positional_encoding(len: usize, dim: usize) -> Vec<f64> {
    let mut pe = vec![0.0; len * dim];
    for p in 0..len {
        for i in 0..dim {
            let freq = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / dim as f64);
            let a = p as f64 * freq;
            pe[p * dim + i] = if i % 2 == 0 { a.sin() } else { a.cos() };
        }
    }
    pe
}

/// One pre-norm transformer block with single-head self-attention:
/// `r = x + Attn(LN1(x))`, `y = r + MLP(LN2(r))`, MLP = dense → GELU → dense.
///
/// Queries may be restricted to a subset of rows; keys and values always
/// span the whole sequence, so restricting to one row yields exactly that
/// row of the full output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionBlock {
    pub ln1: LayerNorm,
    pub query: Dense,
    pub key: Dense,
    pub value: Dense,
    pub out: Dense,
    pub ln2: LayerNorm,
    pub fc1: Dense,
    pub fc2: Dense,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    batch: usize,
    seq_len: usize,
    queries: Vec<usize>,
    ln1: LayerNormCache,
    h1: Tensor,
    h1q: Tensor,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    /// Attention weights, `[batch · queries, seq_len]`.
    pub weights: Vec<f64>,
    ctx: Tensor,
    ln2: LayerNormCache,
    h2: Tensor,
    m1: Tensor,
    g: Tensor,
}

/// Rows `b·t + q` for every sequence `b` and query `q`.
fn query_rows(batch: usize, seq_len: usize, queries: &[usize]) -> Vec<usize> {
    (0..batch).flat_map(|b| queries.iter().map(move |&q| b * seq_len + q)).collect()
}

fn gather_rows(x: &Tensor, rows: &[usize]) -> Result<Tensor, NnError> {
    let d = x.dim(1);
    let mut out = Vec::with_capacity(rows.len() * d);
    for &r in rows {
        out.extend_from_slice(&x.data()[r * d..(r + 1) * d]);
    }
    Tensor::from_vec(&[rows.len(), d], out)
}

fn scatter_add_rows(dst: &mut Tensor, rows: &[usize], src: &Tensor) {
    let d = src.dim(1);
    for (i, &r) in rows.iter().enumerate() {
        let row = &mut dst.data_mut()[r * d..(r + 1) * d];
        row.iter_mut().zip(&src.data()[i * d..(i + 1) * d]).for_each(|(a, b)| *a += b);
    }
}

impl AttentionBlock {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, dim: usize, hidden: usize, rng: &mut R) -> Result<Self, NnError> {
        Ok(Self {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), dim)?,
            query: Dense::new(store, &format!("{name}.query"), dim, dim, rng)?,
            key: Dense::new(store, &format!("{name}.key"), dim, dim, rng)?,
            value: Dense::new(store, &format!("{name}.value"), dim, dim, rng)?,
            out: Dense::new(store, &format!("{name}.out"), dim, dim, rng)?,
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), dim)?,
            fc1: Dense::new(store, &format!("{name}.fc1"), dim, hidden, rng)?,
            fc2: Dense::new(store, &format!("{name}.fc2"), hidden, dim, rng)?,
            dim,
        })
    }

    pub fn bind(store: &ParamStore, name: &str) -> Result<Self, NnError> {
        let ln = |s: &str| -> Result<LayerNorm, NnError> {
            let gain = store.id(&format!("{name}.{s}.gain"))?;
            let bias = store.id(&format!("{name}.{s}.bias"))?;
            Ok(LayerNorm { gain, bias, dim: store.get(gain).len() })
        };
        let dense = |s: &str| Dense::bind(store, &format!("{name}.{s}"));
        let query = dense("query")?;
        Ok(Self {
            ln1: ln("ln1")?,
            query,
            key: dense("key")?,
            value: dense("value")?,
            out: dense("out")?,
            ln2: ln("ln2")?,
            fc1: dense("fc1")?,
            fc2: dense("fc2")?,
            dim: query.inputs,
        })
    }

    /// Single sequence `x`: `[T, dim]`; returns the block output for each
    /// row in `queries`.
    pub fn forward(&self, store: &ParamStore, x: &Tensor, queries: &[usize]) -> Result<(Tensor, AttentionCache), NnError> {
        let t = if x.shape().len() == 2 { x.dim(0) } else { 0 };
        self.forward_batch(store, x, t, queries)
    }

    /// `x` stacks `B` sequences of `seq_len` rows: `[B · seq_len, dim]`.
    /// Output rows are ordered by sequence, then query.
    pub fn forward_batch(&self, store: &ParamStore, x: &Tensor, seq_len: usize, queries: &[usize]) -> Result<(Tensor, AttentionCache), NnError> {
        let s = x.shape();
        if s.len() != 2 || s[1] != self.dim || seq_len == 0 || s[0] == 0 || s[0] % seq_len != 0 {
            return Err(shape_err("attention", format!("input {s:?}, expected [B * {seq_len}, {}]", self.dim)));
        }
        let t = seq_len;
        let batch = s[0] / t;
        if let Some(&bad) = queries.iter().find(|&&q| q >= t) {
            return Err(shape_err("attention", format!("query row {bad} out of range for T={t}")));
        }
        let d = self.dim;
        let nq = queries.len();
        let rows = query_rows(batch, t, queries);
        let (h1, ln1) = self.ln1.forward(store, x)?;
        let h1q = gather_rows(&h1, &rows)?;
        let q = self.query.forward(store, &h1q)?;
        let k = self.key.forward(store, &h1)?;
        let v = self.value.forward(store, &h1)?;
        let scale = 1.0 / (d as f64).sqrt();
        let mut weights = vec![0.0; batch * nq * t];
        let mut ctx = vec![0.0; batch * nq * d];
        for b in 0..batch {
            let w = &mut weights[b * nq * t..(b + 1) * nq * t];
            let kb = &k.data()[b * t * d..(b + 1) * t * d];
            let vb = &v.data()[b * t * d..(b + 1) * t * d];
            gemm(nq, d, t, &q.data()[b * nq * d..(b + 1) * nq * d], false, kb, true, w, 0.0);
            w.iter_mut().for_each(|x| *x *= scale);
            softmax_rows(w, t);
            gemm(nq, t, d, w, false, vb, false, &mut ctx[b * nq * d..(b + 1) * nq * d], 0.0);
        }
        let ctx = Tensor::from_vec(&[batch * nq, d], ctx)?;
        let att = self.out.forward(store, &ctx)?;
        let mut r1 = gather_rows(x, &rows)?;
        r1.add_assign(&att);
        let (h2, ln2) = self.ln2.forward(store, &r1)?;
        let m1 = self.fc1.forward(store, &h2)?;
        let g = Tensor::from_vec(m1.shape(), gelu(m1.data()))?;
        let m2 = self.fc2.forward(store, &g)?;
        let mut y = r1;
        y.add_assign(&m2);
        let cache = AttentionCache { batch, seq_len: t, queries: queries.to_vec(), ln1, h1, h1q, q, k, v, weights, ctx, ln2, h2, m1, g };
        Ok((y, cache))
    }

    pub fn backward(&self, store: &ParamStore, cache: &AttentionCache, dy: &Tensor, grads: &mut Grads) -> Result<Tensor, NnError> {
        let d = self.dim;
        let (batch, t) = (cache.batch, cache.seq_len);
        let nq = cache.queries.len();
        if dy.shape() != [batch * nq, d] {
            return Err(shape_err("attention backward", format!("dy {:?}", dy.shape())));
        }
        let rows = query_rows(batch, t, &cache.queries);
        // MLP branch.
        let dg = self.fc2.backward(store, &cache.g, dy, grads)?;
        let dm1 = Tensor::from_vec(cache.m1.shape(), gelu_backward(cache.m1.data(), dg.data()))?;
        let dh2 = self.fc1.backward(store, &cache.h2, &dm1, grads)?;
        let mut dr1 = self.ln2.backward(store, &cache.ln2, &dh2, grads)?;
        dr1.add_assign(dy);

        // Attention branch.
        let dctx = self.out.backward(store, &cache.ctx, &dr1, grads)?;
        let scale = 1.0 / (d as f64).sqrt();
        let mut dq = vec![0.0; batch * nq * d];
        let mut dk = vec![0.0; batch * t * d];
        let mut dv = vec![0.0; batch * t * d];
        let mut dweights = vec![0.0; nq * t];
        for b in 0..batch {
            let a = &cache.weights[b * nq * t..(b + 1) * nq * t];
            let dc = &dctx.data()[b * nq * d..(b + 1) * nq * d];
            let kb = &cache.k.data()[b * t * d..(b + 1) * t * d];
            let vb = &cache.v.data()[b * t * d..(b + 1) * t * d];
            let qb = &cache.q.data()[b * nq * d..(b + 1) * nq * d];
            gemm(nq, d, t, dc, false, vb, true, &mut dweights, 0.0);
            gemm(t, nq, d, a, true, dc, false, &mut dv[b * t * d..(b + 1) * t * d], 0.0);
            for i in 0..nq {
                let ai = &a[i * t..(i + 1) * t];
                let da = &mut dweights[i * t..(i + 1) * t];
                let dot: f64 = ai.iter().zip(da.iter()).map(|(x, y)| x * y).sum();
                for j in 0..t {
                    da[j] = ai[j] * (da[j] - dot) * scale;
                }
            }
            gemm(nq, t, d, &dweights, false, kb, false, &mut dq[b * nq * d..(b + 1) * nq * d], 0.0);
            gemm(t, nq, d, &dweights, true, qb, false, &mut dk[b * t * d..(b + 1) * t * d], 0.0);
        }

        let dh1q = self.query.backward(store, &cache.h1q, &Tensor::from_vec(&[batch * nq, d], dq)?, grads)?;
        let mut dh1 = self.key.backward(store, &cache.h1, &Tensor::from_vec(&[batch * t, d], dk)?, grads)?;
        dh1.add_assign(&self.value.backward(store, &cache.h1, &Tensor::from_vec(&[batch * t, d], dv)?, grads)?);
        scatter_add_rows(&mut dh1, &rows, &dh1q);
        let mut dx = self.ln1.backward(store, &cache.ln1, &dh1, grads)?;
        scatter_add_rows(&mut dx, &rows, &dr1);
        Ok(dx)
    }
}
