use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::cosine;
use super::RewardError;
use crate::audio::{MusicFeatureTrack, FEATURE_DIM};
use crate::flow::{resize_full, FlowField, FlowPatch};
use crate::nn::{
    decode_checkpoint, encode_checkpoint, gelu, gelu_backward, positional_encoding, AttentionBlock, AttentionCache, Conv2d,
    Dense, Grads, ParamStore, Tensor,
};

pub const REWARD_KIND: &str = "reward_model";

const CONV_STAGES: usize = 4;
const STD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub half_window: usize,
    pub d_h: usize,
    pub d_z: usize,
    pub tau: f64,
    pub patch: usize,
    pub channels: Vec<usize>,
    pub attn_hidden: usize,
    pub head_hidden: usize,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            half_window: 30,
            d_h: 64,
            d_z: 64,
            tau: 0.1,
            patch: 48,
            channels: vec![8, 16, 32, 32],
            attn_hidden: 128,
            head_hidden: 64,
        }
    }
}

impl RewardConfig {
    pub fn window_len(&self) -> usize {
        2 * self.half_window + 1
    }

    /// Smallest patch that survives four valid 3×3 stride-2 stages.
    pub fn min_patch() -> usize {
        (0..CONV_STAGES).fold(1, |s, _| 2 * s + 1)
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        let bad = |m: String| Err(RewardError::InvalidConfig(m));
        if self.half_window == 0 {
            return bad("half_window must be at least 1".into());
        }
        if self.d_h == 0 || self.d_z == 0 || self.attn_hidden == 0 || self.head_hidden == 0 {
            return bad("embedding and hidden sizes must be positive".into());
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if self.channels.len() != CONV_STAGES || self.channels.contains(&0) {
            return bad(format!("channels must list {CONV_STAGES} positive widths"));
        }
        if self.patch < Self::min_patch() {
            return bad(format!("patch must be at least {} px", Self::min_patch()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Flow,
    Music,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Hyper {
    config: RewardConfig,
    flow_mean: [f64; 2],
    flow_std: [f64; 2],
}

/// Two-layer projection head `dense → GELU → dense`.
#[derive(Debug, Clone, Copy)]
struct Head {
    fc1: Dense,
    fc2: Dense,
}

#[derive(Debug, Clone)]
pub struct HeadCache {
    x: Tensor,
    pre: Tensor,
    act: Tensor,
}

impl Head {
    fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<(Tensor, HeadCache), RewardError> {
        let pre = self.fc1.forward(store, x)?;
        let act = Tensor::from_vec(pre.shape(), gelu(pre.data()))?;
        let z = self.fc2.forward(store, &act)?;
        Ok((z, HeadCache { x: x.clone(), pre, act }))
    }

    fn backward(&self, store: &ParamStore, cache: &HeadCache, dz: &Tensor, grads: &mut Grads) -> Result<Tensor, RewardError> {
        let da = self.fc2.backward(store, &cache.act, dz, grads)?;
        let dpre = Tensor::from_vec(da.shape(), gelu_backward(cache.pre.data(), da.data()))?;
        Ok(self.fc1.backward(store, &cache.x, &dpre, grads)?)
    }
}

#[derive(Debug, Clone)]
pub struct MusicBatchCache {
    x: Tensor,
    attn: AttentionCache,
    head: HeadCache,
}

#[derive(Debug, Clone)]
pub struct FlowBatchCache {
    inputs: Vec<Tensor>,
    pre: Vec<Tensor>,
    pooled: Tensor,
    spatial: usize,
    head: HeadCache,
}

/// Contrastive reward model. Parameters live in a single [`ParamStore`] so
/// the whole model checkpoints and hashes as one unit.
#[derive(Debug, Clone)]
pub struct RewardModel {
    pub config: RewardConfig,
    pub store: ParamStore,
    pub flow_mean: [f64; 2],
    pub flow_std: [f64; 2],
    embed: Dense,
    attn: AttentionBlock,
    convs: Vec<Conv2d>,
    flow_out: Dense,
    head_o: Head,
    head_m: Head,
    pe: Vec<f64>,
}

impl RewardModel {
    pub fn new(config: RewardConfig, seed: u64) -> Result<Self, RewardError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = config.d_h;
        Dense::new(&mut store, "music.embed", FEATURE_DIM, d, &mut rng)?;
        AttentionBlock::new(&mut store, "music.attn", d, config.attn_hidden, &mut rng)?;
        let mut c_in = 2;
        for (i, &c) in config.channels.iter().enumerate() {
            Conv2d::new(&mut store, &format!("flow.conv{i}"), c_in, c, 3, 2, &mut rng)?;
            c_in = c;
        }
        Dense::new(&mut store, "flow.out", c_in, d, &mut rng)?;
        for h in ["head_o", "head_m"] {
            Dense::new(&mut store, &format!("{h}.fc1"), d, config.head_hidden, &mut rng)?;
            Dense::new(&mut store, &format!("{h}.fc2"), config.head_hidden, config.d_z, &mut rng)?;
        }
        Self::bind(config, store, [0.0; 2], [1.0; 2])
    }

    fn bind(config: RewardConfig, store: ParamStore, flow_mean: [f64; 2], flow_std: [f64; 2]) -> Result<Self, RewardError> {
        config.validate()?;
        let embed = Dense::bind(&store, "music.embed")?;
        let attn = AttentionBlock::bind(&store, "music.attn")?;
        let convs = (0..CONV_STAGES).map(|i| Conv2d::bind(&store, &format!("flow.conv{i}"), 2)).collect::<Result<Vec<_>, _>>()?;
        let flow_out = Dense::bind(&store, "flow.out")?;
        let head = |h: &str| -> Result<Head, RewardError> {
            Ok(Head { fc1: Dense::bind(&store, &format!("{h}.fc1"))?, fc2: Dense::bind(&store, &format!("{h}.fc2"))? })
        };
        let (head_o, head_m) = (head("head_o")?, head("head_m")?);
        let dims_ok = embed.inputs == FEATURE_DIM
            && embed.outputs == config.d_h
            && attn.dim == config.d_h
            && convs[0].in_channels == 2
            && convs.iter().zip(&config.channels).all(|(c, &w)| c.out_channels == w && c.kernel == 3)
            && flow_out.outputs == config.d_h
            && head_o.fc2.outputs == config.d_z
            && head_m.fc2.outputs == config.d_z;
        if !dims_ok {
            return Err(RewardError::InvalidConfig("checkpoint tensors do not match the stored configuration".into()));
        }
        let pe = positional_encoding(config.window_len(), config.d_h);
        Ok(Self { config, store, flow_mean, flow_std, embed, attn, convs, flow_out, head_o, head_m, pe })
    }

    /// Sets per-channel flow standardisation from full fields.
    pub fn fit_flow_stats<'a>(&mut self, flows: impl IntoIterator<Item = &'a FlowField>) {
        let mut sum = [0.0f64; 2];
        let mut sq = [0.0f64; 2];
        let mut n = 0usize;
        for f in flows {
            for (c, ch) in [&f.u, &f.v].into_iter().enumerate() {
                for &x in ch.iter() {
                    sum[c] += x as f64;
                    sq[c] += (x as f64).powi(2);
                }
            }
            n += f.u.len();
        }
        if n == 0 {
            return;
        }
        for c in 0..2 {
            let mean = sum[c] / n as f64;
            self.flow_mean[c] = mean;
            self.flow_std[c] = (sq[c] / n as f64 - mean * mean).max(0.0).sqrt().max(STD_FLOOR);
        }
    }

    pub fn content_hash(&self) -> String {
        self.store.content_hash()
    }

    fn hyper(&self) -> serde_json::Value {
        serde_json::to_value(Hyper { config: self.config.clone(), flow_mean: self.flow_mean, flow_std: self.flow_std })
            .expect("reward hyperparameters serialize")
    }

    pub fn to_bytes(&self, seed: u64) -> Result<Vec<u8>, RewardError> {
        Ok(encode_checkpoint(&self.store, REWARD_KIND, self.hyper(), seed)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, RewardError> {
        let (store, ck) = decode_checkpoint(bytes)?;
        if ck.kind != REWARD_KIND {
            return Err(RewardError::WrongKind(ck.kind));
        }
        let h: Hyper = serde_json::from_value(ck.hyperparams)
            .map_err(|e| RewardError::InvalidConfig(format!("reward checkpoint hyperparameters: {e}")))?;
        Self::bind(h.config, store, h.flow_mean, h.flow_std)
    }

    pub fn save(&self, path: &Path, seed: u64) -> Result<(), RewardError> {
        let bytes = self.to_bytes(seed)?;
        std::fs::write(path, bytes).map_err(|source| RewardError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self, RewardError> {
        let bytes = std::fs::read(path).map_err(|source| RewardError::Io { path: path.display().to_string(), source })?;
        Self::from_bytes(&bytes)
    }

    /// Music encoder over `B` windows of `(2w_a+1) × 35` features:
    /// returns `h^m` `[B, d_h]`, `z^m` `[B, d_z]` and the cache.
    pub fn music_forward(&self, windows: &[&[f32]]) -> Result<(Tensor, Tensor, MusicBatchCache), RewardError> {
        let t = self.config.window_len();
        let expected = t * FEATURE_DIM;
        if let Some(w) = windows.iter().find(|w| w.len() != expected) {
            return Err(RewardError::WindowSize { got: w.len(), expected });
        }
        if windows.is_empty() {
            return Err(RewardError::BatchTooSmall(0));
        }
        let b = windows.len();
        let data: Vec<f64> = windows.iter().flat_map(|w| w.iter().map(|&v| v as f64)).collect();
        let x = Tensor::from_vec(&[b * t, FEATURE_DIM], data)?;
        let mut e = self.embed.forward(&self.store, &x)?;
        let n = self.pe.len();
        for chunk in e.data_mut().chunks_exact_mut(n) {
            chunk.iter_mut().zip(&self.pe).for_each(|(a, p)| *a += p);
        }
        let (h, attn) = self.attn.forward_batch(&self.store, &e, t, &[self.config.half_window])?;
        let (z, head) = self.head_m.forward(&self.store, &h)?;
        Ok((h, z, MusicBatchCache { x, attn, head }))
    }

    pub fn music_backward(&self, cache: &MusicBatchCache, dz: &Tensor, grads: &mut Grads) -> Result<(), RewardError> {
        let dh = self.head_m.backward(&self.store, &cache.head, dz, grads)?;
        let de = self.attn.backward(&self.store, &cache.attn, &dh, grads)?;
        self.embed.backward(&self.store, &cache.x, &de, grads)?;
        Ok(())
    }

    /// Flow encoder over `B` patches: returns `h^o`, `z^o` and the cache.
    pub fn flow_forward(&self, patches: &[&FlowPatch]) -> Result<(Tensor, Tensor, FlowBatchCache), RewardError> {
        let p = self.config.patch;
        if let Some(bad) = patches.iter().find(|q| q.size != p) {
            return Err(RewardError::PatchSize { got: bad.size, expected: p });
        }
        if patches.is_empty() {
            return Err(RewardError::BatchTooSmall(0));
        }
        let b = patches.len();
        let mut data = Vec::with_capacity(b * 2 * p * p);
        for q in patches {
            for (c, ch) in [&q.u, &q.v].into_iter().enumerate() {
                data.extend(ch.iter().map(|&x| (x as f64 - self.flow_mean[c]) / self.flow_std[c]));
            }
        }
        let mut x = Tensor::from_vec(&[b, 2, p, p], data)?;
        let mut inputs = Vec::with_capacity(CONV_STAGES);
        let mut pre = Vec::with_capacity(CONV_STAGES);
        for conv in &self.convs {
            let y = conv.forward(&self.store, &x)?;
            let a = Tensor::from_vec(y.shape(), gelu(y.data()))?;
            inputs.push(std::mem::replace(&mut x, a));
            pre.push(y);
        }
        let (c, s) = (x.dim(1), x.dim(2) * x.dim(3));
        let pooled: Vec<f64> = x.data().chunks_exact(s).map(|m| m.iter().sum::<f64>() / s as f64).collect();
        let pooled = Tensor::from_vec(&[b, c], pooled)?;
        let h = self.flow_out.forward(&self.store, &pooled)?;
        let (z, head) = self.head_o.forward(&self.store, &h)?;
        Ok((h, z, FlowBatchCache { inputs, pre, pooled, spatial: s, head }))
    }

    pub fn flow_backward(&self, cache: &FlowBatchCache, dz: &Tensor, grads: &mut Grads) -> Result<(), RewardError> {
        let dh = self.head_o.backward(&self.store, &cache.head, dz, grads)?;
        let dpool = self.flow_out.backward(&self.store, &cache.pooled, &dh, grads)?;
        let last = &cache.pre[CONV_STAGES - 1];
        let s = cache.spatial;
        let da: Vec<f64> = dpool.data().iter().flat_map(|&g| std::iter::repeat_n(g / s as f64, s)).collect();
        let mut da = Tensor::from_vec(last.shape(), da)?;
        for i in (0..CONV_STAGES).rev() {
            let dy = Tensor::from_vec(cache.pre[i].shape(), gelu_backward(cache.pre[i].data(), da.data()))?;
            da = self.convs[i].backward(&self.store, &cache.inputs[i], &dy, grads)?;
        }
        Ok(())
    }

    pub fn encode_music(&self, window: &[f32]) -> Result<Vec<f64>, RewardError> {
        Ok(self.music_forward(&[window])?.0.into_vec())
    }

    pub fn encode_flow(&self, patch: &FlowPatch) -> Result<Vec<f64>, RewardError> {
        Ok(self.flow_forward(&[patch])?.0.into_vec())
    }

    pub fn project(&self, h: &[f64], which: Modality) -> Result<Vec<f64>, RewardError> {
        if h.len() != self.config.d_h {
            return Err(RewardError::Dim { got: h.len(), expected: self.config.d_h });
        }
        let head = match which {
            Modality::Flow => &self.head_o,
            Modality::Music => &self.head_m,
        };
        let x = Tensor::from_vec(&[1, h.len()], h.to_vec())?;
        Ok(head.forward(&self.store, &x)?.0.into_vec())
    }

    /// `(h^m, z^m)` for the window centred on each requested frame.
    pub fn music_embeddings(&self, music: &MusicFeatureTrack, frames: &[usize]) -> Result<Vec<(Vec<f64>, Vec<f64>)>, RewardError> {
        const CHUNK: usize = 64;
        let w = self.config.half_window;
        let mut out = Vec::with_capacity(frames.len());
        for chunk in frames.chunks(CHUNK) {
            let windows = chunk
                .iter()
                .map(|&t| music.window(t, w).ok_or(RewardError::WindowRange { frame: t, frames: music.frames }))
                .collect::<Result<Vec<_>, _>>()?;
            let (h, z, _) = self.music_forward(&windows)?;
            let (dh, dz) = (self.config.d_h, self.config.d_z);
            out.extend(h.data().chunks_exact(dh).zip(z.data().chunks_exact(dz)).map(|(a, b)| (a.to_vec(), b.to_vec())));
        }
        Ok(out)
    }

    /// `z^o` for a full flow field, resized to the model's patch size.
    pub fn flow_embedding(&self, flow: &FlowField) -> Result<Vec<f64>, RewardError> {
        let patch = resize_full(flow, self.config.patch)?;
        Ok(self.flow_forward(&[&patch])?.1.into_vec())
    }

    /// Cosine reward between a music projection and the projection of `flow`.
    pub fn reward_for_flow(&self, z_m: &[f64], flow: &FlowField) -> Result<f64, RewardError> {
        let z_o = self.flow_embedding(flow)?;
        super::loss::reward(z_m, &z_o)
    }

    /// Symmetric InfoNCE over a batch of aligned pairs, with gradients.
    pub fn loss_and_grads(&self, windows: &[&[f32]], patches: &[&FlowPatch]) -> Result<(f64, Grads), RewardError> {
        if windows.len() != patches.len() {
            return Err(RewardError::Dim { got: patches.len(), expected: windows.len() });
        }
        let (_, zm, mc) = self.music_forward(windows)?;
        let (_, zo, fc) = self.flow_forward(patches)?;
        let dz = self.config.d_z;
        let rows = |t: &Tensor| t.data().chunks_exact(dz).map(<[f64]>::to_vec).collect::<Vec<_>>();
        let (loss, g_o, g_m) = super::loss::info_nce_grad(&rows(&zo), &rows(&zm), self.config.tau)?;
        let mut grads = self.store.zero_grads();
        let flat = |g: Vec<Vec<f64>>| Tensor::from_vec(&[g.len(), dz], g.into_iter().flatten().collect());
        self.music_backward(&mc, &flat(g_m)?, &mut grads)?;
        self.flow_backward(&fc, &flat(g_o)?, &mut grads)?;
        Ok((loss, grads))
    }

    /// Cosine similarity of every flow projection against every music
    /// projection, row-major `[flows, musics]`.
    pub fn similarity_matrix(&self, windows: &[&[f32]], patches: &[&FlowPatch]) -> Result<Vec<f64>, RewardError> {
        let (_, zm, _) = self.music_forward(windows)?;
        let (_, zo, _) = self.flow_forward(patches)?;
        let dz = self.config.d_z;
        let mut out = Vec::with_capacity(patches.len() * windows.len());
        for a in zo.data().chunks_exact(dz) {
            for b in zm.data().chunks_exact(dz) {
                out.push(cosine(a, b));
            }
        }
        Ok(out)
    }

    #[cfg(test)]
    pub(crate) fn set_identity_heads(&mut self) {
        let d = self.config.d_h;
        assert_eq!(self.config.head_hidden, 2 * d);
        assert_eq!(self.config.d_z, d);
        for head in [self.head_o, self.head_m] {
            let w1 = self.store.get_mut(head.fc1.weight).data_mut();
            w1.fill(0.0);
            for i in 0..d {
                w1[i * 2 * d + i] = 1.0;
                w1[i * 2 * d + d + i] = -1.0;
            }
            self.store.get_mut(head.fc1.bias).data_mut().fill(0.0);
            let w2 = self.store.get_mut(head.fc2.weight).data_mut();
            w2.fill(0.0);
            for i in 0..d {
                w2[i * d + i] = 1.0;
                w2[(d + i) * d + i] = -1.0;
            }
            self.store.get_mut(head.fc2.bias).data_mut().fill(0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;
    use rand::Rng;

    fn tiny() -> RewardConfig {
        RewardConfig {
            half_window: 2,
            d_h: 6,
            d_z: 5,
            tau: 0.5,
            patch: 31,
            channels: vec![2, 2, 3, 3],
            attn_hidden: 8,
            head_hidden: 7,
        }
    }

    fn random_window(cfg: &RewardConfig, rng: &mut ChaCha8Rng) -> Vec<f32> {
        (0..cfg.window_len() * FEATURE_DIM).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn random_patch(p: usize, rng: &mut ChaCha8Rng) -> FlowPatch {
        FlowPatch {
            size: p,
            u: (0..p * p).map(|_| rng.random_range(-2.0..2.0)).collect(),
            v: (0..p * p).map(|_| rng.random_range(-2.0..2.0)).collect(),
            origin: (0.0, 0.0),
            crop: (p as f64, p as f64),
        }
    }

    #[test]
    fn shapes_and_errors() {
        let cfg = tiny();
        let m = RewardModel::new(cfg.clone(), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = random_window(&cfg, &mut rng);
        assert_eq!(m.encode_music(&w).unwrap().len(), cfg.d_h);
        assert!(matches!(m.encode_music(&w[..w.len() - FEATURE_DIM]), Err(RewardError::WindowSize { .. })));
        let p = random_patch(cfg.patch, &mut rng);
        let h = m.encode_flow(&p).unwrap();
        assert_eq!(h.len(), cfg.d_h);
        assert_eq!(h, m.encode_flow(&p.clone()).unwrap());
        assert!(matches!(m.encode_flow(&random_patch(33, &mut rng)), Err(RewardError::PatchSize { .. })));
        assert_eq!(m.project(&h, Modality::Flow).unwrap().len(), cfg.d_z);
        assert!(m.project(&h[..3], Modality::Music).is_err());
        let zero = FlowPatch { u: vec![0.0; 31 * 31], v: vec![0.0; 31 * 31], ..p };
        assert!(m.encode_flow(&zero).unwrap().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn config_validation() {
        let mut c = tiny();
        c.patch = 30;
        assert!(RewardModel::new(c, 0).is_err());
        let mut c = tiny();
        c.tau = 0.0;
        assert!(c.validate().is_err());
        assert_eq!(RewardConfig::min_patch(), 31);
    }

    #[test]
    fn batch_matches_single() {
        let cfg = tiny();
        let m = RewardModel::new(cfg.clone(), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ws: Vec<Vec<f32>> = (0..3).map(|_| random_window(&cfg, &mut rng)).collect();
        let ps: Vec<FlowPatch> = (0..3).map(|_| random_patch(cfg.patch, &mut rng)).collect();
        let (hb, _, _) = m.music_forward(&ws.iter().map(|w| w.as_slice()).collect::<Vec<_>>()).unwrap();
        let (ob, _, _) = m.flow_forward(&ps.iter().collect::<Vec<_>>()).unwrap();
        for i in 0..3 {
            let h = m.encode_music(&ws[i]).unwrap();
            let o = m.encode_flow(&ps[i]).unwrap();
            for k in 0..cfg.d_h {
                assert!((h[k] - hb.data()[i * cfg.d_h + k]).abs() < 1e-12);
                assert!((o[k] - ob.data()[i * cfg.d_h + k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn permuting_context_rows_changes_music_embedding() {
        let cfg = tiny();
        let m = RewardModel::new(cfg.clone(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = random_window(&cfg, &mut rng);
        let mut swapped = w.clone();
        // Swap rows 0 and 4 (both off-centre).
        for k in 0..FEATURE_DIM {
            swapped.swap(k, 4 * FEATURE_DIM + k);
        }
        let a = m.encode_music(&w).unwrap();
        let b = m.encode_music(&swapped).unwrap();
        let diff: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        assert!(diff > 1e-6, "{diff}");
        assert_eq!(a, m.encode_music(&w).unwrap());
    }

    #[test]
    fn identity_head_returns_input() {
        let mut cfg = tiny();
        cfg.d_z = cfg.d_h;
        cfg.head_hidden = 2 * cfg.d_h;
        let mut m = RewardModel::new(cfg.clone(), 4).unwrap();
        m.set_identity_heads();
        let h: Vec<f64> = (0..cfg.d_h).map(|i| i as f64 * 0.7 - 2.0).collect();
        for which in [Modality::Flow, Modality::Music] {
            let z = m.project(&h, which).unwrap();
            for (a, b) in z.iter().zip(&h) {
                assert!((a - b).abs() < 1e-12, "{a} {b}");
            }
        }
    }

    #[test]
    fn full_model_gradient_check() {
        let cfg = tiny();
        let mut m = RewardModel::new(cfg.clone(), 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ws: Vec<Vec<f32>> = (0..3).map(|_| random_window(&cfg, &mut rng)).collect();
        let ps: Vec<FlowPatch> = (0..3).map(|_| random_patch(cfg.patch, &mut rng)).collect();
        let wr: Vec<&[f32]> = ws.iter().map(|w| w.as_slice()).collect();
        let pr: Vec<&FlowPatch> = ps.iter().collect();
        let theta = m.store.flatten();
        let err = grad_check(
            |p| {
                m.store.unflatten(p);
                let (l, g) = m.loss_and_grads(&wr, &pr).unwrap();
                (l, g.flatten())
            },
            &theta,
        );
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn head_gradient_check() {
        let cfg = tiny();
        let mut m = RewardModel::new(cfg.clone(), 6).unwrap();
        let x = Tensor::from_vec(&[2, cfg.d_h], (0..2 * cfg.d_h).map(|i| (i as f64 * 0.9).sin()).collect()).unwrap();
        let c: Vec<f64> = (0..2 * cfg.d_z).map(|i| (i as f64 * 0.4).cos()).collect();
        let head = m.head_o;
        let theta = m.store.flatten();
        let err = grad_check(
            |p| {
                m.store.unflatten(p);
                let (z, cache) = head.forward(&m.store, &x).unwrap();
                let loss: f64 = z.data().iter().zip(&c).map(|(a, b)| a * b).sum();
                let mut g = m.store.zero_grads();
                head.backward(&m.store, &cache, &Tensor::from_vec(z.shape(), c.clone()).unwrap(), &mut g).unwrap();
                (loss, g.flatten())
            },
            &theta,
        );
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn checkpoint_roundtrip() {
        let cfg = tiny();
        let mut m = RewardModel::new(cfg, 7).unwrap();
        m.flow_mean = [0.25, -0.5];
        m.flow_std = [2.0, 3.0];
        let bytes = m.to_bytes(7).unwrap();
        let back = RewardModel::from_bytes(&bytes).unwrap();
        assert_eq!(back.config, m.config);
        assert_eq!(back.flow_mean, m.flow_mean);
        assert_eq!(back.flow_std, m.flow_std);
        // Values pass through f32.
        for (a, b) in back.store.flatten().iter().zip(m.store.flatten()) {
            assert_eq!(*a, b as f32 as f64);
        }
        assert_eq!(back.to_bytes(7).unwrap(), bytes);
    }
}
