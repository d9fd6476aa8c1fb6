use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::info_nce;
use super::model::{RewardConfig, RewardModel};
use super::RewardError;
use crate::choreo::Dataset;
use crate::derive_seed;
use crate::flow::{crop_resize, resize_full, FlowPatch};
use crate::nn::{adam_step, AdamConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardTrainConfig {
    pub model: RewardConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub grad_clip: f64,
    /// Minimum frame distance between two pairs of the same track in a batch.
    pub min_separation: usize,
    pub val_candidates: usize,
    pub min_pairs: usize,
    pub seed: u64,
    /// Control run: music windows are permuted against the flows.
    pub shuffle_pairs: bool,
}

impl Default for RewardTrainConfig {
    fn default() -> Self {
        Self {
            model: RewardConfig::default(),
            epochs: 30,
            batch_size: 32,
            lr: 1e-3,
            grad_clip: 5.0,
            min_separation: 10,
            val_candidates: 16,
            min_pairs: 64,
            seed: 0,
            shuffle_pairs: false,
        }
    }
}

impl RewardTrainConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        self.model.validate()?;
        let bad = |m: &str| Err(RewardError::InvalidConfig(m.into()));
        if self.batch_size < 2 || self.val_candidates < 2 {
            return bad("batch_size and val_candidates must be at least 2");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.grad_clip > 0.0) {
            return bad("lr and grad_clip must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub epoch: usize,
    pub loss: f64,
    pub val_loss: f64,
    pub top1_retrieval: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub rows: Vec<TrainLogRow>,
    pub best_epoch: usize,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss,val_loss,top1_retrieval\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{}\n", r.epoch, r.loss, r.val_loss, r.top1_retrieval));
        }
        s
    }

    pub fn best(&self) -> Option<&TrainLogRow> {
        self.rows.iter().find(|r| r.epoch == self.best_epoch)
    }
}

#[derive(Debug, Clone, Copy)]
struct Pair {
    track: usize,
    sample: usize,
    frame: usize,
}

fn pairs_of(ds: &Dataset, split: &[usize]) -> Vec<Pair> {
    split
        .iter()
        .flat_map(|&track| ds.tracks[track].sample_frames.iter().enumerate().map(move |(sample, &frame)| Pair { track, sample, frame }))
        .collect()
}

/// Greedily packs shuffled pairs into batches of `size` such that no two
/// pairs from the same track are closer than `min_sep` frames. Pairs that do
/// not fit are carried to the next batch; leftover batches with fewer than
/// two pairs are dropped.
fn form_batches(mut pending: Vec<usize>, pairs: &[Pair], size: usize, min_sep: usize) -> Vec<Vec<usize>> {
    let mut batches = Vec::new();
    while !pending.is_empty() {
        let mut batch: Vec<usize> = Vec::with_capacity(size);
        let mut rest = Vec::new();
        for i in pending {
            let ok = batch.len() < size
                && batch.iter().all(|&j| pairs[j].track != pairs[i].track || pairs[j].frame.abs_diff(pairs[i].frame) >= min_sep);
            if ok {
                batch.push(i);
            } else {
                rest.push(i);
            }
        }
        if batch.len() < 2 {
            break;
        }
        batches.push(batch);
        pending = rest;
    }
    batches
}

struct Validation {
    groups: Vec<Vec<usize>>,
    pairs: Vec<Pair>,
    patches: Vec<FlowPatch>,
}

fn validation_set(ds: &Dataset, cfg: &RewardTrainConfig) -> Result<Validation, RewardError> {
    let pairs = pairs_of(ds, &ds.val);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0x7a1)));
    let groups: Vec<Vec<usize>> = form_batches(order, &pairs, cfg.val_candidates, cfg.min_separation)
        .into_iter()
        .filter(|g| g.len() == cfg.val_candidates)
        .collect();
    if groups.is_empty() {
        return Err(RewardError::NotEnoughPairs { got: pairs.len(), needed: cfg.val_candidates });
    }
    let patches = pairs
        .iter()
        .map(|p| resize_full(&ds.tracks[p.track].flows[p.sample], cfg.model.patch))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Validation { groups, pairs, patches })
}

fn window<'a>(ds: &'a Dataset, p: &Pair, half: usize) -> Result<&'a [f32], RewardError> {
    let m = &ds.tracks[p.track].music;
    m.window(p.frame, half).ok_or(RewardError::WindowRange { frame: p.frame, frames: m.frames })
}

/// Top-1 flow→music retrieval accuracy and mean InfoNCE over candidate
/// groups of true pairs.
fn evaluate(model: &RewardModel, ds: &Dataset, val: &Validation) -> Result<(f64, f64), RewardError> {
    let half = model.config.half_window;
    let mut hits = 0usize;
    let mut total = 0usize;
    let mut loss = 0.0;
    for g in &val.groups {
        let windows = g.iter().map(|&i| window(ds, &val.pairs[i], half)).collect::<Result<Vec<_>, _>>()?;
        let patches: Vec<&FlowPatch> = g.iter().map(|&i| &val.patches[i]).collect();
        let (_, zm, _) = model.music_forward(&windows)?;
        let (_, zo, _) = model.flow_forward(&patches)?;
        let dz = model.config.d_z;
        let zm: Vec<Vec<f64>> = zm.data().chunks_exact(dz).map(<[f64]>::to_vec).collect();
        let zo: Vec<Vec<f64>> = zo.data().chunks_exact(dz).map(<[f64]>::to_vec).collect();
        loss += info_nce(&zo, &zm, model.config.tau)?;
        let n = g.len();
        for (i, o) in zo.iter().enumerate() {
            let best = (0..n)
                .map(|j| (j, super::loss::cosine(o, &zm[j])))
                .fold((0, f64::NEG_INFINITY), |acc, (j, s)| if s > acc.1 { (j, s) } else { acc });
            hits += usize::from(best.0 == i);
        }
        total += n;
    }
    Ok((hits as f64 / total as f64, loss / val.groups.len() as f64))
}

/// Held-out top-1 retrieval accuracy (flow→music, `candidates` per group)
/// and mean validation InfoNCE of a trained model.
pub fn retrieval_top1(model: &RewardModel, ds: &Dataset, candidates: usize, min_separation: usize, seed: u64) -> Result<(f64, f64), RewardError> {
    let cfg = RewardTrainConfig { model: model.config.clone(), val_candidates: candidates, min_separation, seed, ..Default::default() };
    let val = validation_set(ds, &cfg)?;
    evaluate(model, ds, &val)
}

/// Mini-batch Adam on symmetric InfoNCE with random-crop augmentation drawn
/// afresh each epoch. Returns the model from the epoch with the lowest
/// validation loss and the log.
pub fn train_reward_model(
    ds: &Dataset,
    cfg: &RewardTrainConfig,
    mut on_epoch: impl FnMut(&TrainLogRow),
) -> Result<(RewardModel, TrainLog), RewardError> {
    cfg.validate()?;
    let pairs = pairs_of(ds, &ds.train);
    if pairs.is_empty() {
        return Err(RewardError::NotEnoughPairs { got: 0, needed: cfg.min_pairs.max(cfg.batch_size) });
    }
    if pairs.len() < cfg.min_pairs.max(cfg.batch_size) {
        return Err(RewardError::NotEnoughPairs { got: pairs.len(), needed: cfg.min_pairs.max(cfg.batch_size) });
    }
    let half = cfg.model.half_window;
    for p in &pairs {
        window(ds, p, half)?;
    }
    let val = validation_set(ds, cfg)?;

    let mut model = RewardModel::new(cfg.model.clone(), derive_seed(cfg.seed, 0x1417))?;
    model.fit_flow_stats(ds.train.iter().flat_map(|&t| ds.tracks[t].flows.iter()));

    // Music partner of each flow; a fixed random permutation in the
    // control run.
    let mut partner: Vec<usize> = (0..pairs.len()).collect();
    if cfg.shuffle_pairs {
        partner.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0x5bf)));
    }

    let adam = AdamConfig::with_lr(cfg.lr);
    let mut log = TrainLog::default();
    let mut best: Option<(f64, f64, RewardModel)> = None;
    for epoch in 1..=cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, epoch as u64));
        let patches = pairs
            .iter()
            .map(|p| crop_resize(&ds.tracks[p.track].flows[p.sample], &mut rng, cfg.model.patch))
            .collect::<Result<Vec<_>, _>>()?;
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.shuffle(&mut rng);
        let batches = form_batches(order, &pairs, cfg.batch_size, cfg.min_separation);
        let mut epoch_loss = 0.0;
        for (bi, batch) in batches.iter().enumerate() {
            let windows = batch.iter().map(|&i| window(ds, &pairs[partner[i]], half)).collect::<Result<Vec<_>, _>>()?;
            let flows: Vec<&FlowPatch> = batch.iter().map(|&i| &patches[i]).collect();
            let (loss, mut grads) = model.loss_and_grads(&windows, &flows)?;
            if !loss.is_finite() {
                return Err(RewardError::NonFiniteLoss { epoch, batch: bi });
            }
            grads.clip_global_norm(cfg.grad_clip);
            adam_step(&mut model.store, &grads, &adam)?;
            epoch_loss += loss;
        }
        let (top1, val_loss) = evaluate(&model, ds, &val)?;
        let row = TrainLogRow { epoch, loss: epoch_loss / batches.len().max(1) as f64, val_loss, top1_retrieval: top1 };
        on_epoch(&row);
        let better = match &best {
            None => true,
            Some((a, l, _)) => val_loss < *l || (val_loss == *l && top1 > *a),
        };
        if better {
            best = Some((top1, val_loss, model.clone()));
            log.best_epoch = epoch;
        }
        log.rows.push(row);
    }
    let model = best.map(|b| b.2).unwrap_or(model);
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(track: usize, frame: usize) -> Pair {
        Pair { track, sample: 0, frame }
    }

    #[test]
    fn batches_respect_separation_and_size() {
        let pairs: Vec<Pair> = (0..40).map(|i| pair(i % 2, 31 + 3 * (i / 2))).collect();
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
        let batches = form_batches(order, &pairs, 4, 10);
        let mut seen = vec![0; pairs.len()];
        for b in &batches {
            assert!(b.len() >= 2 && b.len() <= 4);
            for (x, &i) in b.iter().enumerate() {
                seen[i] += 1;
                for &j in &b[x + 1..] {
                    assert!(pairs[i].track != pairs[j].track || pairs[i].frame.abs_diff(pairs[j].frame) >= 10);
                }
            }
        }
        assert!(seen.iter().all(|&c| c <= 1));
        assert!(seen.iter().sum::<usize>() >= 36);
    }

    #[test]
    fn csv_header() {
        let log = TrainLog { rows: vec![TrainLogRow { epoch: 1, loss: 2.5, val_loss: 2.0, top1_retrieval: 0.25 }], best_epoch: 1 };
        assert_eq!(log.to_csv(), "epoch,loss,val_loss,top1_retrieval\n1,2.5,2,0.25\n");
        assert_eq!(log.best().unwrap().epoch, 1);
    }
}
