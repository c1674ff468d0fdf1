use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;

use super::{
    augment_flip, lr_schedule, sample_modalities, vo_loss, Dataset, NormStats, Sample,
    TrainConfig,
};
use crate::autodiff::{
    adam_step, clip_grad_norm, AdamConfig, AdamState, Checkpoint, Records, Tape, Tensor,
};
use crate::error::{Error, Result};
use crate::geometry::Transform2;
use crate::model::{ModelConfig, PairRef, Vot};
use crate::rng;
use crate::world::{ModalitySet, Observation};

pub const LOG_HEADER: &str =
    "epoch,lr,train_loss,val_loss,grad_norm_mean,modality_freq_rgb,modality_freq_depth,modality_freq_rgbd";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub grad_norm_mean: f64,
    pub freq: [f64; 3],
}

impl LogRow {
    fn to_array(self) -> [f64; 8] {
        [
            self.epoch as f64,
            self.lr,
            self.train_loss,
            self.val_loss,
            self.grad_norm_mean,
            self.freq[0],
            self.freq[1],
            self.freq[2],
        ]
    }

    fn from_slice(v: &[f64]) -> Self {
        Self {
            epoch: v[0] as usize,
            lr: v[1],
            train_loss: v[2],
            val_loss: v[3],
            grad_norm_mean: v[4],
            freq: [v[5], v[6], v[7]],
        }
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.epoch,
            self.lr,
            self.train_loss,
            self.val_loss,
            self.grad_norm_mean,
            self.freq[0],
            self.freq[1],
            self.freq[2]
        )
    }
}

/// Everything needed to continue training exactly.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: Vot,
    pub adam: AdamState,
    pub norm: NormStats,
    /// Completed epochs.
    pub epoch: usize,
    pub best_val: f64,
    pub best_epoch: usize,
    pub log: Vec<LogRow>,
}

impl TrainState {
    pub fn new(model: Vot) -> Self {
        let adam = AdamState::new(model.params());
        Self {
            model,
            adam,
            norm: NormStats::default(),
            epoch: 0,
            best_val: f64::INFINITY,
            best_epoch: 0,
            log: Vec::new(),
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = model_checkpoint(&self.model, &self.norm);
        ckpt.adam = Some(self.adam.clone());
        ckpt.meta.push(("train.epoch".into(), Tensor::scalar(self.epoch as f64)));
        ckpt.meta.push(("train.best_val".into(), Tensor::scalar(self.best_val)));
        ckpt.meta.push(("train.best_epoch".into(), Tensor::scalar(self.best_epoch as f64)));
        let rows: Vec<f64> = self.log.iter().flat_map(|r| r.to_array()).collect();
        ckpt.meta.push((
            "train.log".into(),
            Tensor::new(&[self.log.len(), 8], rows).expect("log shape"),
        ));
        ckpt
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let (model, norm) = load_model(ckpt)?;
        let adam = ckpt
            .adam
            .clone()
            .ok_or_else(|| Error::Format("checkpoint has no optimizer state".into()))?;
        let get = |k: &str| {
            ckpt.meta_value(k)
                .ok_or_else(|| Error::Format(format!("checkpoint lacks {k}")))
        };
        let log = ckpt
            .meta
            .iter()
            .find(|(n, _)| n == "train.log")
            .map(|(_, t)| t.data().chunks_exact(8).map(LogRow::from_slice).collect())
            .unwrap_or_default();
        Ok(Self {
            model,
            adam,
            norm,
            epoch: get("train.epoch")? as usize,
            best_val: get("train.best_val")?,
            best_epoch: get("train.best_epoch")? as usize,
            log,
        })
    }

    pub fn log_csv(&self) -> String {
        let mut s = String::from(LOG_HEADER);
        s.push('\n');
        for r in &self.log {
            let _ = writeln!(s, "{}", r.csv_line());
        }
        s
    }
}

fn modality_bits(m: ModalitySet) -> f64 {
    (m.rgb as u8 + 2 * m.depth as u8) as f64
}

/// Inference checkpoint: parameters, normalisation and model shape.
pub fn model_checkpoint(model: &Vot, norm: &NormStats) -> Checkpoint {
    let c = model.config();
    let meta: Records = [
        ("model.dim", c.dim as f64),
        ("model.depth", c.depth as f64),
        ("model.heads", c.heads as f64),
        ("model.patch", c.patch as f64),
        ("model.width", c.width as f64),
        ("model.height", c.height as f64),
        ("model.modalities", modality_bits(c.modalities)),
        ("model.action_vocab", c.action_vocab as f64),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), Tensor::scalar(v)))
    .collect();
    Checkpoint {
        params: model.params().clone(),
        adam: None,
        norm: norm.to_records(),
        meta,
    }
}

/// Rebuilds the model described by a checkpoint and loads its weights.
pub fn load_model(ckpt: &Checkpoint) -> Result<(Vot, NormStats)> {
    let get = |k: &str| {
        ckpt.meta_value(k)
            .map(|v| v as usize)
            .ok_or_else(|| Error::Format(format!("checkpoint lacks {k}")))
    };
    let bits = get("model.modalities")?;
    let cfg = ModelConfig {
        dim: get("model.dim")?,
        depth: get("model.depth")?,
        heads: get("model.heads")?,
        patch: get("model.patch")?,
        width: get("model.width")?,
        height: get("model.height")?,
        modalities: ModalitySet {
            rgb: bits & 1 != 0,
            depth: bits & 2 != 0,
        },
        action_vocab: get("model.action_vocab")?,
    };
    let mut model = Vot::new(cfg, &mut rng::stream(0, 0))?;
    model.params_mut().assign_from(&ckpt.params)?;
    Ok((model, NormStats::from_records(&ckpt.norm)?))
}

/// Normalised observation pairs restricted to `available`.
fn prepare(norm: &NormStats, samples: &[&Sample], available: ModalitySet) -> Result<Vec<(Observation, Observation)>> {
    samples
        .iter()
        .map(|s| {
            if available.is_empty() {
                let empty = Observation {
                    rgb: None,
                    depth: None,
                };
                return Ok((empty.clone(), empty));
            }
            Ok((norm.normalize(&s.o_t, available)?, norm.normalize(&s.o_t1, available)?))
        })
        .collect()
}

/// Mean main-term loss over a dataset with frozen statistics.
pub fn evaluate_loss(
    model: &Vot,
    norm: &NormStats,
    data: &Dataset,
    available: ModalitySet,
    batch: usize,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let mut total = 0.0;
    for chunk in data.samples.chunks(batch.max(1)) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let obs = prepare(norm, &refs, available)?;
        let pairs: Vec<PairRef> = obs
            .iter()
            .zip(chunk)
            .map(|((a, b), s)| PairRef {
                o_t: a,
                o_t1: b,
                action: s.action,
            })
            .collect();
        let preds = model.predict(&pairs, available)?;
        for (p, s) in preds.iter().zip(chunk) {
            total += super::loss_value(*p, s.label, None, 0.0);
        }
    }
    Ok(total / data.len() as f64)
}

const STREAM_SHUFFLE: u64 = 0x5348_0000;
const STREAM_BATCH: u64 = 0x4241_0000;

/// Runs epochs `state.epoch .. cfg.epochs`. With `out_dir`, writes
/// `train_log.csv`, `last.votc`, `best.votc` and numbered checkpoints.
pub fn train(
    state: &mut TrainState,
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<()> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::InvalidArgument("training and validation sets must be nonempty".into()));
    }
    let model_mods = state.model.config().modalities;
    let adam_cfg = AdamConfig::default();
    let n = train_set.len();
    let batches = n.div_ceil(cfg.batch_size);
    while state.epoch < cfg.epochs {
        let epoch = state.epoch;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::stream(cfg.seed, STREAM_SHUFFLE + epoch as u64));
        let mut loss_sum = 0.0;
        let mut norm_sum = 0.0;
        let mut freq = [0usize; 3];
        let mut lr = 0.0;
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            let mut brng = rng::stream(
                rng::derive(cfg.seed, epoch as u64),
                STREAM_BATCH + bi as u64,
            );
            let drawn = sample_modalities(&cfg.schedule, &mut brng);
            freq[match (drawn.rgb, drawn.depth) {
                (true, false) => 0,
                (false, true) => 1,
                _ => 2,
            }] += 1;
            let available = ModalitySet {
                rgb: drawn.rgb && model_mods.rgb,
                depth: drawn.depth && model_mods.depth,
            };
            let batch: Vec<Sample> = idx
                .iter()
                .map(|&i| augment_flip(&train_set.samples[i], cfg.flip_prob, &mut brng))
                .collect();
            state
                .norm
                .update(batch.iter().flat_map(|s| [&s.o_t, &s.o_t1]), available);
            let refs: Vec<&Sample> = batch.iter().collect();
            let obs = prepare(&state.norm, &refs, available)?;
            let turns: Vec<usize> = (0..batch.len()).filter(|&i| batch[i].action.is_turn()).collect();
            let flipped: Vec<(Observation, Observation)> = turns
                .iter()
                .map(|&i| (obs[i].0.flip_horizontal(), obs[i].1.flip_horizontal()))
                .collect();
            let mut pairs: Vec<PairRef> = obs
                .iter()
                .zip(&batch)
                .map(|((a, b), s)| PairRef {
                    o_t: a,
                    o_t1: b,
                    action: s.action,
                })
                .collect();
            if cfg.inv_weight > 0.0 {
                pairs.extend(turns.iter().zip(&flipped).map(|(&i, (a, b))| PairRef {
                    o_t: a,
                    o_t1: b,
                    action: batch[i].action.mirror(),
                }));
            }
            let used_turns: &[usize] = if cfg.inv_weight > 0.0 { &turns } else { &[] };
            let labels: Vec<Transform2> = batch.iter().map(|s| s.label).collect();

            let mut tape = Tape::new();
            let bound = state.model.params().bind(&mut tape);
            let out = state.model.forward(&mut tape, &bound, &pairs, available)?;
            let loss = vo_loss(&mut tape, out.pred, &labels, used_turns, cfg.inv_weight)?;
            let value = tape.value(loss.total).item();
            let grads = tape.backward(loss.total)?;
            let mut grads = bound.grads(&tape, &grads);
            let gnorm = clip_grad_norm(&mut grads, cfg.clip_norm)?;
            if !value.is_finite() || !gnorm.is_finite() {
                if let Some(dir) = out_dir {
                    let _ = state.to_checkpoint().save(&dir.join("nonfinite_dump.votc"));
                }
                return Err(Error::NonFinite(format!(
                    "epoch {epoch} batch {bi}: loss {value}, grad norm {gnorm}"
                )));
            }
            lr = lr_schedule(epoch as f64 + bi as f64 / batches as f64, cfg);
            adam_step(state.model.params_mut(), &grads, &mut state.adam, lr, adam_cfg)?;
            loss_sum += value;
            norm_sum += gnorm;
        }
        let val_loss = evaluate_loss(&state.model, &state.norm, val_set, model_mods, 64)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite(format!("validation loss at epoch {epoch}")));
        }
        state.epoch += 1;
        state.log.push(LogRow {
            epoch: state.epoch,
            lr,
            train_loss: loss_sum / batches as f64,
            val_loss,
            grad_norm_mean: norm_sum / batches as f64,
            freq: freq.map(|f| f as f64 / batches as f64),
        });
        let improved = val_loss < state.best_val;
        if improved {
            state.best_val = val_loss;
            state.best_epoch = state.epoch;
        }
        if let Some(dir) = out_dir {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("train_log.csv"), state.log_csv())?;
            let ckpt = state.to_checkpoint();
            ckpt.save(&dir.join("last.votc"))?;
            if improved {
                ckpt.save(&dir.join("best.votc"))?;
            }
            if cfg.save_every > 0 && state.epoch % cfg.save_every == 0 {
                ckpt.save(&dir.join(format!("epoch_{:04}.votc", state.epoch)))?;
            }
        }
    }
    Ok(())
}
