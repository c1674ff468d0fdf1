//! Dataset collection and storage, normalisation, flip augmentation,
//! modality dropout, the loss and the training loop.

mod dataset;
mod norm;
mod train;

pub use dataset::{collect, CollectConfig, Dataset, Sample};
pub use norm::{ChannelStats, NormStats, NORM_EPS};
pub use train::{
    evaluate_loss, load_model, model_checkpoint, train, LogRow, TrainState, LOG_HEADER,
};

use rand::Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geometry::Transform2;
use crate::world::ModalitySet;

/// Mirrors observations, action and label of a sample.
pub fn flip_sample(s: &Sample) -> Sample {
    Sample {
        o_t: s.o_t.flip_horizontal(),
        o_t1: s.o_t1.flip_horizontal(),
        action: s.action.mirror(),
        label: s.label.mirror(),
        ..s.clone()
    }
}

/// With probability `p`, flips LEFT/RIGHT samples; FWD passes unchanged.
pub fn augment_flip<R: Rng + ?Sized>(s: &Sample, p: f64, rng: &mut R) -> Sample {
    if s.action.is_turn() && rng.gen::<f64>() < p {
        flip_sample(s)
    } else {
        s.clone()
    }
}

/// Probabilities of training on `{RGB}`, `{Depth}` and `{RGB-D}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutSchedule {
    pub rgb: f64,
    pub depth: f64,
    pub rgbd: f64,
}

impl DropoutSchedule {
    pub const NONE: DropoutSchedule = DropoutSchedule {
        rgb: 0.0,
        depth: 0.0,
        rgbd: 1.0,
    };
    pub const UNIFORM: DropoutSchedule = DropoutSchedule {
        rgb: 1.0 / 3.0,
        depth: 1.0 / 3.0,
        rgbd: 1.0 / 3.0,
    };
    pub const INVARIANCE: DropoutSchedule = DropoutSchedule {
        rgb: 0.2,
        depth: 0.3,
        rgbd: 0.5,
    };

    pub fn new(rgb: f64, depth: f64, rgbd: f64) -> Result<Self> {
        let s = Self { rgb, depth, rgbd };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let p = [self.rgb, self.depth, self.rgbd];
        if p.iter().any(|v| !v.is_finite() || *v < 0.0) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "dropout probabilities {p:?} must be non-negative and sum to 1"
            )));
        }
        Ok(())
    }

    /// `none`, `uniform`, `invariance` or three comma-separated probabilities.
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => Ok(Self::NONE),
            "uniform" => Ok(Self::UNIFORM),
            "invariance" => Ok(Self::INVARIANCE),
            other => {
                let v: Vec<f64> = other
                    .split(',')
                    .map(|x| x.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Config(format!("bad dropout schedule '{other}'")))?;
                if v.len() != 3 {
                    return Err(Error::Config(format!("dropout schedule needs 3 values, got '{other}'")));
                }
                Self::new(v[0], v[1], v[2])
            }
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.rgb, self.depth, self.rgbd]
    }
}

/// One subset for a whole batch.
pub fn sample_modalities<R: Rng + ?Sized>(schedule: &DropoutSchedule, rng: &mut R) -> ModalitySet {
    let u: f64 = rng.gen();
    if u < schedule.rgb {
        ModalitySet::RGB
    } else if u < schedule.rgb + schedule.depth {
        ModalitySet::DEPTH
    } else {
        ModalitySet::RGBD
    }
}

/// `(-1, -1, 1)` applied to `(beta, xi_x, xi_z)`.
pub const MIRROR_SIGNS: [f64; 3] = [-1.0, -1.0, 1.0];

/// Squared error of one prediction plus the weighted flip-consistency term.
pub fn loss_value(pred: Transform2, label: Transform2, pred_flipped: Option<Transform2>, weight: f64) -> f64 {
    let sq = |a: [f64; 3], b: [f64; 3]| a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let main = sq(pred.to_array(), label.to_array());
    let inv = pred_flipped.map_or(0.0, |f| weight * sq(f.mirror().to_array(), pred.to_array()));
    main + inv
}

#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub total: Var,
    pub main: Var,
}

/// Batch loss on the tape. `pred` holds `labels.len()` primary rows followed
/// by one flipped-view row per entry of `turns` (indices into the primary
/// rows). Both terms are averaged over the primary batch size.
pub fn vo_loss(
    tape: &mut Tape,
    pred: Var,
    labels: &[Transform2],
    turns: &[usize],
    weight: f64,
) -> Result<LossVars> {
    let b = labels.len();
    let (rows, cols) = tape.value(pred).dims2("vo_loss")?;
    if cols != 3 || rows != b + turns.len() || b == 0 {
        return Err(Error::shape(
            "vo_loss",
            format!("pred [{rows}x{cols}] for {b} labels and {} flipped rows", turns.len()),
        ));
    }
    let main_pred = tape.slice(pred, 0, 0, b)?;
    let target: Vec<f64> = labels.iter().flat_map(|l| l.to_array()).collect();
    let target = tape.constant(Tensor::new(&[b, 3], target)?);
    let diff = tape.sub(main_pred, target)?;
    let sq = tape.sum_sq(diff);
    let main = tape.scale(sq, 1.0 / b as f64);
    if turns.is_empty() || weight == 0.0 {
        return Ok(LossVars { total: main, main });
    }
    let t = turns.len();
    let flipped = tape.slice(pred, 0, b, t)?;
    let signs: Vec<f64> = (0..t).flat_map(|_| MIRROR_SIGNS).collect();
    let signs = tape.constant(Tensor::new(&[t, 3], signs)?);
    let mirrored = tape.mul(flipped, signs)?;
    let primary = tape.gather_rows(main_pred, turns)?;
    let d = tape.sub(mirrored, primary)?;
    let inv = tape.sum_sq(d);
    let inv = tape.scale(inv, weight / b as f64);
    let total = tape.add(main, inv)?;
    Ok(LossVars { total, main })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub warmup_epochs: f64,
    pub peak_lr: f64,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub inv_weight: f64,
    pub flip_prob: f64,
    pub schedule: DropoutSchedule,
    pub seed: u64,
    /// Write a numbered checkpoint every this many epochs (0 disables).
    pub save_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            warmup_epochs: 10.0,
            peak_lr: 2e-4,
            batch_size: 32,
            clip_norm: 1.0,
            inv_weight: 0.1,
            flip_prob: 0.5,
            schedule: DropoutSchedule::NONE,
            seed: 0,
            save_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if self.epochs == 0 || self.batch_size == 0 {
            return fail("epochs and batch_size must be positive");
        }
        if !(self.warmup_epochs >= 0.0 && self.warmup_epochs <= self.epochs as f64) {
            return fail("warmup_epochs must lie in [0, epochs]");
        }
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) {
            return fail("peak_lr must be positive");
        }
        if !(self.clip_norm > 0.0) {
            return fail("clip_norm must be positive");
        }
        if !(self.inv_weight >= 0.0) || !(0.0..=1.0).contains(&self.flip_prob) {
            return fail("inv_weight must be >= 0 and flip_prob in [0, 1]");
        }
        self.schedule.validate()
    }
}

/// Linear warmup from 0 to `peak_lr` over `warmup_epochs`, then constant.
/// `epoch` may be fractional.
pub fn lr_schedule(epoch: f64, cfg: &TrainConfig) -> f64 {
    if epoch >= cfg.warmup_epochs {
        cfg.peak_lr
    } else {
        cfg.peak_lr * epoch.max(0.0) / cfg.warmup_epochs
    }
}

