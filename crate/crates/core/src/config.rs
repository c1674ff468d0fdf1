//! Flat `section.key = value` run configuration.
//!
//! Every key has a default, unknown keys are rejected, and [`RunConfig::render`]
//! writes a file that parses back to the same configuration.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::eval::{Controller, GotoConfig, NavConfig};
use crate::model::ModelConfig;
use crate::training::{CollectConfig, DropoutSchedule, TrainConfig};
use crate::world::{EpisodeParams, FloorParams, ModalitySet, NoiseModel, RenderConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: usize,
    pub out: String,
    pub floor: FloorParams,
    pub render: RenderConfig,
    pub noise: NoiseModel,
    pub episode: EpisodeParams,
    pub train_scenes: Vec<u64>,
    pub val_scenes: Vec<u64>,
    pub train_samples: usize,
    pub val_samples: usize,
    pub keep_prob: f64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub train_data: String,
    pub val_data: String,
    pub resume: String,
    pub eval_scenes: Vec<u64>,
    pub eval_episodes: usize,
    pub eval_subsets: Vec<ModalitySet>,
    /// `model`, `oracle` or `nominal`.
    pub estimator: String,
    /// `planner` or `goto`.
    pub controller: String,
    pub noiseless: bool,
    pub checkpoint: String,
    pub trajectories: usize,
    pub upscale: usize,
    pub attn_dataset: String,
    pub attn_indices: Vec<usize>,
    pub worldgen_scenes: Vec<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let collect = CollectConfig::default();
        Self {
            seed: 0,
            threads: 0,
            out: "runs".into(),
            floor: collect.floor,
            render: collect.render,
            noise: collect.noise,
            episode: collect.episode,
            train_scenes: vec![1, 2, 3, 4],
            val_scenes: vec![101, 102],
            train_samples: 8000,
            val_samples: 800,
            keep_prob: collect.keep_prob,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            train_data: String::new(),
            val_data: String::new(),
            resume: String::new(),
            eval_scenes: vec![201, 202, 203, 204],
            eval_episodes: 100,
            eval_subsets: vec![ModalitySet::RGBD, ModalitySet::DEPTH, ModalitySet::RGB, ModalitySet::NONE],
            estimator: "model".into(),
            controller: "planner".into(),
            noiseless: false,
            checkpoint: String::new(),
            trajectories: 0,
            upscale: 8,
            attn_dataset: String::new(),
            attn_indices: vec![0],
            worldgen_scenes: vec![1],
        }
    }
}

fn num<T: FromStr>(v: &str) -> std::result::Result<T, String>
where
    T::Err: Display,
{
    v.parse::<T>().map_err(|e| format!("'{v}': {e}"))
}

fn list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: Display,
{
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| num(x.trim())).collect()
}

fn join<T: Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn flag(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("'{v}' is not a boolean")),
    }
}

fn modalities(v: &str) -> std::result::Result<ModalitySet, String> {
    ModalitySet::parse(v).map_err(|e| e.to_string())
}

impl RunConfig {
    /// Every key in canonical order with its current value.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let s = self;
        vec![
            ("run.seed", s.seed.to_string()),
            ("run.threads", s.threads.to_string()),
            ("run.out", s.out.clone()),
            ("world.size", s.floor.size.to_string()),
            ("world.corridor_width", s.floor.corridor_width.to_string()),
            ("world.room_count", s.floor.room_count.to_string()),
            ("world.cell_size", s.floor.cell_size.to_string()),
            ("render.width", s.render.width.to_string()),
            ("render.height", s.render.height.to_string()),
            ("render.hfov_deg", s.render.hfov_deg.to_string()),
            ("render.camera_height", s.render.camera_height.to_string()),
            ("render.wall_height", s.render.wall_height.to_string()),
            ("noise.act_sigma_trans", s.noise.act_sigma_trans.to_string()),
            ("noise.act_sigma_rot", s.noise.act_sigma_rot.to_string()),
            ("noise.rgb_sigma", s.noise.rgb_sigma.to_string()),
            ("noise.depth_sigma", s.noise.depth_sigma.to_string()),
            ("noise.seed", s.noise.seed.to_string()),
            ("episode.d_min", s.episode.d_min.to_string()),
            ("episode.d_max", s.episode.d_max.to_string()),
            ("episode.max_steps", s.episode.max_steps.to_string()),
            ("episode.success_radius", s.episode.success_radius.to_string()),
            ("collect.train_scenes", join(&s.train_scenes)),
            ("collect.val_scenes", join(&s.val_scenes)),
            ("collect.train_samples", s.train_samples.to_string()),
            ("collect.val_samples", s.val_samples.to_string()),
            ("collect.keep_prob", s.keep_prob.to_string()),
            ("model.dim", s.model.dim.to_string()),
            ("model.depth", s.model.depth.to_string()),
            ("model.heads", s.model.heads.to_string()),
            ("model.patch", s.model.patch.to_string()),
            ("model.modalities", s.model.modalities.name().to_string()),
            ("train.epochs", s.train.epochs.to_string()),
            ("train.warmup_epochs", s.train.warmup_epochs.to_string()),
            ("train.peak_lr", s.train.peak_lr.to_string()),
            ("train.batch_size", s.train.batch_size.to_string()),
            ("train.clip_norm", s.train.clip_norm.to_string()),
            ("train.inv_weight", s.train.inv_weight.to_string()),
            ("train.flip_prob", s.train.flip_prob.to_string()),
            ("train.schedule", join(&s.train.schedule.to_array())),
            ("train.save_every", s.train.save_every.to_string()),
            ("train.train_data", s.train_data.clone()),
            ("train.val_data", s.val_data.clone()),
            ("train.resume", s.resume.clone()),
            ("eval.scenes", join(&s.eval_scenes)),
            ("eval.episodes", s.eval_episodes.to_string()),
            (
                "eval.subsets",
                s.eval_subsets.iter().map(|m| m.name()).collect::<Vec<_>>().join(","),
            ),
            ("eval.estimator", s.estimator.clone()),
            ("eval.controller", s.controller.clone()),
            ("eval.noiseless", s.noiseless.to_string()),
            ("eval.checkpoint", s.checkpoint.clone()),
            ("eval.trajectories", s.trajectories.to_string()),
            ("eval.upscale", s.upscale.to_string()),
            ("attn.dataset", s.attn_dataset.clone()),
            ("attn.indices", join(&s.attn_indices)),
            ("worldgen.scenes", join(&s.worldgen_scenes)),
        ]
    }

    /// Sets one key; the error message names the offending key or value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        match key.trim() {
            "run.seed" => self.seed = num(v)?,
            "run.threads" => self.threads = num(v)?,
            "run.out" => self.out = v.into(),
            "world.size" => self.floor.size = num(v)?,
            "world.corridor_width" => self.floor.corridor_width = num(v)?,
            "world.room_count" => self.floor.room_count = num(v)?,
            "world.cell_size" => self.floor.cell_size = num(v)?,
            "render.width" => self.render.width = num(v)?,
            "render.height" => self.render.height = num(v)?,
            "render.hfov_deg" => self.render.hfov_deg = num(v)?,
            "render.camera_height" => self.render.camera_height = num(v)?,
            "render.wall_height" => self.render.wall_height = num(v)?,
            "noise.act_sigma_trans" => self.noise.act_sigma_trans = num(v)?,
            "noise.act_sigma_rot" => self.noise.act_sigma_rot = num(v)?,
            "noise.rgb_sigma" => self.noise.rgb_sigma = num(v)?,
            "noise.depth_sigma" => self.noise.depth_sigma = num(v)?,
            "noise.seed" => self.noise.seed = num(v)?,
            "episode.d_min" => self.episode.d_min = num(v)?,
            "episode.d_max" => self.episode.d_max = num(v)?,
            "episode.max_steps" => self.episode.max_steps = num(v)?,
            "episode.success_radius" => self.episode.success_radius = num(v)?,
            "collect.train_scenes" => self.train_scenes = list(v)?,
            "collect.val_scenes" => self.val_scenes = list(v)?,
            "collect.train_samples" => self.train_samples = num(v)?,
            "collect.val_samples" => self.val_samples = num(v)?,
            "collect.keep_prob" => self.keep_prob = num(v)?,
            "model.dim" => self.model.dim = num(v)?,
            "model.depth" => self.model.depth = num(v)?,
            "model.heads" => self.model.heads = num(v)?,
            "model.patch" => self.model.patch = num(v)?,
            "model.modalities" => self.model.modalities = modalities(v)?,
            "train.epochs" => self.train.epochs = num(v)?,
            "train.warmup_epochs" => self.train.warmup_epochs = num(v)?,
            "train.peak_lr" => self.train.peak_lr = num(v)?,
            "train.batch_size" => self.train.batch_size = num(v)?,
            "train.clip_norm" => self.train.clip_norm = num(v)?,
            "train.inv_weight" => self.train.inv_weight = num(v)?,
            "train.flip_prob" => self.train.flip_prob = num(v)?,
            "train.schedule" => self.train.schedule = DropoutSchedule::parse(v).map_err(|e| e.to_string())?,
            "train.save_every" => self.train.save_every = num(v)?,
            "train.train_data" => self.train_data = v.into(),
            "train.val_data" => self.val_data = v.into(),
            "train.resume" => self.resume = v.into(),
            "eval.scenes" => self.eval_scenes = list(v)?,
            "eval.episodes" => self.eval_episodes = num(v)?,
            "eval.subsets" => {
                self.eval_subsets = v
                    .split(',')
                    .map(modalities)
                    .collect::<std::result::Result<_, _>>()?
            }
            "eval.estimator" => match v {
                "model" | "oracle" | "nominal" => self.estimator = v.into(),
                _ => return Err(format!("estimator must be model, oracle or nominal, got '{v}'")),
            },
            "eval.controller" => match v {
                "planner" | "goto" => self.controller = v.into(),
                _ => return Err(format!("controller must be planner or goto, got '{v}'")),
            },
            "eval.noiseless" => self.noiseless = flag(v)?,
            "eval.checkpoint" => self.checkpoint = v.into(),
            "eval.trajectories" => self.trajectories = num(v)?,
            "eval.upscale" => self.upscale = num(v)?,
            "attn.dataset" => self.attn_dataset = v.into(),
            "attn.indices" => self.attn_indices = list(v)?,
            "worldgen.scenes" => self.worldgen_scenes = list(v)?,
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    /// Applies `key = value` lines. `#` starts a comment; blank lines are
    /// skipped. Errors carry `origin:line`.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{origin}:{}: expected 'key = value'", i + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("{origin}:{}: {}: {e}", i + 1, k.trim())))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set {kv}: expected key=value")))?;
        self.set(k, v).map_err(|e| Error::Config(format!("--set {}: {e}", k.trim())))
    }

    /// The fully resolved configuration, parseable by [`RunConfig::apply_text`].
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.train_scenes.is_empty() || self.val_scenes.is_empty() {
            return bad("collect scenes must be nonempty".into());
        }
        if let Some(s) = self.train_scenes.iter().find(|s| self.val_scenes.contains(s)) {
            return bad(format!("scene {s} is in both train and validation sets"));
        }
        if self.train_samples == 0 || self.val_samples == 0 {
            return bad("collect sample counts must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.keep_prob) || self.keep_prob == 0.0 {
            return bad(format!("collect.keep_prob must lie in (0, 1], got {}", self.keep_prob));
        }
        let n = &self.noise;
        if [n.act_sigma_trans, n.act_sigma_rot, n.rgb_sigma, n.depth_sigma]
            .iter()
            .any(|s| !(*s >= 0.0) || !s.is_finite())
        {
            return bad("noise sigmas must be finite and non-negative".into());
        }
        if !(self.episode.d_min > 0.0 && self.episode.d_min <= self.episode.d_max) || self.episode.max_steps == 0 {
            return bad("episode needs 0 < d_min <= d_max and max_steps > 0".into());
        }
        if self.eval_scenes.is_empty() || self.eval_subsets.is_empty() {
            return bad("eval scenes and subsets must be nonempty".into());
        }
        if self.upscale == 0 {
            return bad("eval.upscale must be positive".into());
        }
        self.model_config().validate()?;
        self.train.validate()
    }

    /// Model configuration with observation size taken from the renderer.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            width: self.render.width,
            height: self.render.height,
            ..self.model
        }
    }

    pub fn collect_config(&self) -> CollectConfig {
        CollectConfig {
            floor: self.floor,
            render: self.render,
            noise: self.noise,
            episode: self.episode,
            keep_prob: self.keep_prob,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn nav_config(&self) -> NavConfig {
        let goto = GotoConfig {
            stop_radius: self.episode.success_radius,
            ..GotoConfig::default()
        };
        NavConfig {
            controller: if self.controller == "goto" {
                Controller::Goto(goto)
            } else {
                Controller::Planner(goto)
            },
            noise: if self.noiseless {
                NoiseModel::noiseless()
            } else {
                self.noise
            },
            render: self.render,
            threads: self.threads,
        }
    }
}
