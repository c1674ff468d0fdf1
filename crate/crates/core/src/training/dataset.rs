use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, relative_transform, Pose2, Transform2};
use crate::io::{BinReader, BinWriter};
use crate::rng;
use crate::world::{
    apply_observation_noise, generate_floorplan, render, sample_episode, step, ActionId,
    ActionPlanner, EpisodeParams, FloorParams, FloorPlan, Image, Modality, NoiseModel,
    Observation, RenderConfig,
};

const MAGIC: &[u8; 4] = b"VOTD";
const VERSION: u16 = 1;

/// One recorded transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub o_t: Observation,
    pub o_t1: Observation,
    pub action: ActionId,
    pub label: Transform2,
    pub collided: bool,
    pub pose_t: Pose2,
    pub pose_t1: Pose2,
    pub scene: u64,
}

impl Sample {
    fn check(&self, width: usize, height: usize) -> Result<()> {
        if self.action == ActionId::Stop {
            return Err(Error::Format("sample with STOP action".into()));
        }
        for obs in [&self.o_t, &self.o_t1] {
            for m in Modality::ALL {
                let img = obs
                    .get(m)
                    .ok_or_else(|| Error::Format(format!("sample lacks {}", m.name())))?;
                if img.dims() != (width, height, m.channels()) {
                    return Err(Error::Format(format!(
                        "{} image {:?} in a {width}x{height} dataset",
                        m.name(),
                        img.dims()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Observation pairs of a fixed resolution with both modalities.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub width: usize,
    pub height: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(width: usize, height: usize, samples: Vec<Sample>) -> Result<Self> {
        for s in &samples {
            s.check(width, height)?;
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BinWriter::new(w);
        w.bytes(MAGIC)?;
        w.u16(VERSION)?;
        w.u32(self.width as u32)?;
        w.u32(self.height as u32)?;
        w.u64(self.samples.len() as u64)?;
        for s in &self.samples {
            w.u8(s.action.code())?;
            w.u8(s.collided as u8)?;
            w.f64_slice(&s.label.to_array())?;
            for p in [s.pose_t, s.pose_t1] {
                w.f64_slice(&[p.position.x, p.position.y, p.heading])?;
            }
            w.u64(s.scene)?;
            for m in Modality::ALL {
                w.u8(m.code())?;
                w.u32(self.width as u32)?;
                w.u32(self.height as u32)?;
                w.u32(m.channels() as u32)?;
                for obs in [&s.o_t, &s.o_t1] {
                    w.f64_slice(&obs.get(m).expect("checked on construction").data)?;
                }
            }
        }
        w.finish()
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = BinReader::new(r);
        if &r.bytes(4)?[..] != MAGIC {
            return Err(Error::Format("not a VOTD dataset".into()));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported dataset version {version}")));
        }
        let width = r.u32()? as usize;
        let height = r.u32()? as usize;
        let count = r.u64()?;
        if width == 0 || height == 0 || width * height > 1 << 24 {
            return Err(Error::Format(format!("implausible image size {width}x{height}")));
        }
        let mut samples = Vec::with_capacity(count.min(1 << 20) as usize);
        for _ in 0..count {
            let action = ActionId::from_code(r.u8()?).map_err(|e| Error::Format(e.to_string()))?;
            let collided = match r.u8()? {
                0 => false,
                1 => true,
                v => return Err(Error::Format(format!("collided flag {v}"))),
            };
            let l = r.f64_vec(3)?;
            let label = Transform2 {
                beta: l[0],
                xi: crate::geometry::Vec2::new(l[1], l[2]),
            };
            let mut poses = [Pose2::default(); 2];
            for p in poses.iter_mut() {
                let v = r.f64_vec(3)?;
                *p = Pose2 {
                    position: crate::geometry::Vec2::new(v[0], v[1]),
                    heading: v[2],
                };
            }
            let scene = r.u64()?;
            let mut imgs: [[Option<Image>; 2]; 2] = Default::default();
            for _ in 0..2 {
                let m = Modality::from_code(r.u8()?).map_err(|e| Error::Format(e.to_string()))?;
                let (w, h, c) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
                if (w, h, c) != (width, height, m.channels()) {
                    return Err(Error::Format(format!(
                        "{} block {w}x{h}x{c} in a {width}x{height} dataset",
                        m.name()
                    )));
                }
                let slot = &mut imgs[m.code() as usize];
                for t in slot.iter_mut() {
                    *t = Some(Image::from_vec(w, h, c, r.f64_vec(w * h * c)?)?);
                }
            }
            let [[rgb0, rgb1], [d0, d1]] = imgs;
            let build = |a: Option<Image>, b: Option<Image>| {
                Observation::new(a, b).map_err(|e| Error::Format(e.to_string()))
            };
            samples.push(Sample {
                o_t: build(rgb0, d0)?,
                o_t1: build(rgb1, d1)?,
                action,
                label,
                collided,
                pose_t: poses[0],
                pose_t1: poses[1],
                scene,
            });
        }
        if !r.at_end()? {
            return Err(Error::Format("trailing bytes after dataset".into()));
        }
        Dataset::new(width, height, samples).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollectConfig {
    pub floor: FloorParams,
    pub render: RenderConfig,
    pub noise: NoiseModel,
    pub episode: EpisodeParams,
    /// Probability of keeping a non-colliding transition.
    pub keep_prob: f64,
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self {
            floor: FloorParams::default(),
            render: RenderConfig::default(),
            noise: NoiseModel::default(),
            episode: EpisodeParams::default(),
            keep_prob: 0.05,
        }
    }
}

/// Replan once the executed pose leaves the planned lattice pose by this much.
const REPLAN_POS: f64 = 0.05;
const REPLAN_HEADING_DEG: f64 = 5.0;
const MAX_FAILED_EPISODES: usize = 1000;

fn observe(plan: &FloorPlan, pose: Pose2, cfg: &CollectConfig, rng: &mut rng::Rng) -> Observation {
    apply_observation_noise(&render(plan, pose, &cfg.render), &cfg.noise, rng)
}

/// Follows lattice shortest paths under actuation noise in the given scenes
/// (round-robin per episode) and keeps `n` transitions. Collisions are
/// always kept; other transitions with probability `keep_prob`.
pub fn collect(cfg: &CollectConfig, scene_seeds: &[u64], n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    if scene_seeds.is_empty() {
        return Err(Error::InvalidArgument("no scene seeds".into()));
    }
    if !(cfg.keep_prob > 0.0 && cfg.keep_prob <= 1.0) || !cfg.noise.is_valid() {
        return Err(Error::InvalidArgument("keep_prob must lie in (0, 1] and noise must be valid".into()));
    }
    let mut plans: HashMap<u64, FloorPlan> = HashMap::new();
    for &s in scene_seeds {
        if !plans.contains_key(&s) {
            plans.insert(s, generate_floorplan(s, cfg.floor)?);
        }
    }
    let noiseless = NoiseModel::noiseless();
    let mut samples = Vec::with_capacity(n);
    let mut failed = 0;
    let mut episode = 0u64;
    while samples.len() < n {
        let scene = scene_seeds[episode as usize % scene_seeds.len()];
        let plan = &plans[&scene];
        let mut rng = rng::stream(seed, episode);
        episode += 1;
        let spec = match sample_episode(plan, rng.gen(), cfg.episode) {
            Ok(s) => s,
            Err(Error::Generation(_)) => {
                failed += 1;
                if failed > MAX_FAILED_EPISODES {
                    return Err(Error::Generation("episode sampling keeps failing".into()));
                }
                continue;
            }
            Err(e) => return Err(e),
        };
        let planner = ActionPlanner::new(plan, spec.goal, spec.success_radius);
        let mut pose = spec.start;
        let mut obs = observe(plan, pose, cfg, &mut rng);
        let mut queue: Vec<ActionId> = Vec::new();
        let mut expected = pose;
        for _ in 0..spec.max_steps {
            let drift = (pose.position - expected.position).norm() > REPLAN_POS
                || normalize_angle(pose.heading - expected.heading).abs()
                    > REPLAN_HEADING_DEG.to_radians();
            if queue.is_empty() || drift {
                queue = match planner.plan_from(pose) {
                    Ok(q) => q,
                    Err(_) => break,
                };
                queue.reverse();
                expected = pose;
            }
            let Some(action) = queue.pop() else { break };
            expected = step(plan, expected, action, &noiseless, &mut rng).0;
            let (next, collided) = step(plan, pose, action, &cfg.noise, &mut rng);
            let next_obs = observe(plan, next, cfg, &mut rng);
            let keep = rng.gen::<f64>() < cfg.keep_prob;
            if collided {
                // The lattice pose is unreachable after contact.
                queue.clear();
            }
            if collided || keep {
                samples.push(Sample {
                    o_t: obs.clone(),
                    o_t1: next_obs.clone(),
                    action,
                    label: relative_transform(pose, next),
                    collided,
                    pose_t: pose,
                    pose_t1: next,
                    scene,
                });
                if samples.len() == n {
                    break;
                }
            }
            pose = next;
            obs = next_obs;
        }
    }
    Dataset::new(cfg.render.width, cfg.render.height, samples)
}
