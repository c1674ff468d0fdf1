//! Browser demo: a generated floorplan with a first-person view, and a
//! dead-reckoning episode that shows how blind odometry drifts.

use vot::eval::{run_episode, trajectory_image, Canvas, Estimator, NavConfig};
use vot::geometry::{Pose2, Vec2};
use vot::world::{
    generate_floorplan, render, sample_episode, step, ActionId, EpisodeParams, FloorParams, FloorPlan,
    Modality, NoiseModel, RenderConfig,
};
use wasm_bindgen::prelude::*;

const UPSCALE: usize = 8;
const VIEW_W: usize = 160;
const VIEW_H: usize = 80;

fn rgba(width: usize, height: usize, rgb: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(width * height * 4);
    for px in rgb.chunks_exact(3) {
        out.extend(px.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
        out.push(255);
    }
    out
}

fn err(e: vot::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    plan: FloorPlan,
    pose: Pose2,
    view: RenderConfig,
    drift: Option<Canvas>,
}

#[wasm_bindgen]
impl Demo {
    /// Generates the scene for `seed` and places the agent at a free cell.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> Result<Demo, JsError> {
        let plan = generate_floorplan(seed as u64, FloorParams::default()).map_err(err)?;
        let pose = sample_episode(&plan, seed as u64, EpisodeParams::default()).map_err(err)?.start;
        Ok(Demo {
            plan,
            pose,
            view: RenderConfig::with_size(VIEW_W, VIEW_H),
            drift: None,
        })
    }

    pub fn map_size(&self) -> usize {
        self.plan.width() * UPSCALE
    }

    pub fn view_width(&self) -> usize {
        VIEW_W
    }

    pub fn view_height(&self) -> usize {
        VIEW_H
    }

    /// Top-down map with the agent and a short heading tick.
    pub fn map_rgba(&self) -> Vec<u8> {
        let mut c = Canvas::floorplan(&self.plan, UPSCALE);
        let p = self.pose.position;
        c.polyline(&[p, p + self.pose.forward() * 0.35], [0.9, 0.1, 0.1]);
        c.dot(p, 3, [0.1, 0.3, 0.9]);
        rgba(c.width, c.height, &c.data)
    }

    /// Moves the agent to a clicked map pixel. Returns false on walls.
    pub fn place(&mut self, px: f64, py: f64) -> bool {
        let s = self.plan.cell_size() / UPSCALE as f64;
        let p = Vec2::new(px * s, (self.map_size() as f64 - py) * s);
        if !self.plan.is_free_point(p) {
            return false;
        }
        self.pose = Pose2 { position: p, ..self.pose };
        true
    }

    /// Executes `forward`, `left` or `right` without noise. Returns true on
    /// collision.
    pub fn act(&mut self, action: &str) -> Result<bool, JsError> {
        let a = match action {
            "forward" => ActionId::Forward,
            "left" => ActionId::Left,
            "right" => ActionId::Right,
            _ => return Err(JsError::new(&format!("unknown action '{action}'"))),
        };
        let mut rng = vot::rng::stream(0, 0);
        let (next, collided) = step(&self.plan, self.pose, a, &NoiseModel::noiseless(), &mut rng);
        self.pose = next;
        Ok(collided)
    }

    /// First-person `rgb` or `depth` image; depth is shown near-bright.
    pub fn view_rgba(&self, modality: &str) -> Result<Vec<u8>, JsError> {
        let obs = render(&self.plan, self.pose, &self.view);
        let m = match modality {
            "rgb" => Modality::Rgb,
            "depth" => Modality::Depth,
            _ => return Err(JsError::new(&format!("unknown modality '{modality}'"))),
        };
        let img = obs.get(m).ok_or_else(|| JsError::new("modality not rendered"))?;
        let rgb: Vec<f64> = match m {
            Modality::Rgb => img.data.clone(),
            Modality::Depth => {
                let far = m.value_range().1;
                img.data.iter().flat_map(|d| [1.0 - d / far; 3]).collect()
            }
        };
        Ok(rgba(VIEW_W, VIEW_H, &rgb))
    }

    /// Runs one episode steered by dead reckoning on nominal motions while
    /// actuation noise is scaled by `noise`. Returns a one-line summary; the
    /// trajectory image is available from `drift_rgba`.
    pub fn drift(&mut self, episode: u32, noise: f64) -> Result<String, JsError> {
        let spec = sample_episode(&self.plan, episode as u64 + 1000, EpisodeParams::default()).map_err(err)?;
        let base = NoiseModel::default();
        let nav = NavConfig {
            noise: NoiseModel {
                act_sigma_trans: base.act_sigma_trans * noise,
                act_sigma_rot: base.act_sigma_rot * noise,
                ..base
            },
            threads: 1,
            ..NavConfig::default()
        };
        let r = run_episode(&self.plan, &spec, &Estimator::Nominal, &nav, episode as u64).map_err(err)?;
        let last = r.trajectory.len() - 1;
        let drift = (r.trajectory[last].position - r.estimated[last].position).norm();
        self.drift = Some(trajectory_image(&self.plan, spec.goal, &r, UPSCALE));
        Ok(format!(
            "{} after {} steps, {} collisions; true distance to goal {:.2} m, pose drift {:.2} m",
            if r.success { "success" } else { "failure" },
            r.steps,
            r.collisions,
            r.d_goal,
            drift
        ))
    }

    pub fn drift_rgba(&self) -> Vec<u8> {
        self.drift.as_ref().map_or_else(Vec::new, |c| rgba(c.width, c.height, &c.data))
    }
}
