use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{ActionId, FloorPlan, AGENT_RADIUS, FORWARD_STEP, TURN_ANGLE_DEG};
use crate::geometry::{Pose2, Vec2};

/// Independent Gaussian actuation and sensor noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub act_sigma_trans: f64,
    pub act_sigma_rot: f64,
    pub rgb_sigma: f64,
    pub depth_sigma: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            act_sigma_trans: 0.01,
            act_sigma_rot: 1.15f64.to_radians(),
            rgb_sigma: 0.02,
            depth_sigma: 0.05,
            seed: 0,
        }
    }
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self {
            act_sigma_trans: 0.0,
            act_sigma_rot: 0.0,
            rgb_sigma: 0.0,
            depth_sigma: 0.0,
            seed: 0,
        }
    }

    /// Actuation noise only; observations stay clean.
    pub fn actuation_only(self) -> Self {
        Self {
            rgb_sigma: 0.0,
            depth_sigma: 0.0,
            ..self
        }
    }

    pub fn is_valid(&self) -> bool {
        [
            self.act_sigma_trans,
            self.act_sigma_rot,
            self.rgb_sigma,
            self.depth_sigma,
        ]
        .iter()
        .all(|s| s.is_finite() && *s >= 0.0)
    }
}

fn gaussian<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
    } else {
        0.0
    }
}

/// First-contact parameter of a disc of `radius` moving from `o` along unit
/// `d`, against the axis-aligned box `[lo, hi]`. A disc already touching the
/// box reports contact at 0 when moving into it.
fn sweep_disc_box(o: Vec2, d: Vec2, radius: f64, lo: Vec2, hi: Vec2) -> Option<f64> {
    let closest = Vec2::new(o.x.clamp(lo.x, hi.x), o.y.clamp(lo.y, hi.y));
    let gap = (closest - o).norm();
    if gap < radius {
        let towards = if gap > 0.0 {
            d.dot(closest - o) > 0.0
        } else {
            true
        };
        return towards.then_some(0.0);
    }
    let mut best: Option<f64> = None;
    let mut consider = |t: Option<f64>| {
        if let Some(t) = t {
            if t >= 0.0 && best.map_or(true, |b| t < b) {
                best = Some(t);
            }
        }
    };
    let r = radius;
    consider(ray_aabb(o, d, Vec2::new(lo.x - r, lo.y), Vec2::new(hi.x + r, hi.y)));
    consider(ray_aabb(o, d, Vec2::new(lo.x, lo.y - r), Vec2::new(hi.x, hi.y + r)));
    for c in [lo, hi, Vec2::new(lo.x, hi.y), Vec2::new(hi.x, lo.y)] {
        consider(ray_circle(o, d, c, r));
    }
    best
}

fn ray_aabb(o: Vec2, d: Vec2, lo: Vec2, hi: Vec2) -> Option<f64> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for (oc, dc, l, h) in [(o.x, d.x, lo.x, hi.x), (o.y, d.y, lo.y, hi.y)] {
        if dc.abs() < 1e-15 {
            if oc < l || oc > h {
                return None;
            }
        } else {
            let a = (l - oc) / dc;
            let b = (h - oc) / dc;
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
    }
    (t0 <= t1 && t1 >= 0.0).then_some(t0.max(0.0))
}

fn ray_circle(o: Vec2, d: Vec2, c: Vec2, r: f64) -> Option<f64> {
    let m = o - c;
    let b = m.dot(d);
    let cc = m.dot(m) - r * r;
    let disc = b * b - cc;
    if disc < 0.0 {
        return None;
    }
    let t = -b - disc.sqrt();
    (t >= 0.0).then_some(t)
}

/// Distance the agent disc can travel from `from` along unit `dir` before
/// touching a wall, capped at `max_dist`.
pub(crate) fn free_travel(plan: &FloorPlan, from: Vec2, dir: Vec2, max_dist: f64) -> f64 {
    let cs = plan.cell_size();
    let end = from + dir * max_dist;
    let pad = AGENT_RADIUS + cs;
    let (i0, j0) = plan.cell_of(Vec2::new(from.x.min(end.x) - pad, from.y.min(end.y) - pad));
    let (i1, j1) = plan.cell_of(Vec2::new(from.x.max(end.x) + pad, from.y.max(end.y) + pad));
    let mut travel = max_dist;
    for j in j0..=j1 {
        for i in i0..=i1 {
            if !plan.is_wall(i, j) {
                continue;
            }
            let lo = Vec2::new(i as f64 * cs, j as f64 * cs);
            let hi = Vec2::new(lo.x + cs, lo.y + cs);
            if let Some(t) = sweep_disc_box(from, dir, AGENT_RADIUS, lo, hi) {
                travel = travel.min(t);
            }
        }
    }
    travel
}

/// Executes one movement action. FWD moves along the heading and stops at
/// first contact without sliding; turns rotate in place.
pub fn step<R: Rng + ?Sized>(
    plan: &FloorPlan,
    state: Pose2,
    action: ActionId,
    noise: &NoiseModel,
    rng: &mut R,
) -> (Pose2, bool) {
    match action {
        ActionId::Forward => {
            let wanted = (FORWARD_STEP + gaussian(noise.act_sigma_trans, rng)).max(0.0);
            let dir = state.forward();
            let free = free_travel(plan, state.position, dir, wanted);
            let collided = free < wanted;
            // Back off from exact contact so the next sweep starts outside the wall.
            let dist = if collided { (free - 1e-9).max(0.0) } else { wanted };
            let p = state.position + dir * dist;
            (
                Pose2 {
                    position: p,
                    heading: state.heading,
                },
                collided,
            )
        }
        ActionId::Left | ActionId::Right => {
            let sign = if action == ActionId::Left { 1.0 } else { -1.0 };
            let turn = sign * TURN_ANGLE_DEG.to_radians() + gaussian(noise.act_sigma_rot, rng);
            (
                Pose2::new(state.position.x, state.position.y, state.heading + turn),
                false,
            )
        }
        ActionId::Stop => panic!("STOP is not a movement action"),
    }
}
