use rand::Rng as _;

use super::{geodesic_distance, FloorPlan, AGENT_RADIUS, SUCCESS_RADIUS};
use crate::error::{Error, Result};
use crate::geometry::{Pose2, Vec2};
use crate::rng;

/// A point-goal task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSpec {
    pub start: Pose2,
    pub goal: Vec2,
    pub max_steps: usize,
    pub success_radius: f64,
    /// Geodesic start-goal distance.
    pub geodesic: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeParams {
    pub d_min: f64,
    pub d_max: f64,
    pub max_steps: usize,
    pub success_radius: f64,
}

impl Default for EpisodeParams {
    fn default() -> Self {
        Self {
            d_min: 1.5,
            d_max: 6.0,
            max_steps: 500,
            success_radius: SUCCESS_RADIUS,
        }
    }
}

const MAX_TRIES: usize = 400;

/// Random start pose with agent clearance and a goal cell centre whose
/// geodesic distance lies in `[d_min, d_max]`.
pub fn sample_episode(plan: &FloorPlan, seed: u64, params: EpisodeParams) -> Result<EpisodeSpec> {
    if !(params.d_min >= 0.0 && params.d_max >= params.d_min) {
        return Err(Error::InvalidArgument("need 0 <= d_min <= d_max".into()));
    }
    let mut rng = rng::stream(seed, 0x4550_4953);
    let free = plan.free_cells();
    let cs = plan.cell_size();
    for _ in 0..MAX_TRIES {
        let (si, sj) = free[rng.gen_range(0..free.len())];
        let jitter = (cs / 2.0 - AGENT_RADIUS).max(0.0);
        let c = plan.cell_center(si, sj);
        let pos = Vec2::new(
            c.x + rng.gen_range(-jitter..=jitter),
            c.y + rng.gen_range(-jitter..=jitter),
        );
        let heading = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let (gi, gj) = free[rng.gen_range(0..free.len())];
        let goal = plan.cell_center(gi, gj);
        if !plan.disc_fits(pos, AGENT_RADIUS) {
            continue;
        }
        let d = geodesic_distance(plan, pos, goal)?;
        if d.is_finite() && d >= params.d_min && d <= params.d_max {
            return Ok(EpisodeSpec {
                start: Pose2::new(pos.x, pos.y, heading),
                goal,
                max_steps: params.max_steps,
                success_radius: params.success_radius,
                geodesic: d,
            });
        }
    }
    Err(Error::Generation(format!(
        "no episode with geodesic distance in [{}, {}] after {MAX_TRIES} tries",
        params.d_min, params.d_max
    )))
}
