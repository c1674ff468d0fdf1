//! Procedural indoor world: floorplans, a column raycaster producing RGB and
//! depth, noisy discrete actuation with non-sliding collisions, and
//! geodesic queries.

mod episode;
mod floorplan;
mod motion;
mod observation;
mod path;
mod render;

pub use episode::{sample_episode, EpisodeParams, EpisodeSpec};
pub use floorplan::{generate_floorplan, FloorParams, FloorPlan, FREE, WALL};
pub use motion::{step, NoiseModel};
pub use observation::{apply_observation_noise, Image, Modality, ModalitySet, Observation};
pub use path::{
    astar, geodesic_distance, ActionPlanner, line_of_sight, next_waypoint, shortest_path_actions,
    steer_toward, waypoints,
};
pub use render::{render, RenderConfig};

use std::fmt;

use crate::error::{Error, Result};

pub const AGENT_RADIUS: f64 = 0.18;
pub const FORWARD_STEP: f64 = 0.25;
pub const TURN_ANGLE_DEG: f64 = 30.0;
pub const SUCCESS_RADIUS: f64 = 2.0 * AGENT_RADIUS;
pub const MAX_DEPTH: f64 = 10.0;

/// Discrete action space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionId {
    Forward,
    Left,
    Right,
    Stop,
}

impl ActionId {
    /// Movement actions, in embedding-table order.
    pub const MOVES: [ActionId; 3] = [ActionId::Forward, ActionId::Left, ActionId::Right];

    pub fn code(self) -> u8 {
        match self {
            ActionId::Forward => 0,
            ActionId::Left => 1,
            ActionId::Right => 2,
            ActionId::Stop => 3,
        }
    }

    pub fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(ActionId::Forward),
            1 => Ok(ActionId::Left),
            2 => Ok(ActionId::Right),
            3 => Ok(ActionId::Stop),
            _ => Err(Error::InvalidArgument(format!("unknown action code {c}"))),
        }
    }

    /// Swaps LEFT and RIGHT.
    pub fn mirror(self) -> Self {
        match self {
            ActionId::Left => ActionId::Right,
            ActionId::Right => ActionId::Left,
            a => a,
        }
    }

    pub fn is_turn(self) -> bool {
        matches!(self, ActionId::Left | ActionId::Right)
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionId::Forward => "FWD",
            ActionId::Left => "LEFT",
            ActionId::Right => "RIGHT",
            ActionId::Stop => "STOP",
        }
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn mirror_action(a: ActionId) -> ActionId {
    a.mirror()
}
