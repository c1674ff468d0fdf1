//! Closed-loop navigation with dead-reckoned goal estimates, navigation
//! metrics, the modality-drop protocol and report artifacts.

mod episode;
mod report;

pub use episode::{
    build_suite, drop_eval, run_episode, run_suite, Controller, Estimator, NavConfig, Suite,
};
pub use report::{
    export_trajectory, metrics_csv, read_metrics_csv, read_trajectory_csv, summary_text, trajectory_csv,
    trajectory_image, vo_error_csv, Canvas, vo_error_report, ErrorSummary, VoErrorRow,
};

use crate::geometry::{GoalVector, Pose2, Transform2};
use crate::world::{steer_toward, ActionId, SUCCESS_RADIUS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GotoConfig {
    pub stop_radius: f64,
    /// Radians.
    pub turn_threshold: f64,
}

impl Default for GotoConfig {
    fn default() -> Self {
        Self {
            stop_radius: SUCCESS_RADIUS,
            turn_threshold: 15f64.to_radians(),
        }
    }
}

/// STOP inside the radius, else turn toward the goal or go forward.
pub fn goto_policy(g_hat: GoalVector, cfg: &GotoConfig) -> ActionId {
    if g_hat.distance() < cfg.stop_radius {
        ActionId::Stop
    } else {
        steer_toward(g_hat, cfg.turn_threshold)
    }
}

/// Outcome of one navigation episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub success: bool,
    /// Travelled path length.
    pub path_length: f64,
    /// Geodesic shortest-path length from the start.
    pub shortest: f64,
    pub d_init: f64,
    /// Geodesic distance to the goal at termination.
    pub d_goal: f64,
    pub steps: usize,
    pub collisions: usize,
    /// True poses, start first.
    pub trajectory: Vec<Pose2>,
    /// Poses obtained by composing the estimated motions from the true start.
    pub estimated: Vec<Pose2>,
    /// Estimated goal vector before each step and at the end.
    pub goal_trace: Vec<GoalVector>,
    pub actions: Vec<ActionId>,
    /// Per executed movement: (action, true motion, estimated motion).
    pub motions: Vec<(ActionId, Transform2, Transform2)>,
}

/// Success weighted by path length.
pub fn spl(results: &[EpisodeResult]) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    results
        .iter()
        .map(|r| {
            if r.success {
                r.shortest / r.path_length.max(r.shortest)
            } else {
                0.0
            }
        })
        .sum::<f64>()
        / results.len() as f64
}

/// SPL with success replaced by progress `1 - d_g / d_init`, clamped at 0.
pub fn softspl(results: &[EpisodeResult]) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    results
        .iter()
        .map(|r| {
            let progress = (1.0 - r.d_goal / r.d_init).max(0.0);
            progress * r.shortest / r.path_length.max(r.shortest)
        })
        .sum::<f64>()
        / results.len() as f64
}

pub fn success_rate(results: &[EpisodeResult]) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    results.iter().filter(|r| r.success).count() as f64 / results.len() as f64
}

/// Aggregate navigation metrics of one evaluation condition.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub subset: String,
    pub success: f64,
    pub spl: f64,
    pub softspl: f64,
    pub d_goal_mean: f64,
    pub episodes: usize,
    pub vo_errors: Vec<VoErrorRow>,
}

impl MetricsReport {
    pub fn from_results(subset: &str, results: &[EpisodeResult]) -> Self {
        let n = results.len();
        let motions: Vec<_> = results.iter().flat_map(|r| r.motions.iter().copied()).collect();
        Self {
            subset: subset.to_string(),
            success: success_rate(results),
            spl: spl(results),
            softspl: softspl(results),
            d_goal_mean: if n == 0 {
                0.0
            } else {
                results.iter().map(|r| r.d_goal).sum::<f64>() / n as f64
            },
            episodes: n,
            vo_errors: report::error_rows(&motions),
        }
    }
}
