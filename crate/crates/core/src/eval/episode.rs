use std::sync::atomic::{AtomicUsize, Ordering};

use super::{goto_policy, EpisodeResult, GotoConfig, MetricsReport};
use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, relative_transform, update_goal, GoalVector, Pose2, Transform2};
use crate::model::{PairRef, Vot};
use crate::rng;
use crate::training::NormStats;
use crate::world::{
    apply_observation_noise, generate_floorplan, geodesic_distance, render, sample_episode, step,
    ActionId, ActionPlanner, EpisodeParams, EpisodeSpec, FloorParams, FloorPlan, ModalitySet,
    NoiseModel, Observation, RenderConfig, FORWARD_STEP, TURN_ANGLE_DEG,
};

/// Source of per-step motion estimates.
#[derive(Debug, Clone, Copy)]
pub enum Estimator<'a> {
    /// Ground-truth transforms.
    Oracle,
    /// The commanded action's nominal motion.
    Nominal,
    Model {
        model: &'a Vot,
        norm: &'a NormStats,
        available: ModalitySet,
    },
}

impl Estimator<'_> {
    pub fn estimate(
        &self,
        o_t: &Observation,
        o_t1: &Observation,
        action: ActionId,
        truth: Transform2,
    ) -> Result<Transform2> {
        match self {
            Estimator::Oracle => Ok(truth),
            Estimator::Nominal => Ok(nominal_motion(action)),
            Estimator::Model {
                model,
                norm,
                available,
            } => {
                let (a, b) = if available.is_empty() {
                    (o_t.clone(), o_t1.clone())
                } else {
                    (norm.normalize(o_t, *available)?, norm.normalize(o_t1, *available)?)
                };
                let pair = PairRef {
                    o_t: &a,
                    o_t1: &b,
                    action,
                };
                Ok(model.predict(&[pair], *available)?[0])
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Estimator::Oracle => "oracle".into(),
            Estimator::Nominal => "nominal".into(),
            Estimator::Model { available, .. } => available.name().into(),
        }
    }
}

/// Noise-free, collision-free motion of an action as a frame update.
pub fn nominal_motion(action: ActionId) -> Transform2 {
    match action {
        ActionId::Forward => Transform2::new(0.0, 0.0, -FORWARD_STEP),
        ActionId::Left => Transform2::new(-TURN_ANGLE_DEG.to_radians(), 0.0, 0.0),
        ActionId::Right => Transform2::new(TURN_ANGLE_DEG.to_radians(), 0.0, 0.0),
        ActionId::Stop => Transform2::IDENTITY,
    }
}

/// How actions are chosen from the agent's belief.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Controller {
    /// Reactive [`goto_policy`] on the estimated goal vector.
    Goto(GotoConfig),
    /// Follows lattice shortest paths from the dead-reckoned pose on the
    /// known floorplan, falling back to [`goto_policy`] when planning fails.
    Planner(GotoConfig),
}

impl Controller {
    fn goto(&self) -> &GotoConfig {
        match self {
            Controller::Goto(g) | Controller::Planner(g) => g,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavConfig {
    pub controller: Controller,
    pub noise: NoiseModel,
    pub render: RenderConfig,
    /// Worker threads for suites; 0 uses every available core.
    pub threads: usize,
}

impl Default for NavConfig {
    fn default() -> Self {
        Self {
            controller: Controller::Planner(GotoConfig::default()),
            noise: NoiseModel::default(),
            render: RenderConfig::default(),
            threads: 0,
        }
    }
}

const REPLAN_POS: f64 = 0.05;
const REPLAN_HEADING_DEG: f64 = 5.0;

fn observe(plan: &FloorPlan, pose: Pose2, nav: &NavConfig, rng: &mut rng::Rng) -> Observation {
    apply_observation_noise(&render(plan, pose, &nav.render), &nav.noise, rng)
}

/// Runs one episode until STOP or the step limit.
pub fn run_episode(
    plan: &FloorPlan,
    spec: &EpisodeSpec,
    estimator: &Estimator<'_>,
    nav: &NavConfig,
    seed: u64,
) -> Result<EpisodeResult> {
    if !(spec.geodesic > 0.0) || !spec.geodesic.is_finite() {
        return Err(Error::InvalidArgument("episode needs a positive finite geodesic distance".into()));
    }
    let mut rng = rng::stream(seed, 0x4e41_5600);
    let goto = *nav.controller.goto();
    let planner = match nav.controller {
        Controller::Planner(_) => Some(ActionPlanner::new(plan, spec.goal, spec.success_radius)),
        Controller::Goto(_) => None,
    };
    let noiseless = NoiseModel::noiseless();
    let mut pose = spec.start;
    let mut believed = spec.start;
    let mut expected = believed;
    let mut queue: Vec<ActionId> = Vec::new();
    let mut g_hat = GoalVector(spec.start.to_local(spec.goal));
    let mut obs = observe(plan, pose, nav, &mut rng);
    let mut result = EpisodeResult {
        success: false,
        path_length: 0.0,
        shortest: spec.geodesic,
        d_init: spec.geodesic,
        d_goal: 0.0,
        steps: 0,
        collisions: 0,
        trajectory: vec![pose],
        estimated: vec![believed],
        goal_trace: Vec::new(),
        actions: Vec::new(),
        motions: Vec::new(),
    };
    let mut stopped = false;
    while result.steps < spec.max_steps {
        result.goal_trace.push(g_hat);
        let action = if g_hat.distance() < goto.stop_radius {
            ActionId::Stop
        } else if let Some(planner) = &planner {
            let drift = (believed.position - expected.position).norm() > REPLAN_POS
                || normalize_angle(believed.heading - expected.heading).abs()
                    > REPLAN_HEADING_DEG.to_radians();
            if queue.is_empty() || drift {
                queue = planner.plan_from(believed).unwrap_or_default();
                queue.reverse();
                expected = believed;
            }
            match queue.pop() {
                Some(a) => a,
                None => goto_policy(g_hat, &goto),
            }
        } else {
            goto_policy(g_hat, &goto)
        };
        result.actions.push(action);
        result.steps += 1;
        if action == ActionId::Stop {
            stopped = true;
            break;
        }
        let (next, collided) = step(plan, pose, action, &nav.noise, &mut rng);
        let next_obs = observe(plan, next, nav, &mut rng);
        let truth = relative_transform(pose, next);
        let est = estimator.estimate(&obs, &next_obs, action, truth)?;
        if !est.is_finite() {
            return Err(Error::NonFinite("motion estimate".into()));
        }
        g_hat = update_goal(g_hat, est);
        believed = believed.advance(est);
        expected = step(plan, expected, action, &noiseless, &mut rng).0;
        result.path_length += (next.position - pose.position).norm();
        result.collisions += collided as usize;
        result.motions.push((action, truth, est));
        result.trajectory.push(next);
        result.estimated.push(believed);
        pose = next;
        obs = next_obs;
    }
    if !stopped {
        result.goal_trace.push(g_hat);
    }
    result.d_goal = geodesic_distance(plan, pose.position, spec.goal)?;
    result.success = stopped && result.d_goal < spec.success_radius;
    Ok(result)
}

/// A fixed, seeded set of episodes over several floorplans.
#[derive(Debug, Clone)]
pub struct Suite {
    pub plans: Vec<FloorPlan>,
    /// `(plan index, spec, episode seed)`.
    pub episodes: Vec<(usize, EpisodeSpec, u64)>,
}

const SUITE_RETRIES: u64 = 16;

/// `n` episodes assigned round-robin to the floorplans of `scene_seeds`.
pub fn build_suite(
    floor: FloorParams,
    scene_seeds: &[u64],
    n: usize,
    seed: u64,
    params: EpisodeParams,
) -> Result<Suite> {
    if scene_seeds.is_empty() {
        return Err(Error::InvalidArgument("no scene seeds".into()));
    }
    let plans = scene_seeds
        .iter()
        .map(|&s| generate_floorplan(s, floor))
        .collect::<Result<Vec<_>>>()?;
    let mut episodes = Vec::with_capacity(n);
    for i in 0..n {
        let p = i % plans.len();
        let mut spec = None;
        for attempt in 0..SUITE_RETRIES {
            match sample_episode(&plans[p], rng::derive(seed, (i as u64) << 8 | attempt), params) {
                Ok(s) => {
                    spec = Some(s);
                    break;
                }
                Err(Error::Generation(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        let spec = spec.ok_or_else(|| Error::Generation(format!("no episode {i} in scene {}", scene_seeds[p])))?;
        episodes.push((p, spec, rng::derive(seed ^ 0x5eed, i as u64)));
    }
    Ok(Suite { plans, episodes })
}

/// Runs every episode of a suite. Episodes are spread over worker threads;
/// results come back in episode order, so output does not depend on the
/// thread count.
pub fn run_suite(suite: &Suite, estimator: &Estimator<'_>, nav: &NavConfig) -> Result<Vec<EpisodeResult>> {
    let n = suite.episodes.len();
    let threads = match nav.threads {
        0 => std::thread::available_parallelism().map_or(1, |t| t.get()),
        t => t,
    }
    .clamp(1, n.max(1));
    let run = |i: usize| {
        let (p, spec, seed) = &suite.episodes[i];
        run_episode(&suite.plans[*p], spec, estimator, nav, *seed)
    };
    if threads == 1 {
        return (0..n).map(run).collect();
    }
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<EpisodeResult>>> = (0..n).map(|_| None).collect();
    std::thread::scope(|scope| {
        let workers: Vec<_> = (0..threads)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= n {
                            break done;
                        }
                        done.push((i, run(i)));
                    }
                })
            })
            .collect();
        for w in workers {
            for (i, r) in w.join().expect("episode worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|r| r.expect("every episode ran")).collect()
}

/// Evaluates one model under each modality subset on identical episodes.
pub fn drop_eval(
    suite: &Suite,
    model: &Vot,
    norm: &NormStats,
    subsets: &[ModalitySet],
    nav: &NavConfig,
) -> Result<Vec<MetricsReport>> {
    subsets
        .iter()
        .map(|&available| {
            let est = Estimator::Model {
                model,
                norm,
                available,
            };
            let results = run_suite(suite, &est, nav)?;
            Ok(MetricsReport::from_results(available.name(), &results))
        })
        .collect()
}
