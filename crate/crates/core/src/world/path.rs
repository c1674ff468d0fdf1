use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{step, ActionId, FloorPlan, NoiseModel, AGENT_RADIUS, FORWARD_STEP};
use crate::error::{Error, Result};
use crate::geometry::{GoalVector, Pose2, Vec2};
use crate::rng;

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Clearance kept from walls when straightening paths for the agent.
const PATH_CLEARANCE: f64 = AGENT_RADIUS + 0.04;
const LOS_SAMPLE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Open {
    f: f64,
    g: f64,
    cell: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// 8-connected A* between cells; diagonal moves may not cut wall corners.
/// Returns the cell path (inclusive) and its length in cell units.
pub fn astar(plan: &FloorPlan, from: (i64, i64), to: (i64, i64)) -> Option<(Vec<(i64, i64)>, f64)> {
    if plan.is_wall(from.0, from.1) || plan.is_wall(to.0, to.1) {
        return None;
    }
    let w = plan.width();
    let idx = |c: (i64, i64)| c.1 as usize * w + c.0 as usize;
    let cell = |k: usize| ((k % w) as i64, (k / w) as i64);
    let octile = |c: (i64, i64)| {
        let dx = (c.0 - to.0).abs() as f64;
        let dy = (c.1 - to.1).abs() as f64;
        dx.max(dy) + (SQRT2 - 1.0) * dx.min(dy)
    };
    let n = w * plan.height();
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();
    let start = idx(from);
    g[start] = 0.0;
    heap.push(Open {
        f: octile(from),
        g: 0.0,
        cell: start,
    });
    let goal = idx(to);
    while let Some(Open { g: gc, cell: k, .. }) = heap.pop() {
        if closed[k] {
            continue;
        }
        closed[k] = true;
        if k == goal {
            let mut path = vec![cell(k)];
            let mut cur = k;
            while parent[cur] != usize::MAX {
                cur = parent[cur];
                path.push(cell(cur));
            }
            path.reverse();
            return Some((path, gc));
        }
        let (i, j) = cell(k);
        for di in -1..=1i64 {
            for dj in -1..=1i64 {
                if di == 0 && dj == 0 {
                    continue;
                }
                let (ni, nj) = (i + di, j + dj);
                if plan.is_wall(ni, nj) {
                    continue;
                }
                let diagonal = di != 0 && dj != 0;
                if diagonal && (plan.is_wall(i + di, j) || plan.is_wall(i, j + dj)) {
                    continue;
                }
                let nk = idx((ni, nj));
                let ng = gc + if diagonal { SQRT2 } else { 1.0 };
                if ng < g[nk] {
                    g[nk] = ng;
                    parent[nk] = k;
                    heap.push(Open {
                        f: ng + octile((ni, nj)),
                        g: ng,
                        cell: nk,
                    });
                }
            }
        }
    }
    None
}

/// True when every point of segment `a -> b` keeps at least `clearance`
/// metres from walls (0 = point visibility through free cells).
pub fn line_of_sight(plan: &FloorPlan, a: Vec2, b: Vec2, clearance: f64) -> bool {
    let len = (b - a).norm();
    let n = (len / LOS_SAMPLE).ceil().max(1.0) as usize;
    (0..=n).all(|k| {
        let p = a + (b - a) * (k as f64 / n as f64);
        if clearance > 0.0 {
            plan.is_free_point(p) && plan.wall_distance(p, clearance) >= clearance
        } else {
            plan.is_free_point(p)
        }
    })
}

/// Greedy string pulling over a point sequence.
fn pull_string(plan: &FloorPlan, pts: &[Vec2], clearance: f64) -> Vec<Vec2> {
    let mut out = vec![pts[0]];
    let mut i = 0;
    while i + 1 < pts.len() {
        let mut j = pts.len() - 1;
        while j > i + 1 && !line_of_sight(plan, pts[i], pts[j], clearance) {
            j -= 1;
        }
        out.push(pts[j]);
        i = j;
    }
    out
}

fn grid_points(plan: &FloorPlan, a: Vec2, b: Vec2) -> Result<Vec<Vec2>> {
    for p in [a, b] {
        if !plan.is_free_point(p) {
            return Err(Error::InvalidArgument(format!(
                "point ({:.3}, {:.3}) is not in free space",
                p.x, p.y
            )));
        }
    }
    let Some((cells, _)) = astar(plan, plan.cell_of(a), plan.cell_of(b)) else {
        return Ok(Vec::new());
    };
    let mut pts = vec![a];
    if cells.len() > 2 {
        pts.extend(cells[1..cells.len() - 1].iter().map(|&(i, j)| plan.cell_center(i, j)));
    }
    pts.push(b);
    Ok(pts)
}

/// Shortest traversable distance in metres: the A* cell path from `a` to `b`,
/// straightened by point visibility. Symmetric by construction.
pub fn geodesic_distance(plan: &FloorPlan, a: Vec2, b: Vec2) -> Result<f64> {
    let (a, b) = if (a.x, a.y) <= (b.x, b.y) { (a, b) } else { (b, a) };
    let pts = grid_points(plan, a, b)?;
    if pts.is_empty() {
        return Ok(f64::INFINITY);
    }
    if line_of_sight(plan, a, b, 0.0) {
        return Ok((b - a).norm());
    }
    let pulled = pull_string(plan, &pts, 0.0);
    Ok(pulled.windows(2).map(|w| (w[1] - w[0]).norm()).sum())
}

/// Waypoints from `from` to `to` straightened with agent clearance.
pub fn waypoints(plan: &FloorPlan, from: Vec2, to: Vec2) -> Result<Vec<Vec2>> {
    let pts = grid_points(plan, from, to)?;
    if pts.is_empty() {
        return Ok(pts);
    }
    Ok(pull_string(plan, &pts, PATH_CLEARANCE))
}

/// The point to steer toward from `position` when heading for `goal`. Falls
/// back to the goal itself when `position` lies outside free space (a drifted
/// dead-reckoning estimate can).
pub fn next_waypoint(plan: &FloorPlan, position: Vec2, goal: Vec2) -> Vec2 {
    match waypoints(plan, position, goal) {
        Ok(wps) if wps.len() >= 2 => wps[1],
        _ => goal,
    }
}

/// FWD when the target's bearing is within the threshold, else the turn
/// that reduces it. Bearings are positive to the right.
pub fn steer_toward(target: GoalVector, turn_threshold: f64) -> ActionId {
    let bearing = target.bearing();
    if bearing > turn_threshold {
        ActionId::Right
    } else if bearing < -turn_threshold {
        ActionId::Left
    } else {
        ActionId::Forward
    }
}

const MAX_EXPANSIONS: usize = 400_000;

/// Geodesic distance field from a goal over cell centres.
fn distance_field(plan: &FloorPlan, goal: Vec2) -> Vec<f64> {
    let w = plan.width();
    let n = w * plan.height();
    let mut dist = vec![f64::INFINITY; n];
    let (gi, gj) = plan.cell_of(goal);
    if plan.is_wall(gi, gj) {
        return dist;
    }
    let start = gj as usize * w + gi as usize;
    dist[start] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Open {
        f: 0.0,
        g: 0.0,
        cell: start,
    });
    while let Some(Open { g, cell: k, .. }) = heap.pop() {
        if g > dist[k] {
            continue;
        }
        let (i, j) = ((k % w) as i64, (k / w) as i64);
        for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)] {
            let (ni, nj) = (i + di, j + dj);
            if plan.is_wall(ni, nj) {
                continue;
            }
            let diagonal = di != 0 && dj != 0;
            if diagonal && (plan.is_wall(i + di, j) || plan.is_wall(i, j + dj)) {
                continue;
            }
            let nk = nj as usize * w + ni as usize;
            let ng = g + if diagonal { SQRT2 } else { 1.0 } * plan.cell_size();
            if ng < dist[nk] {
                dist[nk] = ng;
                heap.push(Open {
                    f: ng,
                    g: ng,
                    cell: nk,
                });
            }
        }
    }
    dist
}

/// Searches the noiseless action lattice (0.25 m steps, 30 degree turns) for
/// the fewest collision-free actions that reach a goal.
pub struct ActionPlanner<'a> {
    plan: &'a FloorPlan,
    goal: Vec2,
    success_radius: f64,
    field: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct LatticeNode {
    pose: Pose2,
    cost: u32,
    parent: u32,
    action: ActionId,
}

impl<'a> ActionPlanner<'a> {
    pub fn new(plan: &'a FloorPlan, goal: Vec2, success_radius: f64) -> Self {
        Self {
            plan,
            goal,
            success_radius,
            field: distance_field(plan, goal),
        }
    }

    fn heuristic(&self, p: Vec2) -> f64 {
        let (i, j) = self.plan.cell_of(p);
        if self.plan.is_wall(i, j) {
            return f64::INFINITY;
        }
        let d = self.field[j as usize * self.plan.width() + i as usize];
        let slack = self.plan.cell_size() * 0.75 + self.success_radius;
        ((d - slack).max(0.0) / FORWARD_STEP).max(0.0)
    }

    fn key(p: Pose2) -> (i64, i64, i64) {
        let h = (p.heading.to_degrees() * 10.0).round() as i64;
        (
            (p.position.x * 1000.0).round() as i64,
            (p.position.y * 1000.0).round() as i64,
            h.rem_euclid(3600),
        )
    }

    /// Actions (without STOP) from `pose`. After reaching the success
    /// radius, forward steps continue while they still shorten the distance.
    pub fn plan_from(&self, pose: Pose2) -> Result<Vec<ActionId>> {
        if !self.plan.is_free_point(pose.position) {
            return Err(Error::InvalidArgument("planning pose is not in free space".into()));
        }
        let noiseless = NoiseModel::noiseless();
        let mut rng = rng::stream(0, 0);
        let mut nodes = vec![LatticeNode {
            pose,
            cost: 0,
            parent: u32::MAX,
            action: ActionId::Stop,
        }];
        let mut seen = std::collections::HashMap::new();
        seen.insert(Self::key(pose), 0u32);
        let mut heap = BinaryHeap::new();
        heap.push(Open {
            f: self.heuristic(pose.position),
            g: 0.0,
            cell: 0,
        });
        let mut found = None;
        while let Some(Open { cell: k, .. }) = heap.pop() {
            let node = nodes[k];
            if (node.pose.position - self.goal).norm() < self.success_radius {
                found = Some(k);
                break;
            }
            if nodes.len() > MAX_EXPANSIONS {
                break;
            }
            for action in ActionId::MOVES {
                if (action == ActionId::Left && node.action == ActionId::Right)
                    || (action == ActionId::Right && node.action == ActionId::Left)
                {
                    continue;
                }
                let (next, collided) = step(self.plan, node.pose, action, &noiseless, &mut rng);
                if collided {
                    continue;
                }
                let key = Self::key(next);
                if seen.contains_key(&key) {
                    continue;
                }
                let h = self.heuristic(next.position);
                if !h.is_finite() {
                    continue;
                }
                let id = nodes.len() as u32;
                seen.insert(key, id);
                nodes.push(LatticeNode {
                    pose: next,
                    cost: node.cost + 1,
                    parent: k as u32,
                    action,
                });
                let g = (node.cost + 1) as f64;
                heap.push(Open {
                    f: g + h,
                    g,
                    cell: id as usize,
                });
            }
        }
        let Some(mut k) = found else {
            return Err(Error::Generation("goal not reachable on the action lattice".into()));
        };
        let end = nodes[k].pose;
        let mut actions = Vec::new();
        while nodes[k].parent != u32::MAX {
            actions.push(nodes[k].action);
            k = nodes[k].parent as usize;
        }
        actions.reverse();

        let mut state = end;
        loop {
            let d = (state.position - self.goal).norm();
            let (next, collided) = step(self.plan, state, ActionId::Forward, &noiseless, &mut rng);
            if collided || (next.position - self.goal).norm() >= d {
                break;
            }
            actions.push(ActionId::Forward);
            state = next;
        }
        Ok(actions)
    }
}

/// Fewest-action collision-free sequence (without the final STOP) that
/// brings the agent from `pose` to within `success_radius` of `goal` when
/// executed noiselessly.
pub fn shortest_path_actions(
    plan: &FloorPlan,
    pose: Pose2,
    goal: Vec2,
    success_radius: f64,
) -> Result<Vec<ActionId>> {
    ActionPlanner::new(plan, goal, success_radius).plan_from(pose)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{generate_floorplan, FloorParams, SUCCESS_RADIUS, TURN_ANGLE_DEG};
    use std::collections::VecDeque;

    /// Independent Dijkstra over the same 8-connected move set, written with
    /// a plain scan instead of a heap.
    fn dijkstra_oracle(plan: &FloorPlan, from: (i64, i64), to: (i64, i64)) -> f64 {
        let w = plan.width() as i64;
        let n = (w * plan.height() as i64) as usize;
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        dist[(from.1 * w + from.0) as usize] = 0.0;
        loop {
            let mut best = None;
            for k in 0..n {
                if !done[k] && dist[k].is_finite() && best.map_or(true, |b: usize| dist[k] < dist[b]) {
                    best = Some(k);
                }
            }
            let Some(k) = best else { break };
            done[k] = true;
            let (i, j) = (k as i64 % w, k as i64 / w);
            for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)] {
                let (ni, nj) = (i + di, j + dj);
                if plan.is_wall(ni, nj) {
                    continue;
                }
                if di != 0 && dj != 0 && (plan.is_wall(i + di, j) || plan.is_wall(i, j + dj)) {
                    continue;
                }
                let c = if di != 0 && dj != 0 { SQRT2 } else { 1.0 };
                let nk = (nj * w + ni) as usize;
                dist[nk] = dist[nk].min(dist[k] + c);
            }
        }
        dist[(to.1 * w + to.0) as usize]
    }

    fn u_shape() -> FloorPlan {
        #[rustfmt::skip]
        let cells = vec![
            1,1,1,1,1,1,1,
            1,0,0,0,0,0,1,
            1,0,1,1,1,0,1,
            1,0,1,0,1,0,1,
            1,0,1,0,1,0,1,
            1,0,0,0,0,0,1,
            1,1,1,1,1,1,1,
        ];
        FloorPlan::from_cells(7, 7, 0.4, cells, vec![0; 49], 0).unwrap()
    }

    #[test]
    fn astar_matches_dijkstra_on_u_shape() {
        let plan = u_shape();
        for from in [(1, 1), (5, 1), (3, 3)] {
            for to in [(3, 4), (5, 5), (1, 5)] {
                let (_, cost) = astar(&plan, from, to).unwrap();
                assert!((cost - dijkstra_oracle(&plan, from, to)).abs() < 1e-12);
            }
        }
        for seed in 0..3 {
            let plan = generate_floorplan(seed, FloorParams::default()).unwrap();
            let free = plan.free_cells();
            for k in 0..10 {
                let a = free[(k * 37) % free.len()];
                let b = free[(k * 91 + 5) % free.len()];
                let (_, cost) = astar(&plan, a, b).unwrap();
                assert!((cost - dijkstra_oracle(&plan, a, b)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn geodesic_basics() {
        let plan = FloorPlan::empty_room(20, 3, 0.4).unwrap();
        let a = Vec2::new(0.6, 0.8);
        assert_eq!(geodesic_distance(&plan, a, a).unwrap(), 0.0);
        let b = Vec2::new(7.0, 0.8);
        let d = geodesic_distance(&plan, a, b).unwrap();
        assert!((d - 6.4).abs() <= 0.4);
        assert!(geodesic_distance(&plan, Vec2::new(0.1, 0.1), b).is_err());
    }

    #[test]
    fn geodesic_around_u_obstacle_exceeds_euclid() {
        let plan = u_shape();
        let inside = plan.cell_center(3, 3);
        let outside = plan.cell_center(3, 1);
        let d = geodesic_distance(&plan, inside, outside).unwrap();
        let (_, cells) = astar(&plan, (3, 3), (3, 1)).unwrap();
        assert!(d > (outside - inside).norm() + 0.5);
        assert!(d <= cells * plan.cell_size() + 1e-9);
        // BFS hop count gives a lower bound in cells.
        let mut q = VecDeque::from([((3i64, 3i64), 0usize)]);
        let mut seen = vec![false; 49];
        seen[3 * 7 + 3] = true;
        let mut hops = 0;
        while let Some(((i, j), h)) = q.pop_front() {
            if (i, j) == (3, 1) {
                hops = h;
                break;
            }
            for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                let (ni, nj) = (i + di, j + dj);
                if !plan.is_wall(ni, nj) && !seen[(nj * 7 + ni) as usize] {
                    seen[(nj * 7 + ni) as usize] = true;
                    q.push_back(((ni, nj), h + 1));
                }
            }
        }
        assert!(d >= hops as f64 * 0.4 / SQRT2 - 1e-9);
    }

    #[test]
    fn goal_straight_ahead_is_two_forward_steps() {
        let plan = FloorPlan::empty_room(10, 10, 0.4).unwrap();
        let pose = Pose2::new(1.0, 2.0, 0.0);
        let acts = shortest_path_actions(&plan, pose, Vec2::new(1.5, 2.0), SUCCESS_RADIUS).unwrap();
        assert_eq!(acts, vec![ActionId::Forward, ActionId::Forward]);
    }

    #[test]
    fn goal_behind_starts_with_half_turn() {
        let plan = FloorPlan::empty_room(10, 10, 0.4).unwrap();
        let pose = Pose2::new(3.0, 2.0, 0.0);
        let acts = shortest_path_actions(&plan, pose, Vec2::new(1.0, 2.0), SUCCESS_RADIUS).unwrap();
        let turns: Vec<_> = acts.iter().take_while(|a| a.is_turn()).collect();
        assert!(turns.iter().all(|a| **a == *turns[0]));
        assert!(turns.len() as f64 * TURN_ANGLE_DEG >= 150.0);
    }

    #[test]
    fn executed_plans_end_inside_success_radius() {
        for seed in 0..4 {
            let plan = generate_floorplan(seed, FloorParams::default()).unwrap();
            let free = plan.free_cells();
            for k in 0..8 {
                let s = plan.cell_center(free[(k * 13) % free.len()].0, free[(k * 13) % free.len()].1);
                let g = plan.cell_center(free[(k * 29 + 7) % free.len()].0, free[(k * 29 + 7) % free.len()].1);
                let start = Pose2::new(s.x, s.y, k as f64);
                let acts = shortest_path_actions(&plan, start, g, SUCCESS_RADIUS)
                    .unwrap_or_else(|e| panic!("seed {seed} k {k} {start:?} -> {g:?}: {e}"));
                let mut pose = start;
                let mut r = rng::stream(0, 0);
                for a in acts {
                    pose = step(&plan, pose, a, &NoiseModel::noiseless(), &mut r).0;
                }
                assert!((pose.position - g).norm() < SUCCESS_RADIUS, "seed {seed} k {k}");
            }
        }
    }
}
