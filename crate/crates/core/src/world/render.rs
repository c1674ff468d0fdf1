use super::{FloorPlan, Image, Observation, MAX_DEPTH};
use crate::geometry::{Pose2, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderConfig {
    pub width: usize,
    pub height: usize,
    pub hfov_deg: f64,
    pub camera_height: f64,
    pub wall_height: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            width: 32,
            height: 16,
            hfov_deg: 79.0,
            camera_height: 0.88,
            wall_height: 2.5,
        }
    }
}

impl RenderConfig {
    pub fn with_size(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            ..Self::default()
        }
    }

    /// Horizontal angle of column `c` relative to the heading; positive to the left.
    pub fn column_angle(&self, c: usize) -> f64 {
        let hfov = self.hfov_deg.to_radians();
        hfov / 2.0 - (c as f64 + 0.5) * hfov / self.width as f64
    }

    fn vfov(&self) -> f64 {
        let half = (self.hfov_deg.to_radians() / 2.0).tan() * self.height as f64 / self.width as f64;
        2.0 * half.atan()
    }

    /// Elevation of row `r`; positive upwards, row 0 at the top.
    pub fn row_angle(&self, r: usize) -> f64 {
        let vfov = self.vfov();
        vfov / 2.0 - (r as f64 + 0.5) * vfov / self.height as f64
    }
}

#[derive(Debug, Clone, Copy)]
struct Hit {
    dist: f64,
    texture: u16,
    /// Position along the wall face in metres.
    u: f64,
}

/// Grid traversal until the first wall cell; `dir` must be a unit vector.
fn cast_ray(plan: &FloorPlan, origin: Vec2, dir: Vec2) -> Hit {
    let cs = plan.cell_size();
    let (mut i, mut j) = plan.cell_of(origin);
    let step_i: i64 = if dir.x >= 0.0 { 1 } else { -1 };
    let step_j: i64 = if dir.y >= 0.0 { 1 } else { -1 };
    let delta_x = if dir.x != 0.0 { cs / dir.x.abs() } else { f64::INFINITY };
    let delta_y = if dir.y != 0.0 { cs / dir.y.abs() } else { f64::INFINITY };
    let next_x = if step_i > 0 { (i + 1) as f64 * cs } else { i as f64 * cs };
    let next_y = if step_j > 0 { (j + 1) as f64 * cs } else { j as f64 * cs };
    let mut t_x = if dir.x != 0.0 { (next_x - origin.x) / dir.x } else { f64::INFINITY };
    let mut t_y = if dir.y != 0.0 { (next_y - origin.y) / dir.y } else { f64::INFINITY };
    let limit = MAX_DEPTH * 4.0;
    loop {
        let (t, vertical_face) = if t_x < t_y {
            i += step_i;
            let t = t_x;
            t_x += delta_x;
            (t, true)
        } else {
            j += step_j;
            let t = t_y;
            t_y += delta_y;
            (t, false)
        };
        if t > limit {
            return Hit {
                dist: t,
                texture: 0,
                u: 0.0,
            };
        }
        if plan.is_wall(i, j) {
            let p = origin + dir * t;
            let u = if vertical_face { p.y } else { p.x };
            let texture = if i >= 0 && j >= 0 && (i as usize) < plan.width() && (j as usize) < plan.height() {
                plan.texture(i as usize, j as usize)
            } else {
                0
            };
            return Hit {
                dist: t.max(0.0),
                texture,
                u,
            };
        }
    }
}

const PALETTE: [[f64; 3]; 8] = [
    [0.85, 0.35, 0.30],
    [0.30, 0.65, 0.40],
    [0.30, 0.40, 0.85],
    [0.90, 0.80, 0.35],
    [0.65, 0.35, 0.75],
    [0.35, 0.75, 0.80],
    [0.85, 0.60, 0.35],
    [0.70, 0.70, 0.70],
];

fn shade(d: f64) -> f64 {
    1.0 / (1.0 + 0.12 * d)
}

fn wall_color(texture: u16, u: f64, z: f64, out: &mut [f64]) {
    let base = PALETTE[texture as usize % PALETTE.len()];
    let stripe = if (u / 0.2).floor() as i64 % 2 == 0 { 1.0 } else { 0.72 };
    let band = if z < 0.15 { 0.45 } else if (z / 0.6).floor() as i64 % 2 == 0 { 1.0 } else { 0.88 };
    for c in 0..3 {
        out[c] = base[c] * stripe * band;
    }
}

fn floor_color(p: Vec2, out: &mut [f64]) {
    let tile = ((p.x / 0.5).floor() as i64 + (p.y / 0.5).floor() as i64).rem_euclid(2);
    let v = if tile == 0 { 0.55 } else { 0.35 };
    out.copy_from_slice(&[v, v * 0.9, v * 0.8]);
}

/// Renders RGB in `[0,1]` and depth in metres `[0, 10]` from the same rays.
///
/// Each column casts one ray; rows see the wall where its projected height
/// covers them and the floor or ceiling otherwise. Depth is the horizontal
/// distance along the column ray.
pub fn render(plan: &FloorPlan, pose: Pose2, config: &RenderConfig) -> Observation {
    debug_assert!(plan.is_free_point(pose.position), "render pose inside a wall");
    let (w, h) = (config.width, config.height);
    let mut rgb = Image::zeros(w, h, 3);
    let mut depth = Image::zeros(w, h, 1);
    let row_tans: Vec<f64> = (0..h).map(|r| config.row_angle(r).tan()).collect();
    let mut px = [0.0; 3];
    for c in 0..w {
        let dir = Vec2::new(1.0, 0.0).rotated(pose.heading + config.column_angle(c));
        let hit = cast_ray(plan, pose.position, dir);
        for (r, &tan) in row_tans.iter().enumerate() {
            let plane_dist = if tan < 0.0 {
                config.camera_height / -tan
            } else if tan > 0.0 {
                (config.wall_height - config.camera_height) / tan
            } else {
                f64::INFINITY
            };
            let d = if plane_dist < hit.dist {
                if tan < 0.0 {
                    floor_color(pose.position + dir * plane_dist, &mut px);
                } else {
                    px = [0.92, 0.92, 0.88];
                }
                plane_dist
            } else {
                let z = config.camera_height + hit.dist * tan;
                wall_color(hit.texture, hit.u, z, &mut px);
                hit.dist
            };
            let s = shade(d);
            for (k, v) in px.iter().enumerate() {
                rgb.set(c, r, k, (v * s).clamp(0.0, 1.0));
            }
            depth.set(c, r, 0, d.clamp(0.0, MAX_DEPTH));
        }
    }
    Observation {
        rgb: Some(rgb),
        depth: Some(depth),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{generate_floorplan, FloorParams};

    #[test]
    fn facing_wall_at_two_metres() {
        // 10 free cells of 0.4 m: the east wall face sits at x = 4.4.
        let plan = FloorPlan::empty_room(10, 10, 0.4).unwrap();
        let pose = Pose2::new(2.4, 2.2, 0.0);
        let cfg = RenderConfig::default();
        let obs = render(&plan, pose, &cfg);
        let depth = obs.depth.unwrap();
        let tol = 0.5 * 0.4 * 2f64.sqrt();
        for c in [cfg.width / 2 - 1, cfg.width / 2] {
            for r in [cfg.height / 2 - 1, cfg.height / 2] {
                let d = depth.get(c, r, 0);
                assert!((d - 2.0).abs() <= tol, "column {c} row {r}: {d}");
                // Ray-length geometry of the two central columns.
                let expected = 2.0 / cfg.column_angle(c).cos();
                assert!((d - expected).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ranges_hold_on_generated_scenes() {
        let plan = generate_floorplan(11, FloorParams::default()).unwrap();
        let cfg = RenderConfig::default();
        for (k, &(i, j)) in plan.free_cells().iter().enumerate().take(40) {
            let c = plan.cell_center(i, j);
            let obs = render(&plan, Pose2::new(c.x, c.y, k as f64 * 0.7), &cfg);
            let d = obs.depth.as_ref().unwrap();
            assert!(d.data.iter().all(|&v| (0.0..=10.0).contains(&v)));
            assert!(obs.in_range());
        }
    }

    #[test]
    fn depth_is_clipped_in_long_halls() {
        let plan = FloorPlan::empty_room(40, 3, 0.4).unwrap();
        let obs = render(&plan, Pose2::new(0.6, 0.8, 0.0), &RenderConfig::default());
        let d = obs.depth.unwrap();
        assert!(d.data.iter().any(|&v| v == MAX_DEPTH));
        assert!(d.data.iter().all(|&v| v <= MAX_DEPTH));
    }

    #[test]
    fn forward_step_shrinks_center_depth() {
        let plan = FloorPlan::empty_room(10, 10, 0.4).unwrap();
        let cfg = RenderConfig::default();
        let c = cfg.width / 2;
        let r = cfg.height / 2;
        let before = render(&plan, Pose2::new(2.0, 2.2, 0.0), &cfg).depth.unwrap().get(c, r, 0);
        let after = render(&plan, Pose2::new(2.25, 2.2, 0.0), &cfg).depth.unwrap().get(c, r, 0);
        let moved = (before - after) * cfg.column_angle(c).cos();
        assert!((moved - 0.25).abs() < 1e-9);
    }
}
