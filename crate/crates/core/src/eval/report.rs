use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Estimator, EpisodeResult, MetricsReport};
use crate::error::{Error, Result};
use crate::geometry::{Pose2, Transform2, Vec2};
use crate::io::write_ppm;
use crate::training::Dataset;
use crate::world::{waypoints, ActionId, FloorPlan, WALL};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorSummary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub p90: f64,
}

impl ErrorSummary {
    pub fn from_values(mut v: Vec<f64>) -> Self {
        if v.is_empty() {
            return Self::default();
        }
        v.sort_by(f64::total_cmp);
        let q = |p: f64| v[((v.len() - 1) as f64 * p).round() as usize];
        Self {
            count: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            median: q(0.5),
            p90: q(0.9),
        }
    }
}

/// Absolute error of one motion channel for one action.
#[derive(Debug, Clone, PartialEq)]
pub struct VoErrorRow {
    pub action: ActionId,
    pub channel: &'static str,
    pub summary: ErrorSummary,
}

pub const CHANNELS: [&str; 3] = ["xi_x", "xi_z", "beta"];

/// One row per movement action and channel, in a fixed order.
pub(crate) fn error_rows(motions: &[(ActionId, Transform2, Transform2)]) -> Vec<VoErrorRow> {
    let mut rows = Vec::with_capacity(9);
    for action in ActionId::MOVES {
        for (ci, channel) in CHANNELS.iter().enumerate() {
            let v = motions
                .iter()
                .filter(|m| m.0 == action)
                .map(|(_, t, e)| {
                    let (t, e) = (t.to_array(), e.to_array());
                    // to_array is (beta, xi_x, xi_z)
                    let k = [1, 2, 0][ci];
                    (t[k] - e[k]).abs()
                })
                .collect();
            rows.push(VoErrorRow {
                action,
                channel,
                summary: ErrorSummary::from_values(v),
            });
        }
    }
    rows
}

/// Per-action absolute errors of an estimator over a dataset.
pub fn vo_error_report(data: &Dataset, estimator: &Estimator<'_>) -> Result<Vec<VoErrorRow>> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let motions = data
        .samples
        .iter()
        .map(|s| Ok((s.action, s.label, estimator.estimate(&s.o_t, &s.o_t1, s.action, s.label)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(error_rows(&motions))
}

pub fn vo_error_csv(rows: &[VoErrorRow]) -> String {
    let mut s = String::from("action,channel,count,mean,median,p90\n");
    for r in rows {
        let e = r.summary;
        let _ = writeln!(s, "{},{},{},{},{},{}", r.action, r.channel, e.count, e.mean, e.median, e.p90);
    }
    s
}

pub fn metrics_csv(reports: &[MetricsReport]) -> String {
    let mut s = String::from("subset,S,SPL,SoftSPL,d_g_mean,episodes\n");
    for r in reports {
        let _ = writeln!(s, "{},{},{},{},{},{}", r.subset, r.success, r.spl, r.softspl, r.d_goal_mean, r.episodes);
    }
    s
}

/// Parses [`metrics_csv`] output. The VO error rows are not part of the
/// file and come back empty.
pub fn read_metrics_csv(text: &str) -> Result<Vec<MetricsReport>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = |what: String| Error::Format(format!("metrics line {}: {what}", i + 1));
        if f.len() != 6 {
            return Err(bad(format!("{} fields", f.len())));
        }
        let num = |k: usize| f[k].parse::<f64>().map_err(|e| bad(e.to_string()));
        out.push(MetricsReport {
            subset: f[0].to_string(),
            success: num(1)?,
            spl: num(2)?,
            softspl: num(3)?,
            d_goal_mean: num(4)?,
            episodes: f[5].parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
            vo_errors: Vec::new(),
        });
    }
    Ok(out)
}

pub fn summary_text(reports: &[MetricsReport]) -> String {
    let mut s = format!("{:<8} {:>7} {:>7} {:>8} {:>8} {:>8}\n", "subset", "S", "SPL", "SoftSPL", "d_g", "episodes");
    for r in reports {
        let _ = writeln!(
            s,
            "{:<8} {:>7.3} {:>7.3} {:>8.3} {:>8.3} {:>8}",
            r.subset, r.success, r.spl, r.softspl, r.d_goal_mean, r.episodes
        );
    }
    s
}

/// Per pose: the action taken from it, true and estimated pose, and the
/// estimated goal vector.
pub fn trajectory_csv(result: &EpisodeResult) -> String {
    let mut s = String::from("step,action,true_x,true_y,true_heading,est_x,est_y,est_heading,goal_x,goal_z\n");
    for (k, (t, e)) in result.trajectory.iter().zip(&result.estimated).enumerate() {
        let action = result.actions.get(k).map_or("END", |a| a.name());
        let g = result.goal_trace.get(k).map_or(Vec2::ZERO, |g| g.0);
        let _ = writeln!(
            s,
            "{k},{action},{},{},{},{},{},{},{},{}",
            t.position.x, t.position.y, t.heading, e.position.x, e.position.y, e.heading, g.x, g.y
        );
    }
    s
}

/// Parses [`trajectory_csv`] output back into `(true, estimated)` poses.
pub fn read_trajectory_csv(text: &str) -> Result<Vec<(Pose2, Pose2)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(Error::Format(format!("trajectory line {}: {} fields", i + 1, f.len())));
        }
        let v: Vec<f64> = f[2..8]
            .iter()
            .map(|x| x.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("trajectory line {}: {e}", i + 1)))?;
        let pose = |a: &[f64]| Pose2 {
            position: Vec2::new(a[0], a[1]),
            heading: a[2],
        };
        out.push((pose(&v[0..3]), pose(&v[3..6])));
    }
    Ok(out)
}

const COLOR_FREE: [f64; 3] = [0.95, 0.95, 0.95];
const COLOR_WALL: [f64; 3] = [0.2, 0.2, 0.2];
const COLOR_SHORTEST: [f64; 3] = [0.1, 0.7, 0.2];
const COLOR_TRUE: [f64; 3] = [0.1, 0.3, 0.9];
const COLOR_EST: [f64; 3] = [0.9, 0.1, 0.1];
const COLOR_GOAL: [f64; 3] = [0.9, 0.7, 0.0];

/// Top-down RGB raster of a floorplan, `upscale` pixels per cell.
pub struct Canvas {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
    scale: f64,
}

impl Canvas {
    pub fn floorplan(plan: &FloorPlan, upscale: usize) -> Self {
        let upscale = upscale.max(1);
        let (w, h) = (plan.width() * upscale, plan.height() * upscale);
        let mut data = vec![0.0; w * h * 3];
        for py in 0..h {
            for px in 0..w {
                let (i, j) = (px / upscale, plan.height() - 1 - py / upscale);
                let c = if plan.cells()[j * plan.width() + i] == WALL { COLOR_WALL } else { COLOR_FREE };
                data[(py * w + px) * 3..][..3].copy_from_slice(&c);
            }
        }
        Self {
            width: w,
            height: h,
            data,
            scale: upscale as f64 / plan.cell_size(),
        }
    }

    fn to_pixel(&self, p: Vec2) -> (f64, f64) {
        (p.x * self.scale, self.height as f64 - p.y * self.scale)
    }

    pub fn dot(&mut self, p: Vec2, r: i64, color: [f64; 3]) {
        let (cx, cy) = self.to_pixel(p);
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy <= r * r {
                    self.put(cx as i64 + dx, cy as i64 + dy, color);
                }
            }
        }
    }

    fn put(&mut self, x: i64, y: i64, color: [f64; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            let k = (y as usize * self.width + x as usize) * 3;
            self.data[k..k + 3].copy_from_slice(&color);
        }
    }

    pub fn polyline(&mut self, pts: &[Vec2], color: [f64; 3]) {
        for w in pts.windows(2) {
            let (a, b) = (self.to_pixel(w[0]), self.to_pixel(w[1]));
            let n = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).max(1);
            for k in 0..=n {
                let t = k as f64 / n as f64;
                self.put(
                    (a.0 + (b.0 - a.0) * t).floor() as i64,
                    (a.1 + (b.1 - a.1) * t).floor() as i64,
                    color,
                );
            }
        }
        if pts.len() == 1 {
            self.dot(pts[0], 0, color);
        }
    }
}

/// Floorplan with shortest (green), true (blue) and estimated (red) paths.
pub fn trajectory_image(plan: &FloorPlan, goal: Vec2, result: &EpisodeResult, upscale: usize) -> Canvas {
    let mut c = Canvas::floorplan(plan, upscale);
    if let Some(start) = result.trajectory.first() {
        if let Ok(wps) = waypoints(plan, start.position, goal) {
            c.polyline(&wps, COLOR_SHORTEST);
        }
    }
    let truth: Vec<Vec2> = result.trajectory.iter().map(|p| p.position).collect();
    let est: Vec<Vec2> = result.estimated.iter().map(|p| p.position).collect();
    c.polyline(&truth, COLOR_TRUE);
    c.polyline(&est, COLOR_EST);
    c.dot(goal, (upscale / 3) as i64, COLOR_GOAL);
    c
}

/// Writes `<stem>.ppm` and `<stem>.csv` into `dir`.
pub fn export_trajectory(
    dir: &Path,
    stem: &str,
    plan: &FloorPlan,
    goal: Vec2,
    result: &EpisodeResult,
    upscale: usize,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let img = trajectory_image(plan, goal, result, upscale);
    write_ppm(&dir.join(format!("{stem}.ppm")), img.width, img.height, &img.data)?;
    fs::write(dir.join(format!("{stem}.csv")), trajectory_csv(result))?;
    Ok(())
}
