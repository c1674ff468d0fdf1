use std::collections::VecDeque;
use std::io::{Read, Write};

use rand::Rng as _;

use super::AGENT_RADIUS;
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::io::{read_exact_array, BinReader, BinWriter};
use crate::rng;

pub const FREE: u8 = 0;
pub const WALL: u8 = 1;

const MAGIC: &[u8; 4] = b"VOTW";
const VERSION: u16 = 1;
const PALETTE_SIZE: u16 = 8;
const MAX_ATTEMPTS: u64 = 64;

/// Occupancy grid. Cell `(i, j)` covers `[i*cs, (i+1)*cs] x [j*cs, (j+1)*cs]`
/// in world metres and is stored at `j * width + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FloorPlan {
    width: usize,
    height: usize,
    cell_size: f64,
    cells: Vec<u8>,
    textures: Vec<u16>,
    seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloorParams {
    /// Cells per side.
    pub size: usize,
    /// Corridor width in cells.
    pub corridor_width: usize,
    pub room_count: usize,
    pub cell_size: f64,
}

impl Default for FloorParams {
    fn default() -> Self {
        Self {
            size: 24,
            corridor_width: 2,
            room_count: 5,
            cell_size: 0.4,
        }
    }
}

impl FloorPlan {
    /// Builds a plan from explicit occupancy, validating every invariant.
    pub fn from_cells(
        width: usize,
        height: usize,
        cell_size: f64,
        cells: Vec<u8>,
        textures: Vec<u16>,
        seed: u64,
    ) -> Result<Self> {
        if cells.len() != width * height || textures.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "grid arrays must have {} entries",
                width * height
            )));
        }
        let plan = Self {
            width,
            height,
            cell_size,
            cells,
            textures,
            seed,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// Walled rectangle with `inner_w x inner_h` free cells; handy for analytic scenes.
    pub fn empty_room(inner_w: usize, inner_h: usize, cell_size: f64) -> Result<Self> {
        let (w, h) = (inner_w + 2, inner_h + 2);
        let mut cells = vec![FREE; w * h];
        for j in 0..h {
            for i in 0..w {
                if i == 0 || j == 0 || i == w - 1 || j == h - 1 {
                    cells[j * w + i] = WALL;
                }
            }
        }
        let textures = (0..w * h).map(|k| (k % PALETTE_SIZE as usize) as u16).collect();
        Self::from_cells(w, h, cell_size, cells, textures, 0)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn texture(&self, i: usize, j: usize) -> u16 {
        self.textures[j * self.width + i]
    }

    pub fn is_wall(&self, i: i64, j: i64) -> bool {
        if i < 0 || j < 0 || i >= self.width as i64 || j >= self.height as i64 {
            return true;
        }
        self.cells[j as usize * self.width + i as usize] == WALL
    }

    pub fn is_free_cell(&self, i: i64, j: i64) -> bool {
        !self.is_wall(i, j)
    }

    pub fn cell_of(&self, p: Vec2) -> (i64, i64) {
        (
            (p.x / self.cell_size).floor() as i64,
            (p.y / self.cell_size).floor() as i64,
        )
    }

    pub fn cell_center(&self, i: i64, j: i64) -> Vec2 {
        Vec2::new(
            (i as f64 + 0.5) * self.cell_size,
            (j as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn is_free_point(&self, p: Vec2) -> bool {
        let (i, j) = self.cell_of(p);
        self.is_free_cell(i, j)
    }

    /// Distance from `p` to the nearest wall cell within `reach` metres, or
    /// `reach` if none is closer.
    pub fn wall_distance(&self, p: Vec2, reach: f64) -> f64 {
        let cs = self.cell_size;
        let (i0, j0) = self.cell_of(p - Vec2::new(reach, reach));
        let (i1, j1) = self.cell_of(p + Vec2::new(reach, reach));
        let mut best = reach;
        for j in j0..=j1 {
            for i in i0..=i1 {
                if !self.is_wall(i, j) {
                    continue;
                }
                let (x0, y0) = (i as f64 * cs, j as f64 * cs);
                let dx = (x0 - p.x).max(0.0).max(p.x - (x0 + cs));
                let dy = (y0 - p.y).max(0.0).max(p.y - (y0 + cs));
                best = best.min(dx.hypot(dy));
            }
        }
        best
    }

    /// True when a disc of `radius` centred at `p` overlaps no wall.
    pub fn disc_fits(&self, p: Vec2, radius: f64) -> bool {
        self.is_free_point(p) && self.wall_distance(p, radius + 1e-9) >= radius
    }

    pub fn free_cells(&self) -> Vec<(i64, i64)> {
        let mut out = Vec::new();
        for j in 0..self.height {
            for i in 0..self.width {
                if self.cells[j * self.width + i] == FREE {
                    out.push((i as i64, j as i64));
                }
            }
        }
        out
    }

    /// Cells reachable from `start` through 4-connected free space.
    pub fn flood_fill(&self, start: (i64, i64)) -> Vec<bool> {
        let mut seen = vec![false; self.width * self.height];
        if self.is_wall(start.0, start.1) {
            return seen;
        }
        let mut queue = VecDeque::from([start]);
        seen[start.1 as usize * self.width + start.0 as usize] = true;
        while let Some((i, j)) = queue.pop_front() {
            for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                let (ni, nj) = (i + di, j + dj);
                if self.is_wall(ni, nj) {
                    continue;
                }
                let k = nj as usize * self.width + ni as usize;
                if !seen[k] {
                    seen[k] = true;
                    queue.push_back((ni, nj));
                }
            }
        }
        seen
    }

    fn validate(&self) -> Result<()> {
        if self.width < 3 || self.height < 3 {
            return Err(Error::InvalidArgument("floorplan too small".into()));
        }
        if !(self.cell_size.is_finite() && self.cell_size >= 2.0 * AGENT_RADIUS) {
            return Err(Error::InvalidArgument(format!(
                "cell size {} cannot hold the agent disc",
                self.cell_size
            )));
        }
        for j in 0..self.height {
            for i in 0..self.width {
                let border = i == 0 || j == 0 || i == self.width - 1 || j == self.height - 1;
                if border && self.cells[j * self.width + i] != WALL {
                    return Err(Error::InvalidArgument("outer boundary must be walled".into()));
                }
            }
        }
        let free = self.free_cells();
        let Some(&first) = free.first() else {
            return Err(Error::InvalidArgument("floorplan has no free cells".into()));
        };
        let reach = self.flood_fill(first);
        if free
            .iter()
            .any(|&(i, j)| !reach[j as usize * self.width + i as usize])
        {
            return Err(Error::InvalidArgument("free space is not connected".into()));
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BinWriter::new(w);
        w.bytes(MAGIC)?;
        w.u16(VERSION)?;
        w.u32(self.width as u32)?;
        w.u32(self.height as u32)?;
        w.f64(self.cell_size)?;
        w.u64(self.seed)?;
        w.bytes(&self.cells)?;
        for &t in &self.textures {
            w.u16(t)?;
        }
        w.finish()
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = BinReader::new(r);
        let magic: [u8; 4] = read_exact_array(&mut r)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a floorplan file (bad magic)".into()));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported floorplan version {version}")));
        }
        let width = r.u32()? as usize;
        let height = r.u32()? as usize;
        let cell_size = r.f64()?;
        let seed = r.u64()?;
        let n = width
            .checked_mul(height)
            .filter(|&n| n <= 1 << 26)
            .ok_or_else(|| Error::Format("floorplan dimensions too large".into()))?;
        let cells = r.bytes(n)?;
        let textures = (0..n).map(|_| r.u16()).collect::<Result<Vec<_>>>()?;
        Self::from_cells(width, height, cell_size, cells, textures, seed)
    }
}

/// Rooms joined by L-shaped corridors; components not reachable from the
/// first room are walled off.
pub fn generate_floorplan(seed: u64, params: FloorParams) -> Result<FloorPlan> {
    if params.size < 8 {
        return Err(Error::InvalidArgument(format!(
            "floorplan size {} < 8 cells",
            params.size
        )));
    }
    if params.corridor_width == 0 || params.corridor_width > params.size - 2 {
        return Err(Error::InvalidArgument("invalid corridor width".into()));
    }
    if params.room_count == 0 {
        return Err(Error::InvalidArgument("room_count must be positive".into()));
    }
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = rng::stream(seed, 0x464C_4F4F_5200 + attempt);
        if let Some(plan) = try_generate(seed, &params, &mut rng)? {
            return Ok(plan);
        }
    }
    Err(Error::Generation(format!(
        "no connected floorplan for seed {seed} after {MAX_ATTEMPTS} attempts"
    )))
}

fn try_generate(seed: u64, p: &FloorParams, rng: &mut rng::Rng) -> Result<Option<FloorPlan>> {
    let n = p.size;
    let mut cells = vec![WALL; n * n];
    let max_room = (n / 3).max(3).min(n - 2);
    let mut centers = Vec::with_capacity(p.room_count);
    for _ in 0..p.room_count {
        let w = rng.gen_range(3..=max_room);
        let h = rng.gen_range(3..=max_room);
        let x0 = rng.gen_range(1..=n - 1 - w);
        let y0 = rng.gen_range(1..=n - 1 - h);
        for j in y0..y0 + h {
            for i in x0..x0 + w {
                cells[j * n + i] = FREE;
            }
        }
        centers.push((x0 + w / 2, y0 + h / 2));
    }
    let cw = p.corridor_width;
    let carve = |cells: &mut Vec<u8>, i: usize, j: usize| {
        for dj in 0..cw {
            for di in 0..cw {
                let (ci, cj) = ((i + di).min(n - 2).max(1), (j + dj).min(n - 2).max(1));
                cells[cj * n + ci] = FREE;
            }
        }
    };
    for pair in centers.windows(2) {
        let ((ax, ay), (bx, by)) = (pair[0], pair[1]);
        let horizontal_first = rng.gen_bool(0.5);
        let corner = if horizontal_first { (bx, ay) } else { (ax, by) };
        for (from, to) in [((ax, ay), corner), (corner, (bx, by))] {
            let (mut i, mut j) = from;
            loop {
                carve(&mut cells, i, j);
                if (i, j) == to {
                    break;
                }
                if i != to.0 {
                    i = if to.0 > i { i + 1 } else { i - 1 };
                } else {
                    j = if to.1 > j { j + 1 } else { j - 1 };
                }
            }
        }
    }

    // Keep the component containing the first room.
    let textures = wall_textures(n, rng);
    let (cx, cy) = centers[0];
    let mut plan = FloorPlan {
        width: n,
        height: n,
        cell_size: p.cell_size,
        cells,
        textures,
        seed,
    };
    let reach = plan.flood_fill((cx as i64, cy as i64));
    for (k, c) in plan.cells.iter_mut().enumerate() {
        if !reach[k] {
            *c = WALL;
        }
    }
    let free = plan.free_cells().len();
    if free < n * n / 5 {
        return Ok(None);
    }
    plan.validate()?;
    Ok(Some(plan))
}

/// Texture ids are constant over 3x3 blocks so walls show coherent segments.
fn wall_textures(n: usize, rng: &mut rng::Rng) -> Vec<u16> {
    let blocks = n.div_ceil(3);
    let ids: Vec<u16> = (0..blocks * blocks)
        .map(|_| rng.gen_range(0..PALETTE_SIZE))
        .collect();
    (0..n * n)
        .map(|k| {
            let (i, j) = (k % n, k / n);
            ids[(j / 3) * blocks + i / 3]
        })
        .collect()
}
