//! Planar world: ground-truth obstacles, a synthetic depth sensor, and the
//! occupancy grid and 2.5D height map built from its returns.
//!
//! Obstacles are vertical prisms over a rectangular footprint. The sensor
//! casts a horizontal fan of rays from the robot; every footprint a ray
//! enters contributes a column of points on the facing side, and footprints
//! lower than the sensor also show their top surface along the ray. Prisms
//! reaching the sensor height block the ray. Points above
//! [`SensorConfig::max_mapped_height`] are dropped, so overhead structure such
//! as a window lintel never enters the maps.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collision::{CollisionError, WindowObstacle};

pub const OCCUPANCY_RESOLUTION: f64 = 0.1;
pub const HEIGHT_RESOLUTION: f64 = 0.2;
pub const JUMPABLE_WITH_PAYLOAD: f64 = 0.13;
pub const JUMPABLE_NO_PAYLOAD: f64 = 0.24;
/// Heights at most this far above the jumpable height still count as jumpable.
pub const HEIGHT_EPS: f64 = 1e-9;

/// Nudge of sensed points into the surface they were measured on.
const SURFACE_NUDGE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error(transparent)]
    Obstacle(#[from] CollisionError),
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> WorldError {
    WorldError::Invalid { field: field.into(), reason: reason.into() }
}

/// Wraps an angle to `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw }
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn heading(&self) -> Vector2<f64> {
        Vector2::new(self.yaw.cos(), self.yaw.sin())
    }
}

/// Axis-aligned box standing on the ground.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxObstacle {
    pub center: [f64; 2],
    /// Full extents along x and y.
    pub size: [f64; 2],
    pub height: f64,
}

/// Window in a wall: a sill on the ground and a lintel above the opening.
/// `yaw` is the direction of the wall normal, i.e. the crossing direction;
/// `width` runs along the wall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowEntry {
    pub center: [f64; 2],
    #[serde(default)]
    pub yaw: f64,
    pub width: f64,
    #[serde(default = "default_window_thickness")]
    pub thickness: f64,
    pub sill: f64,
    pub opening: f64,
    #[serde(default = "default_lintel")]
    pub lintel: f64,
}

fn default_window_thickness() -> f64 {
    0.05
}

fn default_lintel() -> f64 {
    0.3
}

impl WindowEntry {
    pub fn normal(&self) -> Vector2<f64> {
        Vector2::new(self.yaw.cos(), self.yaw.sin())
    }

    pub fn center(&self) -> Vector2<f64> {
        Vector2::new(self.center[0], self.center[1])
    }

    /// Planar cross-section seen by a robot standing `standoff` in front of
    /// the window plane, facing it.
    pub fn planar(&self, standoff: f64) -> Result<WindowObstacle, CollisionError> {
        let top = self.sill + self.opening;
        WindowObstacle::new(standoff, self.thickness, self.sill, self.opening, top + self.lintel)
    }

    /// Whether `p` lies within the footprint grown by `margin`.
    pub fn footprint_contains(&self, p: &Vector2<f64>, margin: f64) -> bool {
        let d = p - self.center();
        let n = self.normal();
        let along = Vector2::new(-n.y, n.x);
        d.dot(&n).abs() <= 0.5 * self.thickness + margin && d.dot(&along).abs() <= 0.5 * self.width + margin
    }
}

fn default_jumpable() -> Option<f64> {
    None
}

/// Ground-truth environment and navigation task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldScenario {
    #[serde(default)]
    pub name: String,
    /// `[x_min, y_min, x_max, y_max]`.
    pub bounds: [f64; 4],
    /// `[x, y, yaw]`.
    pub start: [f64; 3],
    pub goal: [f64; 2],
    /// Whether the robot carries the sensor payload.
    #[serde(default = "default_payload")]
    pub payload: bool,
    /// Overrides the payload-dependent default.
    #[serde(default = "default_jumpable")]
    pub jumpable_height: Option<f64>,
    #[serde(default, rename = "box")]
    pub boxes: Vec<BoxObstacle>,
    #[serde(default, rename = "window")]
    pub windows: Vec<WindowEntry>,
}

fn default_payload() -> bool {
    true
}

/// Vertical prism over an oriented rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prism {
    pub center: Vector2<f64>,
    pub half: Vector2<f64>,
    pub yaw: f64,
    pub z_lo: f64,
    pub z_hi: f64,
}

impl Prism {
    fn to_local(&self, p: &Vector2<f64>) -> Vector2<f64> {
        let (s, c) = self.yaw.sin_cos();
        let d = p - self.center;
        Vector2::new(c * d.x + s * d.y, -s * d.x + c * d.y)
    }

    fn to_world(&self, l: &Vector2<f64>) -> Vector2<f64> {
        let (s, c) = self.yaw.sin_cos();
        self.center + Vector2::new(c * l.x - s * l.y, s * l.x + c * l.y)
    }

    /// Nearest point at least `margin` inside the footprint.
    fn pull_inside(&self, p: &Vector2<f64>, margin: f64) -> Vector2<f64> {
        let l = self.to_local(p);
        let clamp = |v: f64, h: f64| {
            let m = margin.min(0.5 * h);
            v.clamp(-h + m, h - m)
        };
        self.to_world(&Vector2::new(clamp(l.x, self.half.x), clamp(l.y, self.half.y)))
    }

    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        let l = self.to_local(p);
        l.x.abs() <= self.half.x && l.y.abs() <= self.half.y
    }

    /// Entry and exit parameters of the ray `o + t d` through the footprint.
    pub fn ray_interval(&self, o: &Vector2<f64>, d: &Vector2<f64>) -> Option<(f64, f64)> {
        let lo = self.to_local(o);
        let (s, c) = self.yaw.sin_cos();
        let ld = Vector2::new(c * d.x + s * d.y, -s * d.x + c * d.y);
        let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..2 {
            if ld[i].abs() < 1e-15 {
                if lo[i].abs() > self.half[i] {
                    return None;
                }
            } else {
                let a = (-self.half[i] - lo[i]) / ld[i];
                let b = (self.half[i] - lo[i]) / ld[i];
                t0 = t0.max(a.min(b));
                t1 = t1.min(a.max(b));
            }
        }
        (t0 <= t1).then_some((t0, t1))
    }
}

impl WorldScenario {
    pub fn parse(text: &str) -> Result<Self, WorldError> {
        let s: Self = toml::from_str(text).map_err(|e| WorldError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, WorldError> {
        let text = std::fs::read_to_string(path)?;
        let mut s = Self::parse(&text).map_err(|e| match e {
            WorldError::Parse(m) => WorldError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if s.name.is_empty() {
            s.name = path.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        }
        Ok(s)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn jumpable(&self) -> f64 {
        self.jumpable_height.unwrap_or(if self.payload { JUMPABLE_WITH_PAYLOAD } else { JUMPABLE_NO_PAYLOAD })
    }

    pub fn start_pose(&self) -> Pose2 {
        Pose2::new(self.start[0], self.start[1], self.start[2])
    }

    pub fn goal(&self) -> Vector2<f64> {
        Vector2::new(self.goal[0], self.goal[1])
    }

    pub fn in_bounds(&self, p: &Vector2<f64>) -> bool {
        let b = self.bounds;
        p.x >= b[0] && p.x <= b[2] && p.y >= b[1] && p.y <= b[3]
    }

    pub fn prisms(&self) -> Vec<Prism> {
        let mut out: Vec<Prism> = self
            .boxes
            .iter()
            .map(|b| Prism {
                center: Vector2::new(b.center[0], b.center[1]),
                half: Vector2::new(0.5 * b.size[0], 0.5 * b.size[1]),
                yaw: 0.0,
                z_lo: 0.0,
                z_hi: b.height,
            })
            .collect();
        for w in &self.windows {
            let half = Vector2::new(0.5 * w.thickness, 0.5 * w.width);
            let top = w.sill + w.opening;
            out.push(Prism { center: w.center(), half, yaw: w.yaw, z_lo: 0.0, z_hi: w.sill });
            out.push(Prism { center: w.center(), half, yaw: w.yaw, z_lo: top, z_hi: top + w.lintel });
        }
        out
    }

    /// Window whose footprint (grown by `margin`) contains `p`.
    pub fn window_at(&self, p: &Vector2<f64>, margin: f64) -> Option<&WindowEntry> {
        self.windows.iter().find(|w| w.footprint_contains(p, margin))
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let b = self.bounds;
        if !(b[2] > b[0] && b[3] > b[1]) {
            return Err(invalid("bounds", "need x_min < x_max and y_min < y_max"));
        }
        for (i, bx) in self.boxes.iter().enumerate() {
            if !(bx.size[0] > 0.0 && bx.size[1] > 0.0) {
                return Err(invalid(format!("box[{i}].size"), "extents must be positive"));
            }
            if !(bx.height > 0.0) {
                return Err(invalid(format!("box[{i}].height"), "must be positive"));
            }
        }
        for (i, w) in self.windows.iter().enumerate() {
            if !(w.width > 0.0) {
                return Err(invalid(format!("window[{i}].width"), "must be positive"));
            }
            if !(w.lintel > 0.0) {
                return Err(invalid(format!("window[{i}].lintel"), "must be positive"));
            }
            w.planar(0.4).map_err(|e| invalid(format!("window[{i}]"), e.to_string()))?;
        }
        if let Some(j) = self.jumpable_height {
            if !(j >= 0.0) {
                return Err(invalid("jumpable_height", "must be nonnegative"));
            }
        }
        let prisms = self.prisms();
        for (name, p) in [("start", Vector2::new(self.start[0], self.start[1])), ("goal", self.goal())] {
            if !self.in_bounds(&p) {
                return Err(invalid(name, "outside bounds"));
            }
            if prisms.iter().any(|pr| pr.z_lo <= 0.0 && pr.contains(&p)) {
                return Err(invalid(name, "inside an obstacle footprint"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorConfig {
    pub hfov: f64,
    pub ray_spacing: f64,
    pub max_range: f64,
    pub mount_height: f64,
    /// Vertical spacing of points along a sensed face.
    pub column_step: f64,
    pub max_mapped_height: f64,
    /// Standard deviation of the height noise, truncated at three sigma.
    pub noise_sigma: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            hfov: 86f64.to_radians(),
            ray_spacing: 0.05,
            max_range: 4.0,
            mount_height: 0.3,
            column_step: 0.05,
            max_mapped_height: 0.6,
            noise_sigma: 0.0,
        }
    }
}

impl SensorConfig {
    /// Ray bearings relative to the heading, symmetric about zero.
    pub fn bearings(&self) -> Vec<f64> {
        let n = (self.hfov / self.ray_spacing).floor() as usize;
        let start = -0.5 * n as f64 * self.ray_spacing;
        (0..=n).map(|i| start + i as f64 * self.ray_spacing).collect()
    }
}

fn column(p: Vector2<f64>, z_lo: f64, z_hi: f64, step: f64, out: &mut Vec<Vector3<f64>>) {
    let n = ((z_hi - z_lo) / step).ceil().max(0.0) as usize;
    for i in 0..n {
        out.push(Vector3::new(p.x, p.y, z_lo + i as f64 * step));
    }
    out.push(Vector3::new(p.x, p.y, z_hi));
}

/// Synthetic depth returns from `pose` in world coordinates.
pub fn sense<R: Rng>(scenario: &WorldScenario, pose: &Pose2, cfg: &SensorConfig, rng: &mut R) -> Vec<Vector3<f64>> {
    let prisms = scenario.prisms();
    let origin = pose.position();
    let mut out = Vec::new();
    let mut hits: Vec<(f64, f64, &Prism)> = Vec::new();
    for b in cfg.bearings() {
        let a = pose.yaw + b;
        let d = Vector2::new(a.cos(), a.sin());
        hits.clear();
        hits.extend(prisms.iter().filter_map(|p| {
            p.ray_interval(&origin, &d).filter(|&(t0, _)| t0 >= 0.0 && t0 <= cfg.max_range).map(|(t0, t1)| (t0, t1, p))
        }));
        hits.sort_by(|x, y| x.0.total_cmp(&y.0));
        for &(t0, t1, p) in &hits {
            let z_top = p.z_hi.min(cfg.max_mapped_height);
            if p.z_lo <= z_top {
                column(p.pull_inside(&(origin + d * t0), SURFACE_NUDGE), p.z_lo, z_top, cfg.column_step, &mut out);
                if p.z_hi < cfg.mount_height {
                    let t_end = t1.min(cfg.max_range);
                    let mut t = t0 + cfg.column_step;
                    while t < t_end {
                        let q = p.pull_inside(&(origin + d * t), SURFACE_NUDGE);
                        out.push(Vector3::new(q.x, q.y, p.z_hi));
                        t += cfg.column_step;
                    }
                    let q = p.pull_inside(&(origin + d * t_end), SURFACE_NUDGE);
                    out.push(Vector3::new(q.x, q.y, p.z_hi));
                }
            }
            if p.z_lo < cfg.mount_height && p.z_hi >= cfg.mount_height {
                break;
            }
        }
    }
    if cfg.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, cfg.noise_sigma).expect("positive sigma");
        let cap = 3.0 * cfg.noise_sigma;
        for p in &mut out {
            let n: f64 = normal.sample(rng);
            p.z += n.clamp(-cap, cap);
        }
    }
    out
}

/// Row-major grid over a rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry {
    pub origin: Vector2<f64>,
    pub resolution: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridGeometry {
    pub fn covering(bounds: [f64; 4], resolution: f64) -> Self {
        let nx = ((bounds[2] - bounds[0]) / resolution - 1e-9).ceil().max(1.0) as usize;
        let ny = ((bounds[3] - bounds[1]) / resolution - 1e-9).ceil().max(1.0) as usize;
        Self { origin: Vector2::new(bounds[0], bounds[1]), resolution, nx, ny }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn cell_of(&self, p: &Vector2<f64>) -> Option<(usize, usize)> {
        let f = (p - self.origin) / self.resolution;
        if f.x < 0.0 || f.y < 0.0 {
            return None;
        }
        let (i, j) = (f.x.floor() as usize, f.y.floor() as usize);
        (i < self.nx && j < self.ny).then_some((i, j))
    }

    pub fn center(&self, i: usize, j: usize) -> Vector2<f64> {
        self.origin + Vector2::new(i as f64 + 0.5, j as f64 + 0.5) * self.resolution
    }
}

/// 2D traversability at 0.1 m. Each cell keeps the largest height observed
/// in its column; a cell is untraversable iff that exceeds the jumpable
/// height. Never-observed cells count as free unless `pessimistic`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub geometry: GridGeometry,
    pub jumpable_height: f64,
    pub pessimistic: bool,
    max_height: Vec<Option<f64>>,
}

impl OccupancyGrid {
    pub fn new(bounds: [f64; 4], jumpable_height: f64) -> Self {
        let geometry = GridGeometry::covering(bounds, OCCUPANCY_RESOLUTION);
        Self { geometry, jumpable_height, pessimistic: false, max_height: vec![None; geometry.len()] }
    }

    /// Fully observed grid from explicit traversability (`true` = free).
    pub fn from_cells(geometry: GridGeometry, free: &[bool]) -> Self {
        assert_eq!(free.len(), geometry.len(), "cell count must match the geometry");
        let max_height = free.iter().map(|&f| Some(if f { 0.0 } else { f64::INFINITY })).collect();
        Self { geometry, jumpable_height: 0.0, pessimistic: false, max_height }
    }

    pub fn observed_height(&self, i: usize, j: usize) -> Option<f64> {
        self.max_height[self.geometry.index(i, j)]
    }

    pub fn is_free(&self, i: usize, j: usize) -> bool {
        match self.observed_height(i, j) {
            Some(h) => h <= self.jumpable_height + HEIGHT_EPS,
            None => !self.pessimistic,
        }
    }

    /// Traversability of every cell, row-major.
    pub fn cells(&self) -> Vec<bool> {
        (0..self.geometry.ny).flat_map(|j| (0..self.geometry.nx).map(move |i| (i, j))).map(|(i, j)| self.is_free(i, j)).collect()
    }

    pub fn observed_count(&self) -> usize {
        self.max_height.iter().filter(|h| h.is_some()).count()
    }

    fn record(&mut self, p: &Vector3<f64>) -> bool {
        let Some((i, j)) = self.geometry.cell_of(&p.xy()) else {
            return false;
        };
        let idx = self.geometry.index(i, j);
        let was_free = self.is_free(i, j);
        let cell = &mut self.max_height[idx];
        *cell = Some(cell.map_or(p.z, |h| h.max(p.z)));
        was_free != self.is_free(i, j)
    }

    /// Portable graymap: 255 free, 0 untraversable, 128 unobserved. Rows are
    /// written top (largest y) first.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let g = &self.geometry;
        writeln!(w, "P2")?;
        writeln!(w, "# quadjump-occupancy v1")?;
        writeln!(w, "# origin {} {} resolution {}", g.origin.x, g.origin.y, g.resolution)?;
        writeln!(w, "{} {}", g.nx, g.ny)?;
        writeln!(w, "255")?;
        for j in (0..g.ny).rev() {
            let row: Vec<&str> = (0..g.nx)
                .map(|i| match self.observed_height(i, j) {
                    None => "128",
                    Some(_) if self.is_free(i, j) => "255",
                    Some(_) => "0",
                })
                .collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

/// 2.5D map: running maximum of observed obstacle height per 0.2 m tile.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightMap {
    pub geometry: GridGeometry,
    tiles: Vec<f64>,
}

impl HeightMap {
    pub fn new(bounds: [f64; 4]) -> Self {
        let geometry = GridGeometry::covering(bounds, HEIGHT_RESOLUTION);
        Self { geometry, tiles: vec![0.0; geometry.len()] }
    }

    pub fn tile(&self, i: usize, j: usize) -> f64 {
        self.tiles[self.geometry.index(i, j)]
    }

    pub fn tiles(&self) -> &[f64] {
        &self.tiles
    }

    /// Obstacle height of the tile containing `p` (zero outside the map).
    pub fn height_at(&self, p: &Vector2<f64>) -> f64 {
        self.geometry.cell_of(p).map_or(0.0, |(i, j)| self.tile(i, j))
    }

    fn record(&mut self, p: &Vector3<f64>) -> bool {
        let Some((i, j)) = self.geometry.cell_of(&p.xy()) else {
            return false;
        };
        let idx = self.geometry.index(i, j);
        if p.z > self.tiles[idx] {
            self.tiles[idx] = p.z;
            true
        } else {
            false
        }
    }

    /// Text grid, rows top (largest y) first.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let g = &self.geometry;
        writeln!(w, "# quadjump-heightmap v1")?;
        writeln!(w, "# origin {} {} resolution {} size {} {}", g.origin.x, g.origin.y, g.resolution, g.nx, g.ny)?;
        for j in (0..g.ny).rev() {
            let row: Vec<String> = (0..g.nx).map(|i| format!("{:.4}", self.tile(i, j))).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldMaps {
    pub occupancy: OccupancyGrid,
    pub heights: HeightMap,
}

impl WorldMaps {
    pub fn new(bounds: [f64; 4], jumpable_height: f64) -> Self {
        Self { occupancy: OccupancyGrid::new(bounds, jumpable_height), heights: HeightMap::new(bounds) }
    }

    pub fn for_scenario(s: &WorldScenario) -> Self {
        Self::new(s.bounds, s.jumpable())
    }

    /// Folds a batch of world-frame points into both maps. Returns whether
    /// any cell changed traversability.
    pub fn integrate(&mut self, points: &[Vector3<f64>]) -> bool {
        let mut changed = false;
        for p in points {
            changed |= self.occupancy.record(p);
            self.heights.record(p);
        }
        changed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoseNoise {
    pub position_sigma: f64,
    pub yaw_sigma: f64,
}

/// Estimated base pose `(x, y, z, yaw)` and its rates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RobotPoseEstimate {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
    pub velocity: [f64; 4],
}

impl RobotPoseEstimate {
    /// Ground truth corrupted by zero-mean Gaussian noise.
    pub fn observe<R: Rng>(truth: &Pose2, z: f64, velocity: [f64; 4], noise: &PoseNoise, rng: &mut R) -> Self {
        let mut g = |s: f64| if s > 0.0 { Normal::new(0.0, s).expect("positive sigma").sample(rng) } else { 0.0 };
        Self {
            x: truth.x + g(noise.position_sigma),
            y: truth.y + g(noise.position_sigma),
            z,
            yaw: wrap_angle(truth.yaw + g(noise.yaw_sigma)),
            velocity,
        }
    }

    pub fn pose(&self) -> Pose2 {
        Pose2::new(self.x, self.y, self.yaw)
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn empty() -> WorldScenario {
        WorldScenario {
            name: "t".into(),
            bounds: [0.0, 0.0, 6.0, 4.0],
            start: [0.5, 2.0, 0.0],
            goal: [5.5, 2.0],
            payload: true,
            jumpable_height: None,
            boxes: vec![],
            windows: vec![],
        }
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn empty_scenario_senses_nothing() {
        let s = empty();
        assert!(sense(&s, &s.start_pose(), &SensorConfig::default(), &mut rng()).is_empty());
    }

    #[test]
    fn box_ahead_is_seen_only_on_its_facing_side() {
        let mut s = empty();
        s.boxes.push(BoxObstacle { center: [2.5, 2.0], size: [0.4, 0.6], height: 0.5 });
        let pts = sense(&s, &s.start_pose(), &SensorConfig::default(), &mut rng());
        assert!(!pts.is_empty());
        for p in &pts {
            assert!((p.x - 2.3).abs() < 1e-5, "point off the facing side: {p:?}");
            assert!(p.y >= 1.7 - 1e-9 && p.y <= 2.3 + 1e-9);
            assert!(p.z >= 0.0 && p.z <= 0.5);
        }
        // every ray that meets the face in the slab oracle produces a column
        let o = s.start_pose().position();
        let n_hit = SensorConfig::default()
            .bearings()
            .iter()
            .filter(|b| {
                let y = o.y + 1.8 * b.tan();
                b.cos() > 0.0 && (1.7..=2.3).contains(&y)
            })
            .count();
        let n_cols = pts.iter().filter(|p| p.z == 0.0).count();
        assert_eq!(n_cols, n_hit);
    }

    #[test]
    fn box_behind_is_not_seen() {
        let mut s = empty();
        s.start = [3.0, 2.0, 0.0];
        s.boxes.push(BoxObstacle { center: [1.5, 2.0], size: [0.4, 0.4], height: 0.5 });
        assert!(sense(&s, &s.start_pose(), &SensorConfig::default(), &mut rng()).is_empty());
    }

    #[test]
    fn tall_box_occludes_what_lies_behind() {
        let mut s = empty();
        s.boxes.push(BoxObstacle { center: [2.0, 2.0], size: [0.2, 3.0], height: 0.5 });
        s.boxes.push(BoxObstacle { center: [3.0, 2.0], size: [0.2, 0.4], height: 0.5 });
        let pts = sense(&s, &s.start_pose(), &SensorConfig::default(), &mut rng());
        assert!(pts.iter().all(|p| p.x < 2.0));
    }

    #[test]
    fn lintel_is_not_mapped() {
        let mut s = empty();
        s.windows.push(WindowEntry {
            center: [2.0, 2.0],
            yaw: 0.0,
            width: 1.0,
            thickness: 0.05,
            sill: 0.13,
            opening: 0.7,
            lintel: 0.3,
        });
        let pts = sense(&s, &s.start_pose(), &SensorConfig::default(), &mut rng());
        assert!(!pts.is_empty());
        assert!(pts.iter().all(|p| p.z <= 0.13 + 1e-12));
    }

    #[test]
    fn noise_is_bounded_and_seeded() {
        let mut s = empty();
        s.boxes.push(BoxObstacle { center: [2.5, 2.0], size: [0.4, 0.6], height: 0.5 });
        let cfg = SensorConfig { noise_sigma: 0.01, ..Default::default() };
        let a = sense(&s, &s.start_pose(), &cfg, &mut rng());
        let b = sense(&s, &s.start_pose(), &cfg, &mut rng());
        assert_eq!(a, b);
        assert!(a.iter().all(|p| p.z <= 0.53 + 1e-12 && p.z >= -0.03 - 1e-12));
    }

    #[test]
    fn integrate_applies_the_height_rule() {
        let mut m = WorldMaps::new([0.0, 0.0, 2.0, 2.0], 0.13);
        m.integrate(&[Vector3::new(0.55, 0.55, 0.05)]);
        assert!(m.occupancy.is_free(5, 5));
        assert_eq!(m.heights.height_at(&Vector2::new(0.55, 0.55)), 0.05);
        m.integrate(&[Vector3::new(1.05, 1.05, 0.5)]);
        assert!(!m.occupancy.is_free(10, 10));
        m.integrate(&[Vector3::new(0.41, 0.41, 0.1), Vector3::new(0.59, 0.59, 0.12)]);
        assert_eq!(m.heights.height_at(&Vector2::new(0.5, 0.5)), 0.12);
        m.integrate(&[Vector3::new(0.45, 0.45, 0.13)]);
        assert!(m.occupancy.is_free(4, 4));
    }

    #[test]
    fn unknown_cells_follow_the_policy() {
        let mut g = OccupancyGrid::new([0.0, 0.0, 1.0, 1.0], 0.13);
        assert!(g.is_free(3, 3));
        g.pessimistic = true;
        assert!(!g.is_free(3, 3));
    }

    #[test]
    fn scenario_round_trips_and_validates() {
        let mut s = empty();
        s.boxes.push(BoxObstacle { center: [2.5, 2.0], size: [0.4, 0.6], height: 0.5 });
        let back = WorldScenario::parse(&s.to_text()).unwrap();
        assert_eq!(back, s);

        let mut bad = s.clone();
        bad.goal = [2.5, 2.0];
        assert!(matches!(bad.validate(), Err(WorldError::Invalid { field, .. }) if field == "goal"));
        let mut bad = s.clone();
        bad.boxes[0].height = -1.0;
        assert!(matches!(bad.validate(), Err(WorldError::Invalid { field, .. }) if field == "box[0].height"));
        assert!(matches!(WorldScenario::parse("bounds = [0, 0, 1"), Err(WorldError::Parse(_))));
    }

    #[test]
    fn pgm_export_has_header_and_rows() {
        let mut m = WorldMaps::new([0.0, 0.0, 0.5, 0.3], 0.13);
        m.integrate(&[Vector3::new(0.05, 0.05, 1.0)]);
        let mut buf = Vec::new();
        m.occupancy.write_pgm(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "P2");
        assert_eq!(lines[3], "5 3");
        assert_eq!(lines.last().unwrap().split(' ').next(), Some("0"));
    }

    #[test]
    fn wrap_angle_lands_in_half_open_interval() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
    }
}
