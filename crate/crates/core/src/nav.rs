//! Navigation: A* on the occupancy grid, lookahead waypoints, the
//! walk/stand/jump mode machine and the double-integrator local planner.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ad::{LocalFn, Scalar};
use crate::nlp::{Linear, Nlp, SolveOptions};
use crate::world::{wrap_angle, HeightMap, OccupancyGrid, RobotPoseEstimate, WindowEntry};

pub const DEFAULT_INFLATION: f64 = 0.4;
pub const DEFAULT_LOOKAHEAD: f64 = 0.3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NavError {
    #[error("no collision-free path to the goal")]
    NoPath,
    #[error("goal cell is occupied or inside the inflated obstacle set")]
    GoalOccupied,
    #[error("{0} lies outside the grid")]
    OutOfBounds(&'static str),
    #[error("local planner failed: {0}")]
    SolverFailure(String),
}

/// Cell-center waypoints from the start cell to the goal; the last point
/// is the goal itself.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalPath {
    pub cells: Vec<(usize, usize)>,
    pub points: Vec<Vector2<f64>>,
    /// Sum of cell-to-cell step lengths, m.
    pub cost: f64,
}

/// Cells closer than `inflation` (center to center) to an untraversable
/// cell, untraversable cells included.
pub fn inflate(grid: &OccupancyGrid, inflation: f64) -> Vec<bool> {
    let g = &grid.geometry;
    let mut blocked = vec![false; g.len()];
    let r = (inflation / g.resolution + 1e-9).floor() as isize;
    let r2 = (inflation / g.resolution).powi(2) + 1e-9;
    for j in 0..g.ny {
        for i in 0..g.nx {
            if grid.is_free(i, j) {
                continue;
            }
            for dj in -r..=r {
                for di in -r..=r {
                    let (ii, jj) = (i as isize + di, j as isize + dj);
                    if ii < 0 || jj < 0 || ii >= g.nx as isize || jj >= g.ny as isize {
                        continue;
                    }
                    if (di * di + dj * dj) as f64 <= r2 {
                        blocked[g.index(ii as usize, jj as usize)] = true;
                    }
                }
            }
        }
    }
    blocked
}

/// Distance from a cell center to the nearest untraversable cell center.
fn clearance_of(grid: &OccupancyGrid, i: usize, j: usize) -> f64 {
    let g = &grid.geometry;
    let mut best = f64::INFINITY;
    for jj in 0..g.ny {
        for ii in 0..g.nx {
            if !grid.is_free(ii, jj) {
                let d = ((ii as f64 - i as f64).powi(2) + (jj as f64 - j as f64).powi(2)).sqrt() * g.resolution;
                best = best.min(d);
            }
        }
    }
    best
}

pub const NEIGHBORS: [(isize, isize); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];

/// Successors of a cell in the blocked mask with step lengths. Diagonal
/// moves may not cut a blocked corner.
pub fn neighbors(
    nx: usize,
    ny: usize,
    blocked: &[bool],
    (i, j): (usize, usize),
) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
    let free = move |ii: isize, jj: isize| {
        ii >= 0 && jj >= 0 && (ii as usize) < nx && (jj as usize) < ny && !blocked[jj as usize * nx + ii as usize]
    };
    NEIGHBORS.iter().filter_map(move |&(di, dj)| {
        let (ii, jj) = (i as isize + di, j as isize + dj);
        if !free(ii, jj) {
            return None;
        }
        if di != 0 && dj != 0 && !(free(i as isize + di, j as isize) && free(i as isize, j as isize + dj)) {
            return None;
        }
        let step = if di != 0 && dj != 0 { std::f64::consts::SQRT_2 } else { 1.0 };
        Some(((ii as usize, jj as usize), step))
    })
}

#[derive(Debug, Clone, Copy)]
struct OpenEntry {
    f: f64,
    g: f64,
    order: u64,
    cell: usize,
}

impl PartialEq for OpenEntry {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}

impl Eq for OpenEntry {}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for OpenEntry {
    // reversed: BinaryHeap pops the greatest
    fn cmp(&self, o: &Self) -> Ordering {
        o.f.total_cmp(&self.f).then(o.g.total_cmp(&self.g)).then(o.order.cmp(&self.order))
    }
}

/// Shortest 8-connected path avoiding the inflated obstacle set. When the
/// start itself lies inside the inflation, the radius shrinks to the
/// start's clearance so the robot can leave.
pub fn plan_global(
    grid: &OccupancyGrid,
    start: Vector2<f64>,
    goal: Vector2<f64>,
    inflation: f64,
) -> Result<GlobalPath, NavError> {
    let g = &grid.geometry;
    let s = g.cell_of(&start).ok_or(NavError::OutOfBounds("start"))?;
    let t = g.cell_of(&goal).ok_or(NavError::OutOfBounds("goal"))?;
    let mut blocked = inflate(grid, inflation);
    if blocked[g.index(s.0, s.1)] && grid.is_free(s.0, s.1) {
        let c = clearance_of(grid, s.0, s.1);
        blocked = inflate(grid, (c - 0.5 * g.resolution).min(inflation));
    }
    if blocked[g.index(t.0, t.1)] {
        return Err(NavError::GoalOccupied);
    }
    blocked[g.index(s.0, s.1)] = false;

    let res = g.resolution;
    let h = |c: usize| {
        let (i, j) = (c % g.nx, c / g.nx);
        ((i as f64 - t.0 as f64).powi(2) + (j as f64 - t.1 as f64).powi(2)).sqrt()
    };
    let mut best = vec![f64::INFINITY; g.len()];
    let mut parent = vec![usize::MAX; g.len()];
    let mut closed = vec![false; g.len()];
    let mut open = BinaryHeap::new();
    let mut order = 0u64;
    let si = g.index(s.0, s.1);
    let ti = g.index(t.0, t.1);
    best[si] = 0.0;
    open.push(OpenEntry { f: h(si), g: 0.0, order, cell: si });
    while let Some(e) = open.pop() {
        if closed[e.cell] {
            continue;
        }
        closed[e.cell] = true;
        if e.cell == ti {
            break;
        }
        let here = (e.cell % g.nx, e.cell / g.nx);
        for ((ii, jj), step) in neighbors(g.nx, g.ny, &blocked, here) {
            let n = g.index(ii, jj);
            let ng = e.g + step;
            if !closed[n] && ng < best[n] {
                best[n] = ng;
                parent[n] = e.cell;
                order += 1;
                open.push(OpenEntry { f: ng + h(n), g: ng, order, cell: n });
            }
        }
    }
    if !closed[ti] {
        return Err(NavError::NoPath);
    }
    let mut cells = vec![ti];
    while *cells.last().expect("nonempty") != si {
        cells.push(parent[*cells.last().expect("nonempty")]);
    }
    cells.reverse();
    let cells: Vec<(usize, usize)> = cells.into_iter().map(|c| (c % g.nx, c / g.nx)).collect();
    let mut points: Vec<Vector2<f64>> = cells.iter().map(|&(i, j)| g.center(i, j)).collect();
    *points.last_mut().expect("nonempty") = goal;
    Ok(GlobalPath { cells, points, cost: best[ti] * res })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub point: Vector2<f64>,
    pub z_obs: f64,
    /// Index into the path.
    pub index: usize,
}

/// First path point at arc length ≥ `lookahead` past the path point
/// nearest the robot, or the goal when the path ends sooner.
pub fn select_waypoint(path: &GlobalPath, position: &Vector2<f64>, lookahead: f64, heights: &HeightMap) -> Waypoint {
    assert!(!path.points.is_empty(), "path must not be empty");
    let pts = &path.points;
    let nearest = (0..pts.len())
        .min_by(|&a, &b| (pts[a] - position).norm_squared().total_cmp(&(pts[b] - position).norm_squared()))
        .expect("nonempty");
    let mut arc = 0.0;
    let mut index = pts.len() - 1;
    for k in nearest + 1..pts.len() {
        arc += (pts[k] - pts[k - 1]).norm();
        if arc >= lookahead - 1e-9 {
            index = k;
            break;
        }
    }
    Waypoint { point: pts[index], z_obs: heights.height_at(&pts[index]), index }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LocomotionMode {
    Walking,
    Standing,
    Jumping,
}

impl LocomotionMode {
    pub fn name(self) -> &'static str {
        match self {
            LocomotionMode::Walking => "Walking",
            LocomotionMode::Standing => "Standing",
            LocomotionMode::Jumping => "Jumping",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [Self::Walking, Self::Standing, Self::Jumping].into_iter().find(|m| m.name() == s)
    }
}

/// Collapses repeated modes into the sequence of distinct segments.
pub fn mode_segments(trace: &[LocomotionMode]) -> Vec<LocomotionMode> {
    let mut out: Vec<LocomotionMode> = Vec::new();
    for &m in trace {
        if out.last() != Some(&m) {
            out.push(m);
        }
    }
    out
}

/// Whether the segment sequence reads `Walking (Standing Jumping Standing Walking)*`,
/// possibly cut short at the goal.
pub fn is_valid_mode_sequence(segments: &[LocomotionMode]) -> bool {
    use LocomotionMode::*;
    const CYCLE: [LocomotionMode; 4] = [Standing, Jumping, Standing, Walking];
    segments.first() == Some(&Walking)
        && segments.iter().enumerate().skip(1).all(|(k, &m)| m == CYCLE[(k - 1) % 4])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetCommand {
    pub waypoint: Vector2<f64>,
    pub yaw: f64,
    pub z_obs: f64,
    pub mode: LocomotionMode,
}

/// Where and how to jump: a point on the obstacle plane and its unit
/// normal, pointing in the crossing direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpSite {
    pub plane_point: Vector2<f64>,
    pub normal: Vector2<f64>,
}

impl JumpSite {
    /// Site on a known window, at the waypoint's projection onto the window
    /// plane (kept `margin` inside the opening), facing away from the robot.
    pub fn from_window(w: &WindowEntry, waypoint: &Vector2<f64>, robot: &Vector2<f64>, margin: f64) -> Self {
        let mut n = w.normal();
        let along = Vector2::new(-n.y, n.x);
        let half = (0.5 * w.width - margin).max(0.0);
        let s = (waypoint - w.center()).dot(&along).clamp(-half, half);
        let plane_point = w.center() + along * s;
        if (plane_point - robot).dot(&n) < 0.0 {
            n = -n;
        }
        Self { plane_point, normal: n }
    }

    /// Site estimated from the height map: the obstacle line is the principal
    /// axis of the nonzero tiles near the waypoint.
    pub fn from_tiles(heights: &HeightMap, waypoint: &Vector2<f64>, robot: &Vector2<f64>, radius: f64) -> Self {
        let g = &heights.geometry;
        let pts: Vec<Vector2<f64>> = (0..g.ny)
            .flat_map(|j| (0..g.nx).map(move |i| (i, j)))
            .filter(|&(i, j)| heights.tile(i, j) > 0.0)
            .map(|(i, j)| g.center(i, j))
            .filter(|c| (c - waypoint).norm() <= radius)
            .collect();
        let toward = (waypoint - robot).try_normalize(1e-12).unwrap_or(Vector2::x());
        if pts.len() < 2 {
            return Self { plane_point: *waypoint, normal: toward };
        }
        let c = pts.iter().sum::<Vector2<f64>>() / pts.len() as f64;
        let cov = pts.iter().fold(Matrix2::zeros(), |acc, p| acc + (p - c) * (p - c).transpose());
        let eig = cov.symmetric_eigen();
        let k = if eig.eigenvalues[0] >= eig.eigenvalues[1] { 0 } else { 1 };
        let axis: Vector2<f64> = eig.eigenvectors.column(k).into();
        let mut n = Vector2::new(-axis.y, axis.x);
        if eig.eigenvalues[0] == eig.eigenvalues[1] {
            n = toward;
        }
        if n.dot(&toward) < 0.0 {
            n = -n;
        }
        Self { plane_point: c, normal: n }
    }

    pub fn station(&self, standoff: f64) -> Vector2<f64> {
        self.plane_point - self.normal * standoff
    }

    pub fn yaw(&self) -> f64 {
        self.normal.y.atan2(self.normal.x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModeConfig {
    pub standoff: f64,
    pub position_tol: f64,
    pub yaw_tol: f64,
    pub jumpable_height: f64,
}

impl Default for ModeConfig {
    fn default() -> Self {
        Self { standoff: 0.4, position_tol: 0.05, yaw_tol: 0.05, jumpable_height: crate::world::JUMPABLE_WITH_PAYLOAD }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpStatus {
    Idle,
    InProgress,
    Landed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeldTarget {
    pub site: JumpSite,
    pub z_obs: f64,
}

/// Walk/stand/jump switching. Standing is interposed on every change.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeMachine {
    pub config: ModeConfig,
    pub mode: LocomotionMode,
    pub held: Option<HeldTarget>,
    landed: bool,
}

impl ModeMachine {
    pub fn new(config: ModeConfig) -> Self {
        Self { config, mode: LocomotionMode::Walking, held: None, landed: false }
    }

    /// Whether a waypoint's obstacle height calls for a jump.
    pub fn wants_jump(&self, z_obs: f64) -> bool {
        z_obs > 0.0 && z_obs <= self.config.jumpable_height + crate::world::HEIGHT_EPS
    }

    /// One decision step. `site` locates the obstacle when the waypoint
    /// calls for a jump and no target is held yet.
    pub fn step(
        &mut self,
        pose: &RobotPoseEstimate,
        waypoint: &Waypoint,
        site: Option<JumpSite>,
        status: JumpStatus,
    ) -> TargetCommand {
        use LocomotionMode::*;
        let here = pose.position();
        match self.mode {
            Walking => {
                if self.held.is_none() && self.wants_jump(waypoint.z_obs) {
                    if let Some(site) = site {
                        self.held = Some(HeldTarget { site, z_obs: waypoint.z_obs });
                    }
                }
                if let Some(h) = self.held {
                    let station = h.site.station(self.config.standoff);
                    let yaw = h.site.yaw();
                    let at = (station - here).norm() <= self.config.position_tol
                        && wrap_angle(pose.yaw - yaw).abs() <= self.config.yaw_tol;
                    if at {
                        self.mode = Standing;
                    }
                    return TargetCommand { waypoint: station, yaw, z_obs: h.z_obs, mode: self.mode };
                }
                let d = waypoint.point - here;
                let yaw = if d.norm() > 1e-9 { d.y.atan2(d.x) } else { pose.yaw };
                TargetCommand { waypoint: waypoint.point, yaw, z_obs: 0.0, mode: Walking }
            }
            Standing => {
                if self.landed {
                    self.landed = false;
                    self.held = None;
                    self.mode = Walking;
                    let d = waypoint.point - here;
                    let yaw = if d.norm() > 1e-9 { d.y.atan2(d.x) } else { pose.yaw };
                    return TargetCommand { waypoint: waypoint.point, yaw, z_obs: 0.0, mode: Walking };
                }
                let h = self.held.expect("standing before a jump holds a target");
                self.mode = Jumping;
                TargetCommand { waypoint: h.site.station(self.config.standoff), yaw: h.site.yaw(), z_obs: h.z_obs, mode: Jumping }
            }
            Jumping => {
                let h = self.held.expect("jumping holds a target");
                if status == JumpStatus::Landed {
                    self.mode = Standing;
                    self.landed = true;
                }
                TargetCommand { waypoint: h.site.plane_point, yaw: h.site.yaw(), z_obs: h.z_obs, mode: self.mode }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalPlannerConfig {
    pub nodes: usize,
    pub horizon: f64,
    pub v_max: f64,
    pub yaw_rate_max: f64,
    pub effort_weight: f64,
}

impl Default for LocalPlannerConfig {
    fn default() -> Self {
        Self { nodes: 30, horizon: 1.0, v_max: 0.5, yaw_rate_max: 1.0, effort_weight: 1e-3 }
    }
}

/// Planar and yaw velocities, one row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityPlan {
    pub dt: f64,
    pub velocity: Vec<[f64; 3]>,
    pub position: Vec<[f64; 3]>,
}

impl VelocityPlan {
    pub fn zero(cfg: &LocalPlannerConfig, pose: [f64; 3]) -> Self {
        Self { dt: cfg.horizon / (cfg.nodes - 1) as f64, velocity: vec![[0.0; 3]; cfg.nodes], position: vec![pose; cfg.nodes] }
    }

    /// Piecewise-linear velocity at time `t` into the plan.
    pub fn velocity_at(&self, t: f64) -> [f64; 3] {
        let s = (t / self.dt).clamp(0.0, (self.velocity.len() - 1) as f64);
        let k = (s.floor() as usize).min(self.velocity.len() - 2);
        let a = s - k as f64;
        std::array::from_fn(|i| self.velocity[k][i] * (1.0 - a) + self.velocity[k + 1][i] * a)
    }
}

/// Smoothed Euclidean distance `sqrt(|p − target|² + ε²)`.
struct TerminalDistance {
    target: [f64; 3],
}

const DISTANCE_SMOOTHING: f64 = 1e-4;

impl LocalFn for TerminalDistance {
    fn n_in(&self) -> usize {
        3
    }
    fn n_out(&self) -> usize {
        1
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let mut acc = S::cst(DISTANCE_SMOOTHING * DISTANCE_SMOOTHING);
        for i in 0..3 {
            acc += (x[i] - self.target[i]).sq();
        }
        out[0] = acc.sqrt();
    }
}

/// Velocity plan steering the robot's position and yaw toward the command
/// over a short horizon, under a double-integrator model with velocity
/// bounds.
pub fn plan_local(
    pose: &RobotPoseEstimate,
    cmd: &TargetCommand,
    cfg: &LocalPlannerConfig,
) -> Result<VelocityPlan, NavError> {
    let n = cfg.nodes;
    if n < 2 || !(cfg.horizon > 0.0) {
        return Err(NavError::SolverFailure("need at least two nodes and a positive horizon".into()));
    }
    let h = cfg.horizon / (n - 1) as f64;
    let p0 = [pose.x, pose.y, pose.yaw];
    let target = [cmd.waypoint.x, cmd.waypoint.y, pose.yaw + wrap_angle(cmd.yaw - pose.yaw)];
    let limit = [cfg.v_max, cfg.v_max, cfg.yaw_rate_max];
    let v0: [f64; 3] = std::array::from_fn(|i| [pose.velocity[0], pose.velocity[1], pose.velocity[3]][i].clamp(-limit[i], limit[i]));

    let mut nlp = Nlp::new();
    let mut p = vec![[0usize; 3]; n];
    let mut v = vec![[0usize; 3]; n];
    let mut a = vec![[0usize; 3]; n];
    for k in 0..n {
        let stage = k as u64;
        for i in 0..3 {
            p[k][i] = if k == 0 { nlp.add_var(p0[i], p0[i], p0[i], stage) } else { nlp.add_var(f64::NEG_INFINITY, f64::INFINITY, p0[i], stage) };
            v[k][i] = if k == 0 { nlp.add_var(v0[i], v0[i], v0[i], stage) } else { nlp.add_var(-limit[i], limit[i], 0.0, stage) };
            a[k][i] = nlp.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0, stage);
            nlp.add_quadratic(a[k][i], cfg.effort_weight * h, 0.0);
        }
    }
    let defect = || Linear(vec![-1.0, 1.0, -0.5 * h, -0.5 * h]);
    for k in 0..n - 1 {
        for i in 0..3 {
            nlp.add_constraint(vec![p[k][i], p[k + 1][i], v[k][i], v[k + 1][i]], defect(), vec![0.0], vec![0.0], "position_defect", k);
            nlp.add_constraint(vec![v[k][i], v[k + 1][i], a[k][i], a[k + 1][i]], defect(), vec![0.0], vec![0.0], "velocity_defect", k);
        }
    }
    nlp.add_objective(p[n - 1].to_vec(), TerminalDistance { target });
    let opts = SolveOptions { max_iter: 300, tol: 1e-9, ..Default::default() };
    let sol = nlp.solve(&opts).map_err(|e| NavError::SolverFailure(e.to_string()))?;
    let velocity = v.iter().map(|vi| std::array::from_fn(|i| sol.x[vi[i]].clamp(-limit[i], limit[i]))).collect();
    let position = p.iter().map(|pi| std::array::from_fn(|i| sol.x[pi[i]])).collect();
    Ok(VelocityPlan { dt: h, velocity, position })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{GridGeometry, Pose2};

    fn open_grid(nx: usize, ny: usize, res: f64) -> OccupancyGrid {
        let g = GridGeometry { origin: Vector2::zeros(), resolution: res, nx, ny };
        OccupancyGrid::from_cells(g, &vec![true; nx * ny])
    }

    fn pose(x: f64, y: f64, yaw: f64) -> RobotPoseEstimate {
        RobotPoseEstimate { x, y, z: 0.0, yaw, velocity: [0.0; 4] }
    }

    #[test]
    fn straight_path_in_free_space() {
        let g = open_grid(20, 20, 1.0);
        let p = plan_global(&g, Vector2::new(0.0, 0.0), Vector2::new(10.0, 0.0), 0.4).unwrap();
        assert!((p.cost - 10.0).abs() < 1e-12);
        assert!(p.cells.iter().all(|c| c.1 == 0));
    }

    #[test]
    fn crossing_wall_means_no_path() {
        let g = GridGeometry { origin: Vector2::zeros(), resolution: 0.1, nx: 40, ny: 20 };
        let free: Vec<bool> = (0..g.len()).map(|k| k % 40 != 20).collect();
        let grid = OccupancyGrid::from_cells(g, &free);
        let r = plan_global(&grid, Vector2::new(0.2, 1.0), Vector2::new(3.8, 1.0), 0.4);
        assert_eq!(r, Err(NavError::NoPath));
        let r = plan_global(&grid, Vector2::new(0.2, 1.0), Vector2::new(2.05, 1.0), 0.4);
        assert_eq!(r, Err(NavError::GoalOccupied));
    }

    #[test]
    fn inflation_keeps_the_path_away_from_obstacles() {
        let g = GridGeometry { origin: Vector2::zeros(), resolution: 0.1, nx: 50, ny: 30 };
        let free: Vec<bool> = (0..g.len()).map(|k| !(k % 50 == 25 && k / 50 < 20)).collect();
        let grid = OccupancyGrid::from_cells(g, &free);
        let p = plan_global(&grid, Vector2::new(0.5, 0.5), Vector2::new(4.5, 0.5), 0.4).unwrap();
        for &(i, j) in &p.cells {
            for jj in 0..20 {
                let d = ((i as f64 - 25.0).powi(2) + (j as f64 - jj as f64).powi(2)).sqrt() * 0.1;
                assert!(d > 0.4 + 1e-9);
            }
        }
    }

    #[test]
    fn start_inside_inflation_can_escape() {
        let g = GridGeometry { origin: Vector2::zeros(), resolution: 0.1, nx: 40, ny: 40 };
        let free: Vec<bool> = (0..g.len()).map(|k| k % 40 != 20 || k / 40 < 30).collect();
        let grid = OccupancyGrid::from_cells(g, &free);
        assert!(plan_global(&grid, Vector2::new(2.25, 3.15), Vector2::new(0.5, 0.5), 0.4).is_ok());
    }

    fn straight_path(len: f64) -> GlobalPath {
        let n = (len / 0.1).round() as usize;
        let points: Vec<Vector2<f64>> = (0..=n).map(|k| Vector2::new(0.05 + 0.1 * k as f64, 0.05)).collect();
        GlobalPath { cells: (0..=n).map(|k| (k, 0)).collect(), points, cost: len }
    }

    #[test]
    fn waypoint_lookahead_and_end_clamp() {
        let hm = HeightMap::new([0.0, 0.0, 3.0, 1.0]);
        let path = straight_path(2.0);
        let w = select_waypoint(&path, &Vector2::new(0.05, 0.05), 0.3, &hm);
        assert!((w.point.x - 0.35).abs() < 1e-12);
        let w = select_waypoint(&path, &Vector2::new(1.9, 0.05), 0.3, &hm);
        assert_eq!(w.point, *path.points.last().unwrap());
    }

    #[test]
    fn waypoint_reads_tile_height() {
        let mut maps = crate::world::WorldMaps::new([0.0, 0.0, 3.0, 1.0], 0.13);
        maps.integrate(&[nalgebra::Vector3::new(0.3, 0.1, 0.13)]);
        let w = select_waypoint(&straight_path(2.0), &Vector2::new(0.05, 0.05), 0.3, &maps.heights);
        assert_eq!(w.z_obs, 0.13);
    }

    #[test]
    fn walking_yaw_points_at_the_waypoint() {
        let mut m = ModeMachine::new(ModeConfig::default());
        let w = Waypoint { point: Vector2::new(1.0, 1.0), z_obs: 0.0, index: 0 };
        let c = m.step(&pose(0.0, 0.0, 0.0), &w, None, JumpStatus::Idle);
        assert_eq!(c.mode, LocomotionMode::Walking);
        assert!((c.yaw - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn mode_sequence_through_a_jump() {
        use LocomotionMode::*;
        let mut m = ModeMachine::new(ModeConfig::default());
        let site = JumpSite { plane_point: Vector2::new(1.0, 0.0), normal: Vector2::x() };
        let w = Waypoint { point: Vector2::new(1.0, 0.0), z_obs: 0.13, index: 0 };
        let far = pose(0.0, 0.3, 0.5);
        let c = m.step(&far, &w, Some(site), JumpStatus::Idle);
        assert_eq!((c.mode, c.waypoint), (Walking, Vector2::new(0.6, 0.0)));
        assert!(c.yaw.abs() < 1e-12);
        let moved = Waypoint { point: Vector2::new(3.0, 3.0), z_obs: 0.0, index: 0 };
        let c = m.step(&far, &moved, None, JumpStatus::Idle);
        assert_eq!(c.waypoint, Vector2::new(0.6, 0.0));
        let at = pose(0.62, 0.01, 0.02);
        let mut trace = vec![];
        for status in [JumpStatus::Idle, JumpStatus::Idle, JumpStatus::InProgress, JumpStatus::Landed] {
            trace.push(m.step(&at, &w, Some(site), status).mode);
        }
        let after = Waypoint { point: Vector2::new(2.0, 0.0), z_obs: 0.0, index: 0 };
        trace.push(m.step(&pose(1.3, 0.0, 0.0), &after, None, JumpStatus::Idle).mode);
        assert_eq!(trace, vec![Standing, Jumping, Jumping, Standing, Walking]);
        assert!(m.held.is_none());
        let mut full = vec![Walking];
        full.extend(trace);
        assert!(is_valid_mode_sequence(&mode_segments(&full)));
    }

    #[test]
    fn mode_sequence_grammar() {
        use LocomotionMode::*;
        assert!(is_valid_mode_sequence(&[Walking]));
        assert!(is_valid_mode_sequence(&[Walking, Standing, Jumping, Standing, Walking]));
        assert!(is_valid_mode_sequence(&[Walking, Standing, Jumping, Standing]));
        assert!(!is_valid_mode_sequence(&[Walking, Jumping]));
        assert!(!is_valid_mode_sequence(&[Standing, Walking]));
    }

    #[test]
    fn site_from_window_faces_away_from_the_robot() {
        let w = WindowEntry { center: [2.0, 1.0], yaw: 0.0, width: 1.0, thickness: 0.05, sill: 0.13, opening: 0.7, lintel: 0.3 };
        let s = JumpSite::from_window(&w, &Vector2::new(2.0, 1.9), &Vector2::new(3.0, 1.0), 0.2);
        assert_eq!(s.normal, -Vector2::x());
        assert!((s.plane_point - Vector2::new(2.0, 1.3)).norm() < 1e-12);
        assert!((s.station(0.4) - Vector2::new(2.4, 1.3)).norm() < 1e-12);
    }

    #[test]
    fn site_from_tiles_is_perpendicular_to_a_wall() {
        let mut maps = crate::world::WorldMaps::new([0.0, 0.0, 4.0, 4.0], 0.13);
        let pts: Vec<_> = (0..10).map(|k| nalgebra::Vector3::new(2.05, 1.5 + 0.1 * k as f64, 0.13)).collect();
        maps.integrate(&pts);
        let s = JumpSite::from_tiles(&maps.heights, &Vector2::new(2.05, 2.0), &Vector2::new(1.0, 2.2), 0.6);
        assert!((s.normal - Vector2::x()).norm() < 1e-9);
    }

    #[test]
    fn local_plan_reaches_a_near_waypoint() {
        let cmd = TargetCommand { waypoint: Vector2::new(0.2, 0.0), yaw: 0.0, z_obs: 0.0, mode: LocomotionMode::Walking };
        let cfg = LocalPlannerConfig { v_max: 5.0, yaw_rate_max: 5.0, ..Default::default() };
        let plan = plan_local(&pose(0.0, 0.0, 0.0), &cmd, &cfg).unwrap();
        let last = plan.position.last().unwrap();
        assert!(((last[0] - 0.2).powi(2) + last[1].powi(2)).sqrt() <= 1e-4, "{last:?}");
        assert_eq!(plan.velocity.len(), 30);
    }

    #[test]
    fn local_plan_saturates_toward_a_far_waypoint() {
        let cmd = TargetCommand { waypoint: Vector2::new(10.0, 0.0), yaw: 0.0, z_obs: 0.0, mode: LocomotionMode::Walking };
        let cfg = LocalPlannerConfig::default();
        let plan = plan_local(&pose(0.0, 0.0, 0.0), &cmd, &cfg).unwrap();
        assert!(plan.velocity.iter().flatten().all(|v| v.abs() <= 0.5 + 1e-9));
        let x = plan.position.last().unwrap()[0];
        assert!(x > 0.4 && x <= 0.5 + 1e-9, "{x}");
    }

    #[test]
    fn local_plan_at_target_is_still() {
        let cmd = TargetCommand { waypoint: Vector2::new(1.0, 2.0), yaw: 0.3, z_obs: 0.0, mode: LocomotionMode::Walking };
        let plan = plan_local(&pose(1.0, 2.0, 0.3), &cmd, &LocalPlannerConfig::default()).unwrap();
        assert!(plan.velocity.iter().flatten().all(|v| v.abs() < 1e-6));
        let _ = Pose2::default();
    }
}
