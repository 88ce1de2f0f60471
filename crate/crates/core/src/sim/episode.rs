//! Full navigation episodes: mapping, planning, walking and jumping in a
//! scenario until the goal is reached.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::PathBuf;

use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    point_clearance, simulate_jump, simulate_walk, ContactEventKind, GainSchedule, JumpRun, SimConfig, SimError,
    WalkConfig, WalkState,
};
use crate::collision::WindowObstacle;
use crate::jump::{io, solve, JumpError, JumpProblem, JumpTrajectory, SolverConfig, STAND_HIP, STAND_KNEE};
use crate::model::{self, ModelParams, PAYLOAD_MASS};
use crate::nav::{
    plan_global, plan_local, select_waypoint, GlobalPath, JumpSite, JumpStatus, LocalPlannerConfig, LocomotionMode,
    ModeConfig, ModeMachine, NavError, VelocityPlan, DEFAULT_INFLATION, DEFAULT_LOOKAHEAD,
};
use crate::world::{
    sense, PoseNoise, Pose2, RobotPoseEstimate, SensorConfig, WindowEntry, WorldMaps, WorldScenario,
};

pub const EPISODE_SCHEMA: &str = "quadjump-episode v1";
pub const SUMMARY_SCHEMA: &str = "quadjump-episode-summary v1";
pub const MODE_TRACE_SCHEMA: &str = "quadjump-mode-trace v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeConfig {
    pub sensor: SensorConfig,
    pub pose_noise: PoseNoise,
    pub mode: ModeConfig,
    pub local: LocalPlannerConfig,
    pub walk: WalkConfig,
    pub gains: GainSchedule,
    pub sim: SimConfig,
    pub inflation: f64,
    pub lookahead: f64,
    pub goal_tolerance: f64,
    /// Simulated-time budget, s.
    pub timeout: f64,
    /// Period of the decision loop and local replanning, s.
    pub control_period: f64,
    /// Global replanning period when the map is unchanged, s.
    pub replan_period: f64,
    pub d_min: f64,
    /// Lateral margin kept inside a window opening, and the search radius
    /// for estimating an obstacle line from the height map.
    pub site_margin: f64,
    /// Opening assumed when an obstacle is only known from the height map.
    pub fallback_opening: f64,
    /// Largest final pitch of an acceptable landing, rad.
    pub max_landing_pitch: f64,
    pub seed: u64,
    /// Treat never-observed cells as blocked.
    pub pessimistic: bool,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            sensor: SensorConfig::default(),
            pose_noise: PoseNoise::default(),
            mode: ModeConfig::default(),
            local: LocalPlannerConfig::default(),
            walk: WalkConfig::default(),
            gains: GainSchedule::default(),
            sim: SimConfig::default(),
            inflation: DEFAULT_INFLATION,
            lookahead: DEFAULT_LOOKAHEAD,
            goal_tolerance: 0.2,
            timeout: 120.0,
            control_period: 0.1,
            replan_period: 1.0,
            d_min: 0.03,
            site_margin: 0.3,
            fallback_opening: 0.7,
            max_landing_pitch: 0.3,
            seed: 0,
            pessimistic: false,
        }
    }
}

/// Geometry that determines a jump trajectory, rounded so that nearly equal
/// obstacles share a solve: payload in grams, lengths in millimetres and
/// `d_min` in tenths of a millimetre.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct JumpKey {
    pub payload_g: i64,
    pub standoff_mm: i64,
    pub sill_mm: i64,
    pub opening_mm: i64,
    pub thickness_mm: i64,
    pub lintel_mm: i64,
    pub d_min_tenth_mm: i64,
}

/// Window cross-section to jump through.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpSpec {
    pub sill: f64,
    pub opening: f64,
    pub thickness: f64,
    pub lintel: f64,
}

impl JumpSpec {
    pub fn from_window(w: &WindowEntry) -> Self {
        Self { sill: w.sill, opening: w.opening, thickness: w.thickness, lintel: w.lintel }
    }

    pub fn obstacle(&self, distance: f64) -> Result<WindowObstacle, crate::collision::CollisionError> {
        WindowObstacle::new(distance, self.thickness, self.sill, self.opening, self.sill + self.opening + self.lintel)
    }

    pub fn key(&self, payload: f64, standoff: f64, d_min: f64) -> JumpKey {
        let mm = |v: f64| (v * 1e3).round() as i64;
        JumpKey {
            payload_g: mm(payload),
            standoff_mm: mm(standoff),
            sill_mm: mm(self.sill),
            opening_mm: mm(self.opening),
            thickness_mm: mm(self.thickness),
            lintel_mm: mm(self.lintel),
            d_min_tenth_mm: (d_min * 1e4).round() as i64,
        }
    }
}

impl JumpKey {
    pub fn file_name(&self) -> String {
        format!(
            "jump_p{}_s{}_h{}_o{}_t{}_l{}_d{}.traj",
            self.payload_g,
            self.standoff_mm,
            self.sill_mm,
            self.opening_mm,
            self.thickness_mm,
            self.lintel_mm,
            self.d_min_tenth_mm
        )
    }
}

/// Jump trajectories by obstacle geometry, solved on first use and
/// optionally persisted as trajectory files in a directory.
#[derive(Debug, Default)]
pub struct JumpCache {
    pub dir: Option<PathBuf>,
    pub solver: SolverConfig,
    entries: HashMap<JumpKey, JumpTrajectory>,
    solves: usize,
}

impl JumpCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_dir(dir: impl Into<PathBuf>) -> Self {
        Self { dir: Some(dir.into()), ..Self::default() }
    }

    /// Number of trajectories optimized by this cache so far.
    pub fn solves(&self) -> usize {
        self.solves
    }

    pub fn insert(&mut self, key: JumpKey, traj: JumpTrajectory) {
        self.entries.insert(key, traj);
    }

    pub fn get_or_solve(
        &mut self,
        spec: &JumpSpec,
        params: &ModelParams,
        payload: f64,
        standoff: f64,
        d_min: f64,
    ) -> Result<(JumpKey, &JumpTrajectory), JumpError> {
        let key = spec.key(payload, standoff, d_min);
        if !self.entries.contains_key(&key) {
            let traj = match self.load(&key) {
                Some(t) => t,
                None => {
                    let obstacle = spec
                        .obstacle(standoff)
                        .map_err(|e| JumpError::InconsistentProblem(e.to_string()))?;
                    let problem = JumpProblem::standing(params.clone(), obstacle.clone(), d_min);
                    let traj = solve(&problem, &self.solver)?;
                    self.solves += 1;
                    self.store(&key, &traj, params, &obstacle);
                    traj
                }
            };
            self.entries.insert(key, traj);
        }
        Ok((key, &self.entries[&key]))
    }

    fn load(&self, key: &JumpKey) -> Option<JumpTrajectory> {
        let path = self.dir.as_ref()?.join(key.file_name());
        let f = File::open(path).ok()?;
        io::read_trajectory(BufReader::new(f)).ok()
    }

    fn store(&self, key: &JumpKey, traj: &JumpTrajectory, params: &ModelParams, obstacle: &WindowObstacle) {
        let Some(dir) = &self.dir else { return };
        if std::fs::create_dir_all(dir).is_err() {
            return;
        }
        if let Ok(f) = File::create(dir.join(key.file_name())) {
            let _ = io::write_trajectory(traj, params, obstacle, std::io::BufWriter::new(f));
        }
    }
}

/// One decision-loop tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    pub t: f64,
    pub mode: LocomotionMode,
    pub pose: Pose2,
    pub estimate: Pose2,
    pub waypoint: Vector2<f64>,
    pub z_obs: f64,
    pub command: Vector2<f64>,
    pub command_yaw: f64,
    /// Planar distance from the base to the nearest obstacle footprint.
    pub obstacle_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeEvent {
    pub t: f64,
    pub kind: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpRecord {
    pub t_start: f64,
    pub key: JumpKey,
    pub site: JumpSite,
    /// Distance from the base to the obstacle plane at take-off.
    pub distance: f64,
    pub run: JumpRun,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSummary {
    pub goal_reached: bool,
    pub time: f64,
    pub final_position: Vector2<f64>,
    pub goal_distance: f64,
    pub jumps: usize,
    pub replans: usize,
    pub min_obstacle_distance: f64,
    pub min_jump_clearance: Option<f64>,
    /// Landing x of each jump, measured from its take-off station.
    pub landing_x: Vec<f64>,
    pub mode_segments: Vec<LocomotionMode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub scenario: String,
    pub seed: u64,
    pub records: Vec<EpisodeRecord>,
    pub events: Vec<EpisodeEvent>,
    pub jumps: Vec<JumpRecord>,
    pub maps: WorldMaps,
    pub summary: EpisodeSummary,
}

impl EpisodeLog {
    pub fn mode_trace(&self) -> Vec<LocomotionMode> {
        self.records.iter().map(|r| r.mode).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EpisodeFailure {
    #[error("timed out after {0:.1} s of simulated time")]
    Timeout(f64),
    #[error("no path to the goal: {0}")]
    NoPath(NavError),
    #[error("jump infeasible: {0}")]
    JumpInfeasible(String),
    #[error("jump failed: {0}")]
    JumpFailed(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("invalid scenario: {0}")]
    Scenario(String),
}

/// A failed episode, with the log up to the failure.
#[derive(Debug, Clone, Error)]
#[error("{failure}")]
pub struct EpisodeError {
    pub failure: EpisodeFailure,
    pub log: Box<EpisodeLog>,
}

struct Runner<'a> {
    scenario: &'a WorldScenario,
    cfg: &'a EpisodeConfig,
    params: ModelParams,
    payload: f64,
    stand_z: f64,
    rng: ChaCha8Rng,
    log: EpisodeLog,
}

/// Runs the sense, map, plan, act loop until the goal is reached or the
/// time budget runs out.
pub fn run_episode(
    scenario: &WorldScenario,
    cfg: &EpisodeConfig,
    cache: &mut JumpCache,
) -> Result<EpisodeLog, EpisodeError> {
    let payload = if scenario.payload { PAYLOAD_MASS } else { 0.0 };
    let params = ModelParams::default().with_payload(payload);
    let stand_z = model::standing_config(&params, 0.0, STAND_HIP, STAND_KNEE).z;
    let mut maps = WorldMaps::for_scenario(scenario);
    maps.occupancy.pessimistic = cfg.pessimistic;
    let mut r = Runner {
        scenario,
        cfg,
        params,
        payload,
        stand_z,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        log: EpisodeLog {
            scenario: scenario.name.clone(),
            seed: cfg.seed,
            records: Vec::new(),
            events: Vec::new(),
            jumps: Vec::new(),
            maps,
            summary: EpisodeSummary {
                goal_reached: false,
                time: 0.0,
                final_position: scenario.start_pose().position(),
                goal_distance: f64::INFINITY,
                jumps: 0,
                replans: 0,
                min_obstacle_distance: f64::INFINITY,
                min_jump_clearance: None,
                landing_x: Vec::new(),
                mode_segments: Vec::new(),
            },
        },
    };
    let outcome = r.run(cache);
    r.finish();
    match outcome {
        Ok(()) => Ok(r.log),
        Err(failure) => {
            r.log.events.push(EpisodeEvent { t: r.log.summary.time, kind: "failure".into(), detail: failure.to_string() });
            Err(EpisodeError { failure, log: Box::new(r.log) })
        }
    }
}

impl Runner<'_> {
    fn run(&mut self, cache: &mut JumpCache) -> Result<(), EpisodeFailure> {
        let cfg = self.cfg;
        let scenario = self.scenario;
        scenario.validate().map_err(|e| EpisodeFailure::Scenario(e.to_string()))?;
        if !(cfg.control_period > 0.0 && cfg.timeout > 0.0) {
            return Err(SimError::Config("control period and timeout must be positive".into()).into());
        }
        cfg.gains.validate()?;
        cfg.sim.substeps()?;
        let prisms = scenario.prisms();
        let goal = scenario.goal();
        let mut machine = ModeMachine::new(ModeConfig { jumpable_height: scenario.jumpable(), ..cfg.mode });
        let mut truth = WalkState { t: 0.0, pose: scenario.start_pose(), body_velocity: [0.0; 3] };
        let mut path: Option<GlobalPath> = None;
        let mut last_plan = f64::NEG_INFINITY;
        let mut status = JumpStatus::Idle;
        let mut t = 0.0;

        loop {
            self.log.summary.time = t;
            self.log.summary.final_position = truth.pose.position();
            let points = sense(scenario, &truth.pose, &cfg.sensor, &mut self.rng);
            let changed = self.log.maps.integrate(&points);

            let w = truth.world_velocity();
            let est = RobotPoseEstimate::observe(&truth.pose, self.stand_z, [w[0], w[1], 0.0, w[2]], &cfg.pose_noise, &mut self.rng);
            let here = est.position();
            self.log.summary.goal_distance = (truth.pose.position() - goal).norm();

            if machine.mode == LocomotionMode::Walking && (here - goal).norm() <= cfg.goal_tolerance {
                self.log.summary.goal_reached = true;
                self.event(t, "goal", format!("reached at ({:.3}, {:.3})", here.x, here.y));
                return Ok(());
            }
            if t >= cfg.timeout {
                return Err(EpisodeFailure::Timeout(t));
            }

            if changed || path.is_none() || t - last_plan >= cfg.replan_period - 1e-9 {
                let p = plan_global(&self.log.maps.occupancy, here, goal, cfg.inflation).map_err(EpisodeFailure::NoPath)?;
                if changed {
                    self.event(t, "map-update", format!("path cost {:.3}", p.cost));
                }
                path = Some(p);
                last_plan = t;
                self.log.summary.replans += 1;
            }
            let wp = select_waypoint(path.as_ref().expect("planned above"), &here, cfg.lookahead, &self.log.maps.heights);
            let site = (machine.held.is_none() && machine.wants_jump(wp.z_obs)).then(|| self.site_for(&wp.point, &here));
            let cmd = machine.step(&est, &wp, site, status);
            status = JumpStatus::Idle;

            self.log.records.push(EpisodeRecord {
                t,
                mode: cmd.mode,
                pose: truth.pose,
                estimate: est.pose(),
                waypoint: wp.point,
                z_obs: wp.z_obs,
                command: cmd.waypoint,
                command_yaw: cmd.yaw,
                obstacle_distance: point_clearance(&truth.pose.position(), &prisms),
            });

            match cmd.mode {
                LocomotionMode::Walking => {
                    let plan = plan_local(&est, &cmd, &cfg.local).unwrap_or_else(|e| {
                        self.event(t, "local-planner", e.to_string());
                        VelocityPlan::zero(&cfg.local, [est.x, est.y, est.yaw])
                    });
                    let trace = simulate_walk(&truth, &plan, cfg.control_period, &cfg.walk, &mut self.rng);
                    if let Some(last) = trace.last() {
                        truth = *last;
                    }
                    t += cfg.control_period;
                }
                LocomotionMode::Standing => {
                    truth.body_velocity = [0.0; 3];
                    t += cfg.control_period;
                }
                LocomotionMode::Jumping => {
                    let held = machine.held.expect("jumping holds a target");
                    let duration = self.jump(cache, t, &mut truth, &held.site, held.z_obs)?;
                    status = JumpStatus::Landed;
                    t += duration;
                }
            }
            truth.t = t;
        }
    }

    fn site_for(&self, waypoint: &Vector2<f64>, here: &Vector2<f64>) -> JumpSite {
        match self.scenario.window_at(waypoint, self.cfg.site_margin) {
            Some(w) => JumpSite::from_window(w, waypoint, here, self.cfg.site_margin),
            None => JumpSite::from_tiles(&self.log.maps.heights, waypoint, here, 2.0 * self.cfg.site_margin),
        }
    }

    fn jump_spec(&self, site: &JumpSite, z_obs: f64) -> JumpSpec {
        let probe = site.plane_point;
        match self.scenario.window_at(&probe, self.cfg.site_margin) {
            Some(w) => JumpSpec::from_window(w),
            None => JumpSpec { sill: z_obs, opening: self.cfg.fallback_opening, thickness: 0.05, lintel: 0.3 },
        }
    }

    /// Executes one jump from the current pose and returns its duration.
    fn jump(
        &mut self,
        cache: &mut JumpCache,
        t: f64,
        truth: &mut WalkState,
        site: &JumpSite,
        z_obs: f64,
    ) -> Result<f64, EpisodeFailure> {
        let cfg = self.cfg;
        let spec = self.jump_spec(site, z_obs);
        let distance = (site.plane_point - truth.pose.position()).dot(&site.normal);
        let obstacle = spec.obstacle(distance).map_err(|e| EpisodeFailure::JumpInfeasible(e.to_string()))?;
        let (key, traj) = cache
            .get_or_solve(&spec, &self.params, self.payload, cfg.mode.standoff, cfg.d_min)
            .map_err(|e| EpisodeFailure::JumpInfeasible(e.to_string()))?;
        self.log.events.push(EpisodeEvent {
            t,
            kind: "jump".into(),
            detail: format!("sill {:.3} opening {:.3} distance {:.3}", spec.sill, spec.opening, distance),
        });
        let run = simulate_jump(traj, &self.params, &cfg.gains, &cfg.sim, &obstacle)?;
        for e in &run.events {
            let kind = match e.kind {
                ContactEventKind::LiftOff => "lift-off",
                ContactEventKind::TouchDown => "touchdown",
            };
            self.event(t + e.t, kind, format!("{:?}", e.leg).to_lowercase());
        }
        let duration = run.samples.last().map_or(0.0, |s| s.t);
        let m = &run.metrics;
        if !run.succeeded(distance, cfg.max_landing_pitch) {
            let why = format!(
                "landing x {:?}, final pitch {:.3}, torque violations {}, min clearance {:.4}",
                m.landing_x, m.final_pitch, m.torque_violations, m.min_clearance
            );
            self.log.jumps.push(JumpRecord { t_start: t, key, site: *site, distance, run });
            return Err(EpisodeFailure::JumpFailed(why));
        }
        let heading = truth.pose.heading();
        truth.pose.x += heading.x * m.final_x;
        truth.pose.y += heading.y * m.final_x;
        truth.body_velocity = [0.0; 3];
        self.log.jumps.push(JumpRecord { t_start: t, key, site: *site, distance, run });
        Ok(duration)
    }

    fn event(&mut self, t: f64, kind: &str, detail: String) {
        self.log.events.push(EpisodeEvent { t, kind: kind.into(), detail });
    }

    fn finish(&mut self) {
        let segments = crate::nav::mode_segments(&self.log.mode_trace());
        let s = &mut self.log.summary;
        s.mode_segments = segments;
        s.jumps = self.log.jumps.len();
        s.min_obstacle_distance = self.log.records.iter().map(|r| r.obstacle_distance).fold(f64::INFINITY, f64::min);
        s.min_jump_clearance = self.log.jumps.iter().map(|j| j.run.metrics.min_clearance).reduce(f64::min);
        s.landing_x = self.log.jumps.iter().filter_map(|j| j.run.metrics.landing_x).collect();
    }
}

/// Columnar log: one row per decision tick, then the event list.
pub fn write_episode_log<W: Write>(log: &EpisodeLog, mut w: W) -> std::io::Result<()> {
    writeln!(w, "# {EPISODE_SCHEMA}")?;
    writeln!(w, "# scenario {}", log.scenario)?;
    writeln!(w, "# seed {}", log.seed)?;
    writeln!(
        w,
        "# columns t mode x y yaw est_x est_y est_yaw waypoint_x waypoint_y z_obs command_x command_y command_yaw obstacle_distance"
    )?;
    for r in &log.records {
        writeln!(
            w,
            "{} {} {} {} {} {} {} {} {} {} {} {} {} {} {}",
            r.t,
            r.mode.name(),
            r.pose.x,
            r.pose.y,
            r.pose.yaw,
            r.estimate.x,
            r.estimate.y,
            r.estimate.yaw,
            r.waypoint.x,
            r.waypoint.y,
            r.z_obs,
            r.command.x,
            r.command.y,
            r.command_yaw,
            r.obstacle_distance
        )?;
    }
    writeln!(w, "# events t kind detail")?;
    for e in &log.events {
        writeln!(w, "#! {} {} {}", e.t, e.kind, e.detail)?;
    }
    Ok(())
}

pub fn write_summary<W: Write>(s: &EpisodeSummary, mut w: W) -> std::io::Result<()> {
    writeln!(w, "# {SUMMARY_SCHEMA}")?;
    writeln!(w, "goal_reached = {}", s.goal_reached)?;
    writeln!(w, "time = {}", s.time)?;
    writeln!(w, "final_position = [{}, {}]", s.final_position.x, s.final_position.y)?;
    writeln!(w, "goal_distance = {}", s.goal_distance)?;
    writeln!(w, "jumps = {}", s.jumps)?;
    writeln!(w, "replans = {}", s.replans)?;
    writeln!(w, "min_obstacle_distance = {}", s.min_obstacle_distance)?;
    match s.min_jump_clearance {
        Some(c) => writeln!(w, "min_jump_clearance = {c}")?,
        None => writeln!(w, "# min_jump_clearance: no jumps")?,
    }
    let xs: Vec<String> = s.landing_x.iter().map(|x| x.to_string()).collect();
    writeln!(w, "landing_x = [{}]", xs.join(", "))?;
    let modes: Vec<String> = s.mode_segments.iter().map(|m| format!("\"{}\"", m.name())).collect();
    writeln!(w, "mode_segments = [{}]", modes.join(", "))?;
    Ok(())
}

/// Mode per tick, for plotting the locomotion timeline.
pub fn write_mode_trace<W: Write>(log: &EpisodeLog, mut w: W) -> std::io::Result<()> {
    writeln!(w, "# {MODE_TRACE_SCHEMA}")?;
    writeln!(w, "# columns t mode")?;
    for r in &log.records {
        writeln!(w, "{} {}", r.t, r.mode.name())?;
    }
    Ok(())
}
