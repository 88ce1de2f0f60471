//! Command implementations behind the `quadjump` binary: optimize a jump,
//! simulate a stored trajectory, or run a full episode, writing every
//! artifact into an output directory.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::jump::config::{ConfigError, JumpConfig};
use crate::jump::{
    cost_breakdown, io as traj_io, solve_multi_start, JumpError, JumpTrajectory, SolverReport,
};
use crate::sim::{
    run_episode, simulate_jump, write_episode_log, write_mode_trace, write_summary, write_tracking, EpisodeConfig,
    EpisodeFailure, EpisodeLog, GainSchedule, JumpCache, JumpRun, SimConfig,
};
use crate::world::WorldScenario;

pub const MANIFEST_SCHEMA: &str = "quadjump-manifest v1";
pub const CERTIFICATE_SCHEMA: &str = "quadjump-certificate v1";
pub const COST_SCHEMA: &str = "quadjump-cost v1";
pub const REPORT_SCHEMA: &str = "quadjump-solver-report v1";
pub const SWEEP_SCHEMA: &str = "quadjump-landing-sweep v1";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Parse(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("timeout: {0}")]
    Timeout(String),
    #[error("no path: {0}")]
    NoPath(String),
    #[error("execution failed: {0}")]
    Failed(String),
}

impl CliError {
    /// Process exit status: 1 I/O, 2 parse or validation, 3 infeasible,
    /// 4 timeout, 5 no path, 6 failed execution.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Timeout(_) => 4,
            CliError::NoPath(_) => 5,
            CliError::Failed(_) => 6,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io(s) => CliError::Io(s),
            other => CliError::Parse(other.to_string()),
        }
    }
}

impl From<JumpError> for CliError {
    fn from(e: JumpError) -> Self {
        match e {
            JumpError::InconsistentProblem(_) | JumpError::Model(_) => CliError::Parse(e.to_string()),
            JumpError::TimeLimit => CliError::Timeout(e.to_string()),
            _ => CliError::Infeasible(e.to_string()),
        }
    }
}

/// What was run, on which inputs, and a hash of everything that determines
/// the numeric outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<String>,
    pub seed: u64,
    pub out: String,
    pub version: String,
    pub deterministic: bool,
    pub config_hash: String,
}

impl RunManifest {
    /// `config` is the resolved configuration text; input files are hashed
    /// by content.
    pub fn new(command: &str, inputs: &[&Path], seed: u64, out: &Path, deterministic: bool, config: &str) -> Self {
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        h.update(seed.to_le_bytes());
        h.update(config.as_bytes());
        for p in inputs {
            if let Ok(bytes) = fs::read(p) {
                h.update(&bytes);
            }
        }
        let digest = h.finalize();
        Self {
            command: command.into(),
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            seed,
            out: out.display().to_string(),
            version: env!("CARGO_PKG_VERSION").into(),
            deterministic,
            config_hash: digest.iter().map(|b| format!("{b:02x}")).collect(),
        }
    }

    pub fn to_text(&self) -> String {
        format!("# {MANIFEST_SCHEMA}\n{}", toml::to_string(self).expect("manifest serializes"))
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        fs::write(dir.join("manifest.toml"), self.to_text())?;
        Ok(())
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn load_scenario(path: &Path) -> Result<WorldScenario, CliError> {
    WorldScenario::load(path).map_err(|e| match e {
        crate::world::WorldError::Io(io) => CliError::Io(format!("{}: {io}", path.display())),
        other => CliError::Parse(format!("{}: {other}", path.display())),
    })
}

/// Jump settings from `--jump-config`, else the first window of
/// `--scenario`, else the defaults.
pub fn resolve_jump_config(jump_config: Option<&Path>, scenario: Option<&Path>) -> Result<JumpConfig, CliError> {
    match (jump_config, scenario) {
        (Some(p), _) => Ok(JumpConfig::load(p).map_err(|e| match e {
            ConfigError::Io(s) => CliError::Io(s),
            other => CliError::Parse(format!("{}: {other}", p.display())),
        })?),
        (None, Some(s)) => Ok(JumpConfig::from_scenario(&load_scenario(s)?)?),
        (None, None) => Ok(JumpConfig::default()),
    }
}

/// Run the given work on one thread when `deterministic`, else on the
/// global pool.
fn maybe_single_threaded<T: Send>(deterministic: bool, f: impl FnOnce() -> T + Send) -> T {
    if !deterministic {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(1).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

#[derive(Debug, Clone)]
pub struct OptimizeArgs {
    pub jump_config: Option<PathBuf>,
    pub scenario: Option<PathBuf>,
    pub out: PathBuf,
    pub multi_start: usize,
    pub seed: u64,
    pub deterministic: bool,
}

#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub trajectory: JumpTrajectory,
    pub reports: Vec<Result<SolverReport, JumpError>>,
    pub min_clearance: f64,
    pub d_min: f64,
}

pub fn cmd_optimize(args: &OptimizeArgs) -> Result<OptimizeOutcome, CliError> {
    let mut cfg = resolve_jump_config(args.jump_config.as_deref(), args.scenario.as_deref())?;
    cfg.solver.multi_start = args.multi_start.max(1);
    cfg.solver.seed = args.seed;
    if args.deterministic {
        cfg.solver.max_wall_seconds = f64::INFINITY;
    }
    let problem = cfg.problem()?;
    let params = cfg.params();
    let obstacle = cfg.obstacle()?;
    fs::create_dir_all(&args.out)?;
    let inputs: Vec<&Path> = args.jump_config.iter().chain(&args.scenario).map(PathBuf::as_path).collect();
    RunManifest::new("optimize", &inputs, args.seed, &args.out, args.deterministic, &cfg.to_text()).write(&args.out)?;
    fs::write(args.out.join("jump_config.toml"), cfg.to_text())?;

    let solved = maybe_single_threaded(args.deterministic, || solve_multi_start(&problem, &cfg.solver));
    let (mut traj, mut reports) = match solved {
        Ok(v) => v,
        Err(e) => {
            let mut w = create(&args.out, "report.txt")?;
            writeln!(w, "# {REPORT_SCHEMA}")?;
            writeln!(w, "# failed: {e}")?;
            if let JumpError::Infeasible { violation, .. } | JumpError::MaxIterations { violation, .. } = &e {
                writeln!(w, "max_violation = {violation}")?;
            }
            w.flush()?;
            return Err(e.into());
        }
    };
    if args.deterministic {
        traj.report.seconds = 0.0;
        for r in reports.iter_mut().flatten() {
            r.seconds = 0.0;
        }
    }

    traj_io::write_trajectory(&traj, &params, &obstacle, create(&args.out, "trajectory.traj")?)?;

    let mut w = create(&args.out, "report.txt")?;
    writeln!(w, "# {REPORT_SCHEMA}")?;
    traj_io::write_report(&traj.report, &mut w)?;
    for (i, r) in reports.iter().enumerate() {
        writeln!(w, "\n[[start]]\nindex = {i}")?;
        match r {
            Ok(rep) => traj_io::write_report(rep, &mut w)?,
            Err(e) => writeln!(w, "status = \"failed\"\nerror = {:?}", e.to_string())?,
        }
    }
    w.flush()?;

    let certificate = traj.certificate(&params, &obstacle);
    let mut w = create(&args.out, "certificate.txt")?;
    writeln!(w, "# {CERTIFICATE_SCHEMA}")?;
    writeln!(w, "# d_min {}", cfg.d_min)?;
    writeln!(w, "# columns node t phase width height clearance certified")?;
    for &(k, c) in &certificate {
        let n = &traj.nodes[k];
        let b = n.bbox.as_ref().expect("certified nodes carry boxes");
        writeln!(w, "{k} {} {} {} {} {} {}", n.t, n.phase.name(), b.width, b.height, c, c >= cfg.d_min - 1e-5)?;
    }
    w.flush()?;

    let cost = cost_breakdown(&traj, &problem.weights, &problem.q_ref);
    let mut w = create(&args.out, "cost.txt")?;
    writeln!(w, "# {COST_SCHEMA}")?;
    for (name, v) in cost.terms() {
        writeln!(w, "{name} = {v}")?;
    }
    writeln!(w, "total = {}", cost.total())?;
    w.flush()?;

    let min_clearance = certificate.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    Ok(OptimizeOutcome { trajectory: traj, reports, min_clearance, d_min: cfg.d_min })
}

/// Controller and plant settings for `simulate`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSettings {
    pub gains: GainSchedule,
    pub sim: SimConfig,
}

impl SimSettings {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let s: Self = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        s.gains.validate().map_err(|e| CliError::Parse(e.to_string()))?;
        s.sim.substeps().map_err(|e| CliError::Parse(e.to_string()))?;
        Ok(s)
    }
}

#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub trajectory: PathBuf,
    pub jump_config: Option<PathBuf>,
    pub scenario: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub sweep: bool,
    pub seed: u64,
    pub deterministic: bool,
}

/// Largest final pitch counted as upright, rad.
pub const UPRIGHT_PITCH: f64 = 0.3;

/// Landing-time shifts of the robustness sweep, s.
pub const SWEEP_SHIFTS: [f64; 5] = [-0.02, -0.01, 0.0, 0.01, 0.02];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub shift: f64,
    pub interpolate: bool,
    pub run: Result<JumpRun, String>,
}

impl SweepRow {
    /// No torque violation and an upright final pose.
    pub fn passes(&self, max_pitch: f64) -> bool {
        self.run.as_ref().is_ok_and(|r| r.metrics.torque_violations == 0 && r.metrics.final_pitch.abs() <= max_pitch)
    }
}

/// Simulates `traj` under each landing shift, with the landing blend as
/// configured and with it disabled.
pub fn landing_sweep(
    traj: &JumpTrajectory,
    params: &crate::model::ModelParams,
    gains: &GainSchedule,
    sim: &SimConfig,
    obstacle: &crate::collision::WindowObstacle,
) -> Vec<SweepRow> {
    let plain = GainSchedule { interpolate_landing: false, landing_scale: 1.0, ..gains.clone() };
    [(true, gains), (false, &plain)]
        .into_iter()
        .flat_map(|(interpolate, g)| {
            SWEEP_SHIFTS.iter().map(move |&shift| {
                let cfg = SimConfig { landing_shift: shift, ..*sim };
                SweepRow { shift, interpolate, run: simulate_jump(traj, params, g, &cfg, obstacle).map_err(|e| e.to_string()) }
            })
        })
        .collect()
}

pub fn write_sweep<W: Write>(rows: &[SweepRow], max_pitch: f64, mut w: W) -> std::io::Result<()> {
    writeln!(w, "# {SWEEP_SCHEMA}")?;
    writeln!(w, "# columns shift interpolate torque_violations final_pitch landing_x min_clearance rms_joint pass")?;
    for r in rows {
        match &r.run {
            Ok(run) => {
                let m = &run.metrics;
                writeln!(
                    w,
                    "{} {} {} {} {} {} {} {}",
                    r.shift,
                    r.interpolate,
                    m.torque_violations,
                    m.final_pitch,
                    m.landing_x.map_or("nan".into(), |x| x.to_string()),
                    m.min_clearance,
                    m.rms_overall,
                    r.passes(max_pitch)
                )?;
            }
            Err(e) => writeln!(w, "{} {} nan nan nan nan nan false # {e}", r.shift, r.interpolate)?,
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SimulateOutcome {
    pub run: JumpRun,
    pub sweep: Vec<SweepRow>,
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<SimulateOutcome, CliError> {
    let jump = resolve_jump_config(args.jump_config.as_deref(), args.scenario.as_deref())?;
    let settings = match &args.config {
        Some(p) => SimSettings::parse(&read_text(p)?)?,
        None => SimSettings::default(),
    };
    let file = File::open(&args.trajectory).map_err(|e| CliError::Io(format!("{}: {e}", args.trajectory.display())))?;
    let traj = traj_io::read_trajectory(BufReader::new(file)).map_err(|e| match e {
        traj_io::TrajectoryFileError::Io(io) => CliError::Io(io.to_string()),
        other => CliError::Parse(format!("{}: {other}", args.trajectory.display())),
    })?;
    let params = jump.params();
    let obstacle = jump.obstacle()?;
    fs::create_dir_all(&args.out)?;
    let mut inputs: Vec<&Path> = vec![args.trajectory.as_path()];
    inputs.extend(args.jump_config.iter().chain(&args.scenario).chain(&args.config).map(PathBuf::as_path));
    let resolved = format!("{}\n{}", jump.to_text(), toml::to_string(&settings).expect("settings serialize"));
    RunManifest::new("simulate", &inputs, args.seed, &args.out, args.deterministic, &resolved).write(&args.out)?;

    let run = simulate_jump(&traj, &params, &settings.gains, &settings.sim, &obstacle)
        .map_err(|e| CliError::Failed(e.to_string()))?;
    write_tracking(&run, create(&args.out, "tracking.txt")?)?;
    let mut w = create(&args.out, "events.txt")?;
    writeln!(w, "# quadjump-contact-events v1")?;
    writeln!(w, "# columns t leg kind")?;
    for e in &run.events {
        writeln!(w, "{} {:?} {:?}", e.t, e.leg, e.kind)?;
    }
    w.flush()?;

    let sweep = if args.sweep {
        let rows = maybe_single_threaded(args.deterministic, || {
            landing_sweep(&traj, &params, &settings.gains, &settings.sim, &obstacle)
        });
        write_sweep(&rows, UPRIGHT_PITCH, create(&args.out, "sweep.txt")?)?;
        rows
    } else {
        Vec::new()
    };
    Ok(SimulateOutcome { run, sweep })
}

#[derive(Debug, Clone)]
pub struct EpisodeArgs {
    pub scenario: PathBuf,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub cache: Option<PathBuf>,
    pub seed: u64,
    pub deterministic: bool,
}

pub fn load_episode_config(path: &Path) -> Result<EpisodeConfig, CliError> {
    toml::from_str(&read_text(path)?).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

fn write_episode_outputs(log: &EpisodeLog, out: &Path) -> Result<(), CliError> {
    write_episode_log(log, create(out, "episode.log")?)?;
    write_summary(&log.summary, create(out, "summary.toml")?)?;
    write_mode_trace(log, create(out, "modes.txt")?)?;
    log.maps.occupancy.write_pgm(create(out, "occupancy.pgm")?)?;
    log.maps.heights.write_text(create(out, "heights.txt")?)?;
    for (i, j) in log.jumps.iter().enumerate() {
        write_tracking(&j.run, create(out, &format!("jump_{i}_tracking.txt"))?)?;
    }
    Ok(())
}

pub fn cmd_episode(args: &EpisodeArgs) -> Result<EpisodeLog, CliError> {
    let scenario = load_scenario(&args.scenario)?;
    let mut cfg = match &args.config {
        Some(p) => load_episode_config(p)?,
        None => EpisodeConfig::default(),
    };
    cfg.seed = args.seed;
    fs::create_dir_all(&args.out)?;
    let mut inputs: Vec<&Path> = vec![args.scenario.as_path()];
    inputs.extend(args.config.iter().map(PathBuf::as_path));
    let resolved = format!("{}\n{}", scenario.to_text(), toml::to_string(&cfg).expect("config serializes"));
    RunManifest::new("episode", &inputs, args.seed, &args.out, args.deterministic, &resolved).write(&args.out)?;

    let mut cache = JumpCache::with_dir(args.cache.clone().unwrap_or_else(|| args.out.join("jump_cache")));
    if args.deterministic {
        cache.solver.max_wall_seconds = f64::INFINITY;
    }
    match run_episode(&scenario, &cfg, &mut cache) {
        Ok(log) => {
            write_episode_outputs(&log, &args.out)?;
            Ok(log)
        }
        Err(e) => {
            write_episode_outputs(&e.log, &args.out)?;
            Err(match e.failure {
                EpisodeFailure::Timeout(t) => CliError::Timeout(format!("goal not reached after {t:.1} s")),
                EpisodeFailure::NoPath(n) => CliError::NoPath(n.to_string()),
                EpisodeFailure::JumpInfeasible(s) => CliError::Infeasible(s),
                EpisodeFailure::Scenario(s) => CliError::Parse(s),
                other => CliError::Failed(other.to_string()),
            })
        }
    }
}
