//! Columnar text export of jump trajectories.
//!
//! ```text
//! # quadjump-trajectory v1
//! # durations 0.3 0.25 0.4 0.3
//! # delta 0
//! # columns t phase x z theta f1 f2 b1 b2 <7 velocities> <7 accelerations> tau_f1 tau_f2 tau_b1 tau_b2 t_fx t_fz t_bx t_bz w h clearance
//! 0 all_feet 0 0.293 …
//! ```
//!
//! Phases are written by name; `w`, `h` and `clearance` are `nan` on nodes
//! without a bounding box. Values use the shortest round-trip formatting, so
//! reading a file back reproduces every number exactly.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::collision::WindowObstacle;
use crate::model::{ContactForces, ControlInput, JumpPhase, ModelParams, PlanarConfig, PlanarState, NQ, NX};

use super::{JumpTrajectory, NodeBox, SolverReport, TrajNode};

pub const TRAJECTORY_SCHEMA: &str = "quadjump-trajectory v1";

pub const COLUMNS: [&str; 34] = [
    "t", "phase", "x", "z", "theta", "f1", "f2", "b1", "b2", "xd", "zd", "thetad", "f1d", "f2d", "b1d", "b2d", "xdd",
    "zdd", "thetadd", "f1dd", "f2dd", "b1dd", "b2dd", "tau_f1", "tau_f2", "tau_b1", "tau_b2", "t_fx", "t_fz", "t_bx",
    "t_bz", "w", "h", "clearance",
];

#[derive(Debug, Error)]
pub enum TrajectoryFileError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

fn perr(line: usize, msg: impl Into<String>) -> TrajectoryFileError {
    TrajectoryFileError::Parse { line, msg: msg.into() }
}

pub fn write_trajectory<W: Write>(
    traj: &JumpTrajectory,
    params: &ModelParams,
    obstacle: &WindowObstacle,
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "# {TRAJECTORY_SCHEMA}")?;
    let d = traj.durations;
    writeln!(w, "# durations {} {} {} {}", d[0], d[1], d[2], d[3])?;
    writeln!(w, "# delta {}", traj.delta)?;
    writeln!(w, "# columns {}", COLUMNS.join(" "))?;
    for (k, n) in traj.nodes.iter().enumerate() {
        let mut row: Vec<String> = vec![n.t.to_string(), n.phase.name().to_string()];
        row.extend(n.state.q.to_array().iter().map(f64::to_string));
        row.extend(n.state.qdot.iter().map(f64::to_string));
        row.extend(n.xdot[NQ..].iter().map(f64::to_string));
        row.extend(n.u.tau.iter().map(f64::to_string));
        row.extend(n.forces.t.iter().map(f64::to_string));
        match (&n.bbox, traj.node_box(k, params)) {
            (Some(b), Some(bb)) => {
                row.push(b.width.to_string());
                row.push(b.height.to_string());
                row.push(obstacle.clearance(&bb).to_string());
            }
            _ => row.extend(["nan", "nan", "nan"].map(String::from)),
        }
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

pub fn read_trajectory<R: BufRead>(r: R) -> Result<JumpTrajectory, TrajectoryFileError> {
    let mut durations = None;
    let mut delta = 0.0;
    let mut nodes = Vec::new();
    let mut saw_schema = false;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let ln = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(h) = line.strip_prefix('#') {
            let h = h.trim();
            if h == TRAJECTORY_SCHEMA {
                saw_schema = true;
            } else if let Some(rest) = h.strip_prefix("durations") {
                let v = parse_floats(rest, ln)?;
                if v.len() != 4 {
                    return Err(perr(ln, "expected 4 durations"));
                }
                durations = Some([v[0], v[1], v[2], v[3]]);
            } else if let Some(rest) = h.strip_prefix("delta") {
                delta = rest.trim().parse().map_err(|_| perr(ln, "bad delta"))?;
            } else if let Some(rest) = h.strip_prefix("columns") {
                let cols: Vec<&str> = rest.split_whitespace().collect();
                if cols != COLUMNS {
                    return Err(perr(ln, "unexpected column layout"));
                }
            }
            continue;
        }
        if !saw_schema {
            return Err(perr(ln, format!("missing '# {TRAJECTORY_SCHEMA}' header")));
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != COLUMNS.len() {
            return Err(perr(ln, format!("expected {} columns, found {}", COLUMNS.len(), fields.len())));
        }
        let phase = JumpPhase::from_name(fields[1]).ok_or_else(|| perr(ln, format!("unknown phase '{}'", fields[1])))?;
        let mut v = Vec::with_capacity(COLUMNS.len() - 1);
        for f in std::iter::once(fields[0]).chain(fields[2..].iter().copied()) {
            v.push(f.parse::<f64>().map_err(|_| perr(ln, format!("bad number '{f}'")))?);
        }
        let q: [f64; NQ] = std::array::from_fn(|j| v[1 + j]);
        let qdot: [f64; NQ] = std::array::from_fn(|j| v[8 + j]);
        let mut xdot = [0.0; NX];
        xdot[..NQ].copy_from_slice(&qdot);
        xdot[NQ..].copy_from_slice(&v[15..22]);
        let (bw, bh) = (v[30], v[31]);
        nodes.push(TrajNode {
            t: v[0],
            phase,
            state: PlanarState { q: PlanarConfig::from_array(q), qdot },
            xdot,
            u: ControlInput { tau: std::array::from_fn(|j| v[22 + j]) },
            forces: ContactForces { t: std::array::from_fn(|j| v[26 + j]) },
            bbox: (!bw.is_nan()).then_some(NodeBox { width: bw, height: bh, gamma: None, duals: None }),
        });
    }
    if !saw_schema {
        return Err(perr(0, "empty trajectory file"));
    }
    let durations = durations.ok_or_else(|| perr(0, "missing durations header"))?;
    if nodes.len() < 2 {
        return Err(perr(0, "trajectory needs at least two nodes"));
    }
    Ok(JumpTrajectory { nodes, durations, delta, report: SolverReport::default() })
}

fn parse_floats(s: &str, line: usize) -> Result<Vec<f64>, TrajectoryFileError> {
    s.split_whitespace().map(|t| t.parse::<f64>().map_err(|_| perr(line, format!("bad number '{t}'")))).collect()
}

/// Solver report as `key = value` lines.
pub fn write_report<W: Write>(report: &SolverReport, mut w: W) -> std::io::Result<()> {
    writeln!(w, "status = \"{}\"", report.status)?;
    writeln!(w, "objective = {}", report.objective)?;
    writeln!(w, "max_violation = {}", report.max_violation)?;
    writeln!(w, "iterations = {}", report.iterations)?;
    writeln!(w, "seconds = {}", report.seconds)
}
