use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use quadjump::cli::{self, CliError, EpisodeArgs, OptimizeArgs, SimulateArgs, UPRIGHT_PITCH};

#[derive(Parser)]
#[command(name = "quadjump", version, about = "Window-jump optimization, simulation and navigation episodes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize a jump trajectory and write its certificate and cost.
    Optimize {
        #[arg(long)]
        jump_config: Option<PathBuf>,
        /// Jump through the first window of this scenario.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        multi_start: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        deterministic: bool,
    },
    /// Track a stored trajectory in closed loop.
    Simulate {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        jump_config: Option<PathBuf>,
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Gains and plant settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also run the landing-time robustness sweep.
        #[arg(long)]
        sweep: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        deterministic: bool,
    },
    /// Map, plan, walk and jump through a scenario to its goal.
    Episode {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Directory of solved jump trajectories (default: <out>/jump_cache).
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        deterministic: bool,
    },
}

fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Optimize { jump_config, scenario, out, multi_start, seed, deterministic } => {
            let o = cli::cmd_optimize(&OptimizeArgs { jump_config, scenario, out: out.clone(), multi_start, seed, deterministic })?;
            let r = &o.trajectory.report;
            println!("status {} objective {:.6} iterations {} max violation {:.2e}", r.status, r.objective, r.iterations, r.max_violation);
            println!("durations {:?}", o.trajectory.durations);
            println!("min certified clearance {:.4} m (d_min {})", o.min_clearance, o.d_min);
            let ok = o.reports.iter().filter(|r| r.is_ok()).count();
            println!("{ok}/{} starts converged; outputs in {}", o.reports.len(), out.display());
        }
        Command::Simulate { trajectory, jump_config, scenario, config, out, sweep, seed, deterministic } => {
            let o = cli::cmd_simulate(&SimulateArgs { trajectory, jump_config, scenario, config, out: out.clone(), sweep, seed, deterministic })?;
            let m = &o.run.metrics;
            println!("joint rms {:?} overall {:.4} rad", m.rms_joint, m.rms_overall);
            println!("landing x {:?} final pitch {:.3} min clearance {:.4}", m.landing_x, m.final_pitch, m.min_clearance);
            println!("torque violations {} saturated ticks {}", m.torque_violations, m.saturated_ticks);
            for row in &o.sweep {
                println!("shift {:+.3} interpolate {} pass {}", row.shift, row.interpolate, row.passes(UPRIGHT_PITCH));
            }
            println!("outputs in {}", out.display());
        }
        Command::Episode { scenario, config, out, cache, seed, deterministic } => {
            let log = cli::cmd_episode(&EpisodeArgs { scenario, config, out: out.clone(), cache, seed, deterministic })?;
            let s = &log.summary;
            println!("goal_reached {} time {:.1} s jumps {} replans {}", s.goal_reached, s.time, s.jumps, s.replans);
            let modes: Vec<&str> = s.mode_segments.iter().map(|m| m.name()).collect();
            println!("modes {}", modes.join(" "));
            println!("outputs in {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Cli::parse();
    match run(args.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
