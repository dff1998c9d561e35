//! `sixbar`: run trials and incline sweeps, export the model and schedules,
//! serve the teleoperation socket and replay its session logs.
//!
//! Exit codes: 0 on success, 2 when a trial fails (or a replay faults),
//! 3 when the configuration or a log cannot be used, 1 for anything else.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sixbar_core::harness::{
    contraction_curves, contraction_curves_csv, incline_grid, incline_sweep, run_trial_index, sweep_csv,
    write_trial_outputs, ScenarioConfig,
};
use sixbar_core::policies::PolicyKind;
use sixbar_core::Error;
use sixbar_teleop::server::{serve, ServerConfig};
use sixbar_teleop::{replay, SessionLog, SessionOptions, TeleopError};

#[derive(Parser)]
#[command(name = "sixbar", version, about = "Six-bar tensegrity locomotion simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Single,
    Simultaneous,
    Alternating,
}

impl From<Policy> for PolicyKind {
    fn from(p: Policy) -> Self {
        match p {
            Policy::Single => PolicyKind::Single,
            Policy::Simultaneous => PolicyKind::Simultaneous,
            Policy::Alternating => PolicyKind::Alternating,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one trial and write result.json, com_trace.csv and margins.csv.
    Run {
        /// Scenario JSON; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        policy: Option<Policy>,
        #[arg(long)]
        incline_deg: Option<f64>,
        /// Repetition index (selects the start-heading jitter).
        #[arg(long, default_value_t = 0)]
        trial: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep inclines for one or all policies and write sweep.csv.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        step: f64,
        /// Only this policy; all three when omitted.
        #[arg(long, value_enum)]
        policy: Option<Policy>,
        /// Trials per incline; the config's value when omitted.
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the teleoperation websocket on /ws.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Write one JSON-lines log per connection here.
        #[arg(long)]
        log_dir: Option<PathBuf>,
        /// Static files (the operator UI) to serve under /.
        #[arg(long)]
        assets: Option<PathBuf>,
        #[arg(long, default_value_t = 30.0)]
        frame_rate: f64,
    },
    /// Re-run a session log and print the telemetry digest.
    Replay {
        #[arg(long)]
        log: PathBuf,
        /// Also write the regenerated messages as JSON lines.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the robot topology as JSON.
    Topology {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a compiled actuation schedule (JSON) and its per-cable timeline (CSV).
    Schedule {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        policy: Option<Policy>,
        /// Timeline sampling interval (s).
        #[arg(long, default_value_t = 0.05)]
        sample_dt: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Required contraction of each gait step over a range of inclines.
    Contraction {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        from: f64,
        #[arg(long, default_value_t = 16.0)]
        to: f64,
        #[arg(long, default_value_t = 4.0)]
        step: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure carrying its exit code.
struct Fail {
    code: u8,
    message: String,
}

impl Fail {
    fn config(e: impl std::fmt::Display) -> Self {
        Fail { code: 3, message: format!("configuration error: {e}") }
    }

    fn other(e: impl std::fmt::Display) -> Self {
        Fail { code: 1, message: e.to_string() }
    }

    /// Parameter errors are the caller's fault; the rest are runtime failures.
    fn core(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::InvalidPolicy(_) | Error::InvalidCommand(_) => Fail::config(e),
            Error::Io(_) => Fail::other(e),
            _ => Fail { code: 2, message: format!("trial failed: {e}") },
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ScenarioConfig, Fail> {
    match path {
        Some(p) => ScenarioConfig::load(p).map_err(|e| match e {
            Error::Io(msg) => Fail::config(format!("{}: {msg}", p.display())),
            e => Fail::config(e),
        }),
        None => Ok(ScenarioConfig::default()),
    }
}

fn out_dir(out: Option<PathBuf>, config: &ScenarioConfig) -> PathBuf {
    out.or_else(|| config.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Fail> {
    fs::create_dir_all(dir).map_err(Fail::other)?;
    fs::write(dir.join(name), contents).map_err(Fail::other)
}

fn run(cmd: Cmd) -> Result<(), Fail> {
    match cmd {
        Cmd::Run { config, policy, incline_deg, trial, out } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(p) = policy {
                cfg = cfg.with_policy(p.into());
            }
            if let Some(theta) = incline_deg {
                cfg = cfg.with_incline(theta);
            }
            cfg.validate().map_err(Fail::config)?;
            let result = run_trial_index(&cfg, trial).map_err(Fail::core)?;
            let dir = out_dir(out, &cfg);
            write_trial_outputs(&result, &dir).map_err(Fail::other)?;
            println!(
                "{} at {} deg: {} ({:?}), {:.1} cm at {:.3} cm/s, {} steps; outputs in {}",
                result.policy,
                result.incline_deg,
                if result.success { "success" } else { "failure" },
                result.failure_mode,
                result.distance_along_incline,
                result.avg_velocity,
                result.step_count,
                dir.display()
            );
            if !result.success {
                return Err(Fail { code: 2, message: format!("trial failed: {:?}", result.failure_mode) });
            }
        }
        Cmd::Sweep { config, from, to, step, policy, trials, out } => {
            let cfg = load_config(config.as_deref())?;
            let grid = incline_grid(from, to, step).map_err(Fail::config)?;
            let trials = trials.unwrap_or(cfg.trials);
            let kinds: Vec<PolicyKind> = policy.map_or(PolicyKind::ALL.to_vec(), |p| vec![p.into()]);
            let mut sweeps = Vec::new();
            for kind in kinds {
                let sweep = incline_sweep(&cfg.clone().with_policy(kind), &grid, trials).map_err(Fail::core)?;
                match sweep.max_reliable_incline {
                    Some(theta) => println!("{kind}: reliable up to {theta} deg"),
                    None => println!("{kind}: no reliable incline in range"),
                }
                sweeps.push(sweep);
            }
            let dir = out_dir(out, &cfg);
            write(&dir, "sweep.csv", &sweep_csv(&sweeps))?;
            println!("wrote {}", dir.join("sweep.csv").display());
        }
        Cmd::Serve { config, port, host, log_dir, assets, frame_rate } => {
            let cfg = load_config(config.as_deref())?;
            let mut server = ServerConfig::new(cfg);
            server.options = SessionOptions { frame_rate, ..SessionOptions::default() };
            server.log_dir = log_dir;
            server.assets = assets;
            // Surface bad options now rather than on the first connection.
            sixbar_teleop::Session::new(server.scenario.clone(), server.options.clone()).map_err(Fail::config)?;
            let addr = SocketAddr::new(host, port);
            let runtime = tokio::runtime::Runtime::new().map_err(Fail::other)?;
            eprintln!("serving on ws://{addr}/ws");
            runtime.block_on(serve(server, addr)).map_err(Fail::other)?;
        }
        Cmd::Replay { log, out } => {
            let parsed = SessionLog::load(&log).map_err(|e| match e {
                TeleopError::Log { .. } => Fail::config(format!("{}: {e}", log.display())),
                e => Fail::other(e),
            })?;
            let replayed = replay(&parsed).map_err(Fail::config)?;
            if let Some(path) = out {
                let lines: String = replayed.messages.iter().map(|m| m.to_json() + "\n").collect();
                fs::write(&path, lines).map_err(Fail::other)?;
            }
            println!("frames {}", replayed.frames().count());
            println!("digest {}", replayed.digest());
            if let Some(e) = replayed.fault {
                return Err(Fail { code: 2, message: format!("replay faulted: {e}") });
            }
        }
        Cmd::Topology { config, out } => {
            let cfg = load_config(config.as_deref())?;
            let topology = cfg.topology().map_err(Fail::config)?;
            let dir = out_dir(out, &cfg);
            write(&dir, "topology.json", &topology.to_json())?;
            println!("wrote {}", dir.join("topology.json").display());
        }
        Cmd::Schedule { config, policy, sample_dt, out } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(p) = policy {
                cfg = cfg.with_policy(p.into());
            }
            if sample_dt.is_nan() || sample_dt <= 0.0 {
                return Err(Fail::config("sample-dt must be positive"));
            }
            let schedule = cfg.schedule().map_err(Fail::config)?;
            let dir = out_dir(out, &cfg);
            write(&dir, "schedule.json", &schedule.to_json())?;
            write(&dir, "schedule.csv", &schedule.timeline_csv(sample_dt))?;
            println!("wrote {} and schedule.csv", dir.join("schedule.json").display());
        }
        Cmd::Contraction { config, from, to, step, out } => {
            let cfg = load_config(config.as_deref())?;
            let grid = incline_grid(from, to, step).map_err(Fail::config)?;
            let points = contraction_curves(&cfg, &grid).map_err(Fail::core)?;
            let dir = out_dir(out, &cfg);
            write(&dir, "required_contraction.csv", &contraction_curves_csv(&points))?;
            println!("wrote {}", dir.join("required_contraction.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(fail) => {
            eprintln!("error: {}", fail.message);
            ExitCode::from(fail.code)
        }
    }
}
