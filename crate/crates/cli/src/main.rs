//! `safepress` — scenario runner for the barrier-filtered pressing
//! controller.
//!
//! Three subcommands:
//!
//! * `run` simulates one scenario (a built-in preset or a TOML file) and
//!   writes `trajectory.csv` and `audit.txt`, plus an optional SVG barrier
//!   diagram and per-step QP dump.
//! * `sweep` fans a base scenario out over a grid of force setpoints and
//!   surface stiffnesses, runs every point, and writes a `summary.csv`
//!   with one row per point alongside per-point artifact directories.
//! * `presets` lists the bundled scenarios.
//!
//! Exit codes: `0` when every audit passed, `1` when a run finished but an
//! audit failed (or the simulation itself faulted), `2` for configuration
//! errors — bad flags, unreadable or malformed scenario files, invalid
//! parameter values, or an empty sweep grid.

mod dump;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};

use safepress::analysis::{audit_trajectory, AuditTolerances, TrajectoryAudit};
use safepress::config::load_scenario_path;
use safepress::environment::ForceModel;
use safepress::simulator::{contact_limited_dt, emit_csv, run_scenario, Scenario, Trajectory};

#[derive(Parser)]
#[command(
    name = "safepress",
    version,
    about = "Safe normal-force pressing for a floating-base arm: run scenarios, audit the guarantees, sweep parameter grids.",
    after_help = "Exit codes: 0 all audits passed, 1 an audit or simulation failed, 2 configuration error."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and audit the result.
    Run(RunArgs),
    /// Run a grid of force setpoints and stiffnesses off one base scenario.
    Sweep(SweepArgs),
    /// List the bundled presets.
    Presets,
}

#[derive(Args)]
struct SourceArgs {
    /// Built-in preset name (see `safepress presets`).
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,

    /// Scenario TOML file; may itself start from a preset.
    #[arg(long, value_name = "FILE", conflicts_with = "preset")]
    scenario: Option<PathBuf>,
}

impl SourceArgs {
    fn load(&self) -> Result<Scenario<f64>, String> {
        match (&self.preset, &self.scenario) {
            (Some(name), None) => Scenario::preset(name).map_err(|e| e.to_string()),
            (None, Some(path)) => load_scenario_path(path).map_err(|e| e.to_string()),
            _ => Err("exactly one of --preset or --scenario is required".to_string()),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: SourceArgs,

    /// Output directory for artifacts (created if missing).
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    /// Override the integration step, seconds. Stiff force models still
    /// tighten it automatically when the requested step is too coarse.
    #[arg(long, value_name = "SECONDS")]
    dt: Option<f64>,

    /// Also write barrier.svg (deterministic byte-for-byte).
    #[arg(long)]
    emit_svg: bool,

    /// Also write qp.csv with the per-step QP internals.
    #[arg(long)]
    emit_qp_dumps: bool,

    /// Seed recorded in the run log. Simulations are deterministic; the
    /// seed exists for randomized harnesses layered on top.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    source: SourceArgs,

    /// Output directory; per-point artifacts go to subdirectories.
    #[arg(long, value_name = "DIR", default_value = "sweep")]
    out: PathBuf,

    /// Comma-separated desired-force grid, N (e.g. "-1,-2,-3").
    #[arg(long, value_name = "LIST", value_delimiter = ',', allow_hyphen_values = true)]
    grid_fd: Vec<f64>,

    /// Comma-separated surface-stiffness grid, N/m (e.g. "3e2,1e5").
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    grid_k: Vec<f64>,

    /// Base integration step override, seconds (still tightened per point
    /// for stiff grid stiffnesses).
    #[arg(long, value_name = "SECONDS")]
    dt: Option<f64>,

    /// Worker threads running grid points in parallel.
    #[arg(long, value_name = "N", default_value_t = 1)]
    workers: usize,

    /// Also write barrier.svg for every point.
    #[arg(long)]
    emit_svg: bool,

    /// Seed recorded in the summary. Simulations are deterministic.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(args) => cmd_run(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Presets => cmd_presets(),
    }
}

/// Prints a configuration error and returns the config exit code.
fn config_error(msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn apply_dt_override(sc: &mut Scenario<f64>, dt: Option<f64>) -> Result<(), String> {
    if let Some(dt) = dt {
        if !dt.is_finite() || dt <= 0.0 {
            return Err(format!("--dt must be a positive number, got {dt}"));
        }
        sc.dt = contact_limited_dt(dt, &sc.force);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

fn cmd_run(args: &RunArgs) -> ExitCode {
    let mut sc = match args.source.load() {
        Ok(sc) => sc,
        Err(msg) => return config_error(&msg),
    };
    if let Err(msg) = apply_dt_override(&mut sc, args.dt) {
        return config_error(&msg);
    }
    if let Err(e) = std::fs::create_dir_all(&args.out) {
        return config_error(&format!("cannot create {}: {e}", args.out.display()));
    }
    if let Some(seed) = args.seed {
        println!("seed {seed} recorded (runs are deterministic)");
    }

    let (traj, audit) = match execute(&sc) {
        Ok(pair) => pair,
        Err(e) => {
            eprintln!("error: {}: {e}", sc.name);
            return ExitCode::from(1);
        }
    };
    if let Err(e) = write_artifacts(&args.out, &sc, &traj, &audit, args.emit_svg) {
        return config_error(&e);
    }
    if args.emit_qp_dumps {
        let written = dump::qp_dump_csv(&traj, &sc)
            .map_err(|e| e.to_string())
            .and_then(|text| {
                std::fs::write(args.out.join("qp.csv"), text).map_err(|e| e.to_string())
            });
        if let Err(e) = written {
            return config_error(&format!("qp.csv: {e}"));
        }
    }

    print!("{}", audit.render(&sc.name));
    println!("artifacts in {}", args.out.display());
    if audit.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

/// Runs the scenario and audits the trajectory.
fn execute(sc: &Scenario<f64>) -> safepress::Result<(Trajectory<f64>, TrajectoryAudit<f64>)> {
    let ctrl = sc.controller()?;
    let traj = run_scenario(sc)?;
    let audit = audit_trajectory(&traj, &ctrl, &AuditTolerances::standard())?;
    Ok((traj, audit))
}

fn write_artifacts(
    dir: &Path,
    sc: &Scenario<f64>,
    traj: &Trajectory<f64>,
    audit: &TrajectoryAudit<f64>,
    emit_svg: bool,
) -> Result<(), String> {
    let write = |name: &str, text: String| {
        std::fs::write(dir.join(name), text).map_err(|e| format!("{name}: {e}"))
    };
    write("trajectory.csv", emit_csv(traj))?;
    write("audit.txt", audit.render(&sc.name))?;
    if emit_svg {
        let z_d = sc.desired_insertion().map_err(|e| e.to_string())?;
        write("barrier.svg", svg::barrier_diagram(traj, &sc.shaping, z_d))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

/// One grid point: a desired force and, optionally, a replacement spring
/// stiffness (`None` keeps the base force model).
#[derive(Clone, Copy)]
struct GridPoint {
    f_d: f64,
    stiffness: Option<f64>,
}

/// Outcome of one grid point, as written to `summary.csv`.
struct SweepRow {
    name: String,
    f_d: f64,
    stiffness: Option<f64>,
    dt: f64,
    rows: usize,
    min_barrier: f64,
    terminal_force_error: f64,
    terminal_alignment: f64,
    converged: bool,
    pass: bool,
    error: Option<String>,
}

fn cmd_sweep(args: &SweepArgs) -> ExitCode {
    let mut base = match args.source.load() {
        Ok(sc) => sc,
        Err(msg) => return config_error(&msg),
    };
    if let Err(msg) = apply_dt_override(&mut base, args.dt) {
        return config_error(&msg);
    }
    if args.grid_fd.is_empty() && args.grid_k.is_empty() {
        return config_error("empty grid: pass --grid-fd and/or --grid-k with at least one value");
    }
    if args.workers == 0 {
        return config_error("--workers must be at least 1");
    }
    if let Err(e) = std::fs::create_dir_all(&args.out) {
        return config_error(&format!("cannot create {}: {e}", args.out.display()));
    }
    if let Some(seed) = args.seed {
        println!("seed {seed} recorded (runs are deterministic)");
    }

    let fd_axis: Vec<f64> = if args.grid_fd.is_empty() {
        vec![base.shaping.f_d]
    } else {
        args.grid_fd.clone()
    };
    let k_axis: Vec<Option<f64>> = if args.grid_k.is_empty() {
        vec![None]
    } else {
        args.grid_k.iter().copied().map(Some).collect()
    };
    let points: Vec<GridPoint> = k_axis
        .iter()
        .flat_map(|&stiffness| fd_axis.iter().map(move |&f_d| GridPoint { f_d, stiffness }))
        .collect();

    // Fixed-order results from a self-scheduling worker pool: each thread
    // claims the next unclaimed point until the grid is exhausted.
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<SweepRow>>> = Mutex::new((0..points.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..args.workers.min(points.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= points.len() {
                    break;
                }
                let row = run_point(&base, points[i], &args.out, args.emit_svg);
                slots.lock().unwrap()[i] = Some(row);
            });
        }
    });
    let rows: Vec<SweepRow> = slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|slot| slot.expect("every grid point produces a row"))
        .collect();

    let summary = summary_csv(&rows);
    if let Err(e) = std::fs::write(args.out.join("summary.csv"), summary) {
        return config_error(&format!("summary.csv: {e}"));
    }

    let mut passed = 0usize;
    for row in &rows {
        match &row.error {
            Some(msg) => println!("{}: ERROR — {msg}", row.name),
            None if row.pass => {
                passed += 1;
                println!(
                    "{}: pass (min B {:+.3e}, |F_e| {:.4} N)",
                    row.name, row.min_barrier, row.terminal_force_error
                );
            }
            None => println!(
                "{}: FAIL (min B {:+.3e}, |F_e| {:.4} N)",
                row.name, row.min_barrier, row.terminal_force_error
            ),
        }
    }
    println!(
        "sweep: {passed}/{} points passed; summary in {}",
        rows.len(),
        args.out.join("summary.csv").display()
    );
    if passed == rows.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

/// Derives the point scenario, runs it, and writes its artifacts. Build or
/// run failures are captured in the row; they never abort the sweep.
fn run_point(base: &Scenario<f64>, point: GridPoint, out: &Path, emit_svg: bool) -> SweepRow {
    let name = point_name(&base.name, point);
    let mut row = SweepRow {
        name: name.clone(),
        f_d: point.f_d,
        stiffness: point.stiffness,
        dt: base.dt,
        rows: 0,
        min_barrier: f64::NAN,
        terminal_force_error: f64::NAN,
        terminal_alignment: f64::NAN,
        converged: false,
        pass: false,
        error: None,
    };

    let mut sc = base.clone();
    sc.name = name;
    sc.shaping.f_d = point.f_d;
    if let Some(k) = point.stiffness {
        sc.force = ForceModel::Spring { stiffness: k };
    }
    // A stiffer contact shortens the stable step; this only ever tightens.
    sc.dt = contact_limited_dt(sc.dt, &sc.force);
    row.dt = sc.dt;

    if let Err(e) = sc.validate() {
        row.error = Some(e.to_string());
        return row;
    }
    let (traj, audit) = match execute(&sc) {
        Ok(pair) => pair,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    row.rows = audit.rows;
    row.min_barrier = audit.min_barrier;
    row.terminal_force_error = audit.terminal_force_error;
    row.terminal_alignment = audit.terminal_alignment;
    row.converged = audit.converged;
    row.pass = audit.pass;

    let dir = out.join(&sc.name);
    let written = std::fs::create_dir_all(&dir)
        .map_err(|e| e.to_string())
        .and_then(|()| write_artifacts(&dir, &sc, &traj, &audit, emit_svg));
    if let Err(e) = written {
        row.error = Some(e);
        row.pass = false;
    }
    row
}

fn point_name(base: &str, point: GridPoint) -> String {
    let fd = if point.f_d == point.f_d.trunc() {
        format!("{:+.0}", point.f_d)
    } else {
        format!("{:+}", point.f_d)
    };
    match point.stiffness {
        Some(k) => format!("{base}-fd{fd}-k{k:e}"),
        None => format!("{base}-fd{fd}"),
    }
}

fn summary_csv(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    out.push_str(
        "name,f_d,stiffness,dt,rows,min_barrier,terminal_force_error,terminal_alignment,converged,pass,error\n",
    );
    for r in rows {
        let stiffness = r
            .stiffness
            .map_or_else(|| "base".to_string(), |k| format!("{k:e}"));
        let fmt = |v: f64| {
            if v.is_nan() {
                String::new()
            } else {
                format!("{v:.9e}")
            }
        };
        let error = r
            .error
            .as_deref()
            .map_or_else(String::new, |msg| format!("\"{}\"", msg.replace('"', "\"\"")));
        out.push_str(&format!(
            "{},{},{},{:.9e},{},{},{},{},{},{},{}\n",
            r.name,
            r.f_d,
            stiffness,
            r.dt,
            r.rows,
            fmt(r.min_barrier),
            fmt(r.terminal_force_error),
            fmt(r.terminal_alignment),
            r.converged,
            r.pass,
            error
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// presets
// ---------------------------------------------------------------------------

fn cmd_presets() -> ExitCode {
    println!(
        "{:<10} {:>6} {:>9} {:>6} {:<16} reference",
        "name", "f_d", "dt", "dur", "force model"
    );
    for name in Scenario::<f64>::preset_names() {
        let sc = match Scenario::<f64>::preset(name) {
            Ok(sc) => sc,
            Err(e) => {
                eprintln!("error: preset {name}: {e}");
                return ExitCode::from(2);
            }
        };
        let force = match &sc.force {
            ForceModel::Spring { stiffness } => format!("spring k={stiffness:e}"),
            ForceModel::SaturatingSpring { stiffness, f_sat } => {
                format!("sat k={stiffness:e} |F|<={f_sat}")
            }
            ForceModel::Table { .. } => "table".to_string(),
        };
        let reference = if sc.reference.is_modulated() {
            "waypoints"
        } else {
            "static"
        };
        println!(
            "{:<10} {:>6} {:>9} {:>6} {:<16} {}",
            name,
            format!("{:+.0}", sc.shaping.f_d),
            format!("{:.2e}", sc.dt),
            format!("{:.0}", sc.duration),
            force,
            reference
        );
    }
    ExitCode::SUCCESS
}
