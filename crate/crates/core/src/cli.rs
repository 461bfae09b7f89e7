//! Command-line front end. `run` is the whole program minus process exit, so
//! it can be driven in-process by tests.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::analysis::{self, cr_report, optimize_vr, AnalysisError, TargetGrid};
use crate::bounds::{self, BoundsError};
use crate::engine::{self, EngineError, EvacOutcome};
use crate::plans::{self, build_evac_rays, EvacPlan, PlanError, PlanKind, RaysPlanOptions, DEFAULT_K_MAX};
use crate::trajectory::{left_sender_tp, receiver_tp, right_sender_tp, TrajectoryError, TurningPoint};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

const SCHEMA: u32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "evac",
    version,
    about = "Evacuation on the line with sender and receiver agents"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one target and print the outcome
    Simulate(SimulateArgs),
    /// Sweep targets and report the empirical competitive ratio
    Sweep(SweepArgs),
    /// Solve for the receiver speed minimising the rays bound
    OptimizeVr(OptimizeArgs),
    /// Evaluate the lower-bound constants
    LowerBounds(FormatArgs),
    /// Compare closed-form and step-simulated turning points
    TurningPoints(TurningPointArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    OneOne,
    OneMany,
    Rays,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
    Json,
}

/// How the rays plan is laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Layout {
    /// Senders start at distances gamma+ and gamma-
    Unit,
    /// Layout shrunk by 1/gamma- so every |x| >= 1 is in a zig-zag round
    Normalized,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long, value_enum)]
    pub algo: Algo,
    /// Receiver speed for the rays plan
    #[arg(long = "vr", conflicts_with = "optimal")]
    pub vr: Option<f64>,
    /// Use the optimal receiver speed
    #[arg(long)]
    pub optimal: bool,
    /// Number of receivers (one-many)
    #[arg(long = "nr", default_value_t = 2)]
    pub nr: usize,
    /// Number of senders (rays)
    #[arg(long = "ns", default_value_t = 2)]
    pub ns: usize,
    /// Receiver rounds the rays plan is laid out for
    #[arg(long = "k-max", default_value_t = DEFAULT_K_MAX)]
    pub k_max: usize,
    #[arg(long, value_enum)]
    pub layout: Option<Layout>,
    /// Write the plan as JSON to this file
    #[arg(long = "dump-plan")]
    pub dump_plan: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Write the result here instead of stdout
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// json or csv for simulate and sweep (default json); text or json elsewhere (default text)
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub plan: PlanArgs,
    /// Exit position, |x| >= 1
    #[arg(long, allow_hyphen_values = true)]
    pub target: f64,
    /// Write the event trace as CSV to this file
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub plan: PlanArgs,
    /// Smallest target magnitude
    #[arg(long, default_value_t = 1.01)]
    pub min: f64,
    /// Largest target magnitude; defaults to the plan coverage, or 100
    #[arg(long)]
    pub max: Option<f64>,
    /// Geometric grid points per sign
    #[arg(long, default_value_t = 200)]
    pub points: usize,
    /// Add critical targets of rounds 0..=K (rays only)
    #[arg(long = "critical-k", default_value_t = 10)]
    pub critical_k: usize,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    /// Bisection interval width
    #[arg(long, default_value_t = 1e-10)]
    pub tolerance: f64,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct FormatArgs {
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct TurningPointArgs {
    /// Receiver speed in (0, 1)
    #[arg(long = "vr")]
    pub vr: f64,
    /// Last turning point index
    #[arg(long = "jmax", default_value_t = 8)]
    pub jmax: usize,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numeric(_) | CliError::Io(_) => EXIT_NUMERIC,
        }
    }
}

impl From<PlanError> for CliError {
    fn from(e: PlanError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::TargetTooClose(_)
            | EngineError::NonFiniteTarget(_)
            | EngineError::OutsideCoverage { .. }
            | EngineError::Plan(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Engine(inner) => inner.into(),
            AnalysisError::Domain(_) | AnalysisError::EmptyGrid => CliError::Usage(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<BoundsError> for CliError {
    fn from(e: BoundsError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<TrajectoryError> for CliError {
    fn from(e: TrajectoryError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Numeric(e.to_string())
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

/// Parses `args` and runs the command, writing results to `out` and
/// diagnostics to `err`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    match execute(&cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Simulate(args) => cmd_simulate(args, out),
        Command::Sweep(args) => cmd_sweep(args, out),
        Command::OptimizeVr(args) => cmd_optimize_vr(args, out),
        Command::LowerBounds(args) => cmd_lower_bounds(args, out),
        Command::TurningPoints(args) => cmd_turning_points(args, out),
    }
}

fn resolve_vr(args: &PlanArgs) -> Result<f64> {
    match (args.vr, args.optimal) {
        (Some(v), false) => Ok(v),
        (None, true) => Ok(optimize_vr(1e-12)?.v_r),
        _ => Err(CliError::Usage("the rays plan needs --vr or --optimal".into())),
    }
}

fn build_plan(args: &PlanArgs, default_layout: Layout) -> Result<EvacPlan> {
    let plan = match args.algo {
        Algo::OneOne => plans::plan_one_one(),
        Algo::OneMany => plans::plan_one_many(args.nr)?,
        Algo::Rays => {
            let v_r = resolve_vr(args)?;
            let base = match args.layout.unwrap_or(default_layout) {
                Layout::Unit => RaysPlanOptions::default(),
                Layout::Normalized => RaysPlanOptions::normalized(v_r)?,
            };
            build_evac_rays(
                v_r,
                &RaysPlanOptions {
                    n_s: args.ns,
                    k_max: args.k_max,
                    ..base
                },
            )?
        }
    };
    if let Some(path) = &args.dump_plan {
        #[derive(Serialize)]
        struct Dump<'a> {
            schema: u32,
            #[serde(flatten)]
            plan: &'a EvacPlan,
        }
        write_to(path, |w| {
            serde_json::to_writer_pretty(
                &mut *w,
                &Dump {
                    schema: SCHEMA,
                    plan: &plan,
                },
            )?;
            writeln!(w)?;
            Ok(())
        })?;
    }
    Ok(plan)
}

fn write_to(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let mut file = io::BufWriter::new(File::create(path)?);
    body(&mut file)?;
    file.flush()?;
    Ok(())
}

/// Sends `body` to `--output` if given, else to `out`.
fn emit(args: &OutputArgs, out: &mut dyn Write, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match &args.output {
        Some(path) => write_to(path, body),
        None => body(out),
    }
}

fn format_of(args: &OutputArgs, default: Format, allowed: &[Format]) -> Result<Format> {
    let format = args.format.unwrap_or(default);
    if allowed.contains(&format) {
        Ok(format)
    } else {
        Err(CliError::Usage(
            format!("format {format:?} is not supported by this command").to_lowercase(),
        ))
    }
}

fn json_line(w: &mut dyn Write, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer_pretty(&mut *w, value)?;
    writeln!(w)?;
    Ok(())
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    schema: u32,
    plan: PlanKind,
    params: &'a std::collections::BTreeMap<String, f64>,
    #[serde(flatten)]
    outcome: &'a EvacOutcome,
}

fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let format = format_of(&args.out, Format::Json, &[Format::Json, Format::Csv])?;
    let plan = build_plan(&args.plan, Layout::Unit)?;
    let outcome = engine::simulate(&plan, args.target)?;
    if let Some(path) = &args.trace {
        write_to(path, |w| Ok(outcome.write_trace_csv(w)?))?;
    }
    emit(&args.out, out, |w| match format {
        Format::Csv => Ok(outcome.write_trace_csv(w)?),
        _ => json_line(
            w,
            &SimulateReport {
                schema: SCHEMA,
                plan: plan.name,
                params: &plan.params,
                outcome: &outcome,
            },
        ),
    })
}

fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<()> {
    let format = format_of(&args.out, Format::Json, &[Format::Json, Format::Csv])?;
    let plan = build_plan(&args.plan, Layout::Normalized)?;
    let max = args.max.or(plan.coverage).unwrap_or(100.0);
    let grid = TargetGrid::geometric(args.min, max, args.points);
    let critical = (plan.name == PlanKind::EvacRays).then_some(args.critical_k);
    let report = cr_report(&plan, &grid, critical)?;
    emit(&args.out, out, |w| match format {
        Format::Csv => Ok(report.write_csv(w)?),
        _ => json_line(w, &report),
    })
}

fn cmd_optimize_vr(args: &OptimizeArgs, out: &mut dyn Write) -> Result<()> {
    let format = format_of(&args.out, Format::Text, &[Format::Text, Format::Json])?;
    let opt = optimize_vr(args.tolerance)?;
    emit(&args.out, out, |w| {
        if format == Format::Json {
            #[derive(Serialize)]
            struct Report<'a> {
                schema: u32,
                #[serde(flatten)]
                optimum: &'a analysis::VrOptimum,
            }
            return json_line(
                w,
                &Report {
                    schema: SCHEMA,
                    optimum: &opt,
                },
            );
        }
        writeln!(w, "v_r*       {:.12}", opt.v_r)?;
        writeln!(w, "cr*        {:.12}", opt.cr)?;
        writeln!(w, "quartic    {:.3e}", opt.quartic_residual)?;
        writeln!(
            w,
            "{:>8} {:>20} {:>20} {:>10}",
            "v_r", "finite diff", "identity", "rel err"
        )?;
        for c in &opt.checks {
            writeln!(
                w,
                "{:>8.4} {:>20.12} {:>20.12} {:>10.2e}",
                c.v_r, c.finite_difference, c.identity, c.rel_err
            )?;
        }
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub name: &'static str,
    pub closed_form: f64,
    pub computed: f64,
    pub diff: f64,
}

/// The lower-bound constants next to their closed forms.
pub fn lower_bound_rows() -> Result<Vec<BoundRow>> {
    let sqrt2 = std::f64::consts::SQRT_2;
    let sqrt5 = 5f64.sqrt();
    let (g_at, g_min) = bounds::minimize_g()?;
    let (h_at, h_min) = bounds::minimize_h()?;
    let (s_at, one_many) = bounds::solve_lb_one_many()?;
    let (_, scan, _) = bounds::one_one_grid_scan(100)?;
    let row = |name, closed_form: f64, computed: f64| BoundRow {
        name,
        closed_form,
        computed,
        diff: (computed - closed_form).abs(),
    };
    Ok(vec![
        row("g argmin", 1.0 / 3.0, g_at),
        row("g minimum", 8.0, g_min),
        row("one sender, mu_A = mu_S", 9.0, 1.0 + g_min),
        row("h argmin", sqrt2 - 1.0, h_at),
        row("h minimum", 2.0 + 2.0 * sqrt2, h_min),
        row("one sender, one receiver", 3.0 + 2.0 * sqrt2, 1.0 + h_min),
        row("one-one grid scan (100x100)", 3.0 + 2.0 * sqrt2, scan),
        row("one-many sender speed", sqrt5 - 2.0, s_at),
        row("one sender, many receivers", 2.0 + sqrt5, one_many),
    ])
}

fn cmd_lower_bounds(args: &FormatArgs, out: &mut dyn Write) -> Result<()> {
    let format = format_of(&args.out, Format::Text, &[Format::Text, Format::Json])?;
    let rows = lower_bound_rows()?;
    emit(&args.out, out, |w| {
        if format == Format::Json {
            #[derive(Serialize)]
            struct Report<'a> {
                schema: u32,
                bounds: &'a [BoundRow],
            }
            return json_line(
                w,
                &Report {
                    schema: SCHEMA,
                    bounds: &rows,
                },
            );
        }
        writeln!(
            w,
            "{:<30} {:>18} {:>18} {:>10}",
            "name", "closed form", "computed", "|diff|"
        )?;
        for r in &rows {
            writeln!(
                w,
                "{:<30} {:>18.12} {:>18.12} {:>10.2e}",
                r.name, r.closed_form, r.computed, r.diff
            )?;
        }
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurningPointRow {
    pub agent: &'static str,
    pub j: usize,
    pub closed_form: TurningPoint,
    pub simulated: TurningPoint,
    pub deviation: f64,
}

/// Closed-form turning points of all three rays agents against the step-by-step
/// construction of the same paths.
pub fn turning_point_rows(v_r: f64, j_max: usize) -> Result<Vec<TurningPointRow>> {
    let params = plans::EvacRaysParams::new(v_r)?;
    type ClosedForm = fn(f64, usize) -> Result<TurningPoint, TrajectoryError>;
    let agents: [(&'static str, _, ClosedForm); 3] = [
        ("receiver", params.receiver(1.0)?, receiver_tp),
        ("right-sender", params.right_sender(1.0)?, right_sender_tp),
        ("left-sender", params.left_sender(1.0)?, left_sender_tp),
    ];
    let mut rows = Vec::new();
    for (agent, rays, closed) in agents {
        let last = rays.turning_point(j_max)?;
        let walked = rays.simulate(last.time * 1.5)?;
        for j in 0..=j_max {
            let closed_form = closed(v_r, j)?;
            let simulated = walked.vertices()[j + 2].clone();
            let deviation = (closed_form.position - simulated.position)
                .abs()
                .max((closed_form.time - simulated.time).abs());
            rows.push(TurningPointRow {
                agent,
                j,
                closed_form,
                simulated,
                deviation,
            });
        }
    }
    Ok(rows)
}

fn cmd_turning_points(args: &TurningPointArgs, out: &mut dyn Write) -> Result<()> {
    let format = format_of(&args.out, Format::Text, &[Format::Text, Format::Json])?;
    let rows = turning_point_rows(args.vr, args.jmax)?;
    let max_deviation = rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
    emit(&args.out, out, |w| {
        if format == Format::Json {
            #[derive(Serialize)]
            struct Report<'a> {
                schema: u32,
                v_r: f64,
                rows: &'a [TurningPointRow],
                max_deviation: f64,
            }
            return json_line(
                w,
                &Report {
                    schema: SCHEMA,
                    v_r: args.vr,
                    rows: &rows,
                    max_deviation,
                },
            );
        }
        let mut text = String::new();
        let _ = writeln!(
            text,
            "{:<13} {:>3} {:>20} {:>20} {:>20} {:>20} {:>10}",
            "agent", "j", "D closed", "T closed", "D walked", "T walked", "dev"
        );
        for r in &rows {
            let _ = writeln!(
                text,
                "{:<13} {:>3} {:>20.10} {:>20.10} {:>20.10} {:>20.10} {:>10.2e}",
                r.agent,
                r.j,
                r.closed_form.position,
                r.closed_form.time,
                r.simulated.position,
                r.simulated.time,
                r.deviation
            );
        }
        let _ = writeln!(text, "max deviation {max_deviation:.3e}");
        w.write_all(text.as_bytes())?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("evac").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn simulate_one_one() {
        let (code, out, _) = run_capture(&["simulate", "--algo", "one-one", "--target", "2"]);
        assert_eq!(code, 0);
        let json: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(json["schema"], 1);
        assert!((json["evac_time"].as_f64().unwrap() - 11.656_854_2).abs() < 1e-6);
    }

    #[test]
    fn simulate_rays_example() {
        let (code, out, _) = run_capture(&["simulate", "--algo", "rays", "--vr", "0.333333", "--target", "4.000001"]);
        assert_eq!(code, 0);
        let json: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!((json["evac_time"].as_f64().unwrap() - 24.000001).abs() < 1e-4);
    }

    #[test]
    fn bad_targets_and_arguments() {
        let (code, _, err) = run_capture(&["simulate", "--algo", "one-one", "--target", "0.5"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("target must satisfy |x| >= 1"));
        let (code, _, _) = run_capture(&["simulate", "--algo", "rays", "--target", "3"]);
        assert_eq!(code, EXIT_USAGE);
        let (code, _, _) = run_capture(&["simulate", "--algo", "warp", "--target", "3"]);
        assert_eq!(code, EXIT_USAGE);
        let (code, _, _) = run_capture(&["simulate", "--algo", "one-many", "--nr", "1", "--target", "3"]);
        assert_eq!(code, EXIT_USAGE);
        let (code, _, _) = run_capture(&["optimize-vr", "--format", "csv"]);
        assert_eq!(code, EXIT_USAGE);
    }

    #[test]
    fn negative_targets_parse() {
        let (code, out, _) = run_capture(&["simulate", "--algo", "one-many", "--target", "-3"]);
        assert_eq!(code, 0, "{out}");
        let json: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(json["evac_time"], 15.0);
    }

    #[test]
    fn sweep_one_many_csv() {
        let (code, out, _) = run_capture(&[
            "sweep", "--algo", "one-many", "--nr", "2", "--points", "20", "--format", "csv",
        ]);
        assert_eq!(code, 0);
        let mut lines = out.lines();
        assert_eq!(lines.next(), Some("x,evac_time,ratio"));
        assert_eq!(lines.count(), 40);
    }

    #[test]
    fn turning_points_deviation() {
        let rows = turning_point_rows(0.333333, 8).unwrap();
        assert_eq!(rows.len(), 27);
        assert!(rows.iter().all(|r| r.deviation <= 1e-9));
        let (code, out, _) = run_capture(&["turning-points", "--vr", "0.333333", "--jmax", "8"]);
        assert_eq!(code, 0);
        assert!(out.contains("max deviation"));
    }

    #[test]
    fn lower_bound_table() {
        let rows = lower_bound_rows().unwrap();
        assert!(rows.iter().filter(|r| !r.name.contains("grid")).all(|r| r.diff < 1e-8));
        let (code, out, _) = run_capture(&["lower-bounds"]);
        assert_eq!(code, 0);
        assert!(out.starts_with("name"));
        assert_eq!(out.lines().count(), 10);
    }
}
