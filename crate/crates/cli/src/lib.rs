//! Argument parsing and subcommand execution for the `fpsi` binary.

use clap::{Args, Parser, Subcommand, ValueEnum};
use fpsi_core::diagnostics::{
    build_report, energy_svg, export_fields, interface_svg, summarize, sweep_runs, write_energy_csv, SweepKind, SweepReport, SweepRun,
};
use fpsi_core::verification::{invariant_suite, CheckResult, SuiteScale, H_LIST};
use fpsi_core::{reconstruct, run_config, Reconstruction, RunConfig};
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_PARTIAL: u8 = 2;

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "FPSI_THREADS";

#[derive(Parser, Debug)]
#[command(name = "fpsi", version, about = "Splitting-scheme simulator for fluid-poroelastic structure interaction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML config file; every key is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. --set dt=0.01 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "fpsi-out")]
    out: PathBuf,
    /// Exit 0 when a run stops early at a failed geometry certificate.
    #[arg(long)]
    allow_partial: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum ReconArg {
    Piecewise,
    Interpolant,
    Star,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One run: energy ledger, summary, plots and final fields.
    Run(Common),
    /// Sweep the plate thickness h.
    SweepH {
        #[command(flatten)]
        common: Common,
        /// Comma-separated h values.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// Halve dt repeatedly, starting from the configured dt.
    SweepDt {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 4)]
        levels: usize,
    },
    /// Sweep the mollifier radius delta.
    SweepDelta {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// Property suite on coarse meshes with a pass/fail table.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Use the acceptance sample counts.
        #[arg(long)]
        full: bool,
    },
    /// Run, then write fields at one time of the reconstructed trajectory.
    Export {
        #[command(flatten)]
        common: Common,
        /// Time in [0, T]; defaults to the last accepted level.
        #[arg(long)]
        time: Option<f64>,
        #[arg(long, value_enum, default_value = "piecewise")]
        reconstruction: ReconArg,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    Run,
    Sweep { kind: SweepKind, values: Vec<f64> },
    Verify { full: bool },
    Export { time: Option<f64>, reconstruction: Reconstruction },
}

/// Fully resolved invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandSpec {
    pub subcommand: &'static str,
    pub task: Task,
    pub config_path: Option<PathBuf>,
    pub overrides: Vec<String>,
    /// Config file with overrides applied and validated.
    pub config: RunConfig,
    pub out: PathBuf,
    pub allow_partial: bool,
}

/// Parse failure. `code` is 0 for --help/--version.
#[derive(Debug)]
pub struct UsageError {
    pub message: String,
    pub code: u8,
}

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn usage(message: String) -> UsageError {
    UsageError { message, code: EXIT_ERROR }
}

/// Parses arguments (without the program name), loads the config and
/// applies the overrides in order.
pub fn parse<I, S>(args: I) -> Result<CommandSpec, UsageError>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv = std::iter::once(std::ffi::OsString::from("fpsi")).chain(args.into_iter().map(Into::into));
    let cli = Cli::try_parse_from(argv).map_err(|e| {
        let code = match e.kind() {
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
            _ => EXIT_ERROR,
        };
        UsageError { message: e.render().to_string(), code }
    })?;
    let (name, common, task) = match cli.command {
        Command::Run(c) => ("run", c, Task::Run),
        Command::SweepH { common, values } => ("sweep-h", common, Task::Sweep { kind: SweepKind::H, values: values.unwrap_or_else(|| H_LIST.to_vec()) }),
        Command::SweepDt { common, levels } => {
            if levels < 2 {
                return Err(usage(format!("--levels must be at least 2, got {levels}")));
            }
            // Values are filled in below once dt is known.
            ("sweep-dt", common, Task::Sweep { kind: SweepKind::Dt, values: vec![levels as f64] })
        }
        Command::SweepDelta { common, values } => {
            ("sweep-delta", common, Task::Sweep { kind: SweepKind::Delta, values: values.unwrap_or_else(|| vec![0.4, 0.2, 0.1]) })
        }
        Command::Verify { common, full } => ("verify", common, Task::Verify { full }),
        Command::Export { common, time, reconstruction } => {
            let reconstruction = match reconstruction {
                ReconArg::Piecewise => Reconstruction::Piecewise,
                ReconArg::Interpolant => Reconstruction::Interpolant,
                ReconArg::Star => Reconstruction::Star,
            };
            ("export", common, Task::Export { time, reconstruction })
        }
    };
    let mut config = match &common.config {
        Some(p) => RunConfig::load(p).map_err(|e| usage(format!("--config {}: {e}", p.display())))?,
        None => RunConfig::default(),
    };
    for s in &common.set {
        config.apply_override(s).map_err(|e| usage(format!("--set {s}: {e}")))?;
    }
    config.validate().map_err(|e| usage(e.to_string()))?;
    let task = match task {
        Task::Sweep { kind: SweepKind::Dt, values } => {
            let levels = values[0] as usize;
            Task::Sweep { kind: SweepKind::Dt, values: (0..levels).map(|i| config.dt / (1u64 << i) as f64).collect() }
        }
        Task::Sweep { kind, values } if values.is_empty() => return Err(usage(format!("--values for {} is empty", kind.key()))),
        t => t,
    };
    Ok(CommandSpec { subcommand: name, task, config_path: common.config, overrides: common.set, config, out: common.out, allow_partial: common.allow_partial })
}

/// Builds the global rayon pool from FPSI_THREADS when set.
pub fn init_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = raw.trim().parse().map_err(|_| format!("{THREADS_ENV}={raw} is not a thread count"))?;
    if n == 0 {
        return Err(format!("{THREADS_ENV} must be positive"));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn write(path: &Path, text: &str) -> Result<(), String> {
    std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn prepare_out(spec: &CommandSpec) -> Result<(), String> {
    std::fs::create_dir_all(&spec.out).map_err(|e| format!("{}: {e}", spec.out.display()))?;
    write(&spec.out.join("config.toml"), &spec.config.to_toml_string())
}

/// Runs the spec and returns the process exit code.
pub fn execute(spec: &CommandSpec) -> u8 {
    match execute_inner(spec) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            EXIT_ERROR
        }
    }
}

fn partial_code(spec: &CommandSpec, partial: bool) -> u8 {
    if partial && !spec.allow_partial {
        EXIT_PARTIAL
    } else {
        EXIT_OK
    }
}

fn execute_inner(spec: &CommandSpec) -> Result<u8, String> {
    match &spec.task {
        Task::Run => {
            prepare_out(spec)?;
            let (disc, traj) = run_config(&spec.config).map_err(|e| e.to_string())?;
            let s = summarize(&disc, &traj, "run", 0.0);
            write_energy_csv(&traj, &spec.out.join("energy.csv")).map_err(|e| e.to_string())?;
            write(&spec.out.join("summary.json"), &json(&s))?;
            write(&spec.out.join("energy.svg"), &energy_svg(&traj))?;
            write(&spec.out.join("interface.svg"), &interface_svg(&disc, &traj))?;
            export_fields(&disc, traj.last(), &spec.out.join("fields")).map_err(|e| e.to_string())?;
            println!(
                "{} steps of {}, horizon {}, E {:.6e} -> {:.6e}, max ledger residual {:.2e}",
                s.accepted_steps, traj.n_steps, s.certified_horizon, s.e_initial, s.e_final, s.max_ledger_residual
            );
            report_outcome(&s.outcome);
            Ok(partial_code(spec, !s.complete))
        }
        Task::Sweep { kind, values } => {
            prepare_out(spec)?;
            let runs = sweep_runs(&spec.config, *kind, values);
            let report = build_report(*kind, &runs);
            write_sweep(spec, *kind, &runs, &report)?;
            print_sweep(&report);
            Ok(partial_code(spec, report.partial))
        }
        Task::Verify { full } => {
            let scale = if *full { SuiteScale::acceptance() } else { SuiteScale::quick() };
            let results = invariant_suite(&scale);
            print_table(&results);
            std::fs::create_dir_all(&spec.out).map_err(|e| format!("{}: {e}", spec.out.display()))?;
            write(&spec.out.join("verify.json"), &json(&results))?;
            Ok(if results.iter().all(|r| r.passed) { EXIT_OK } else { EXIT_ERROR })
        }
        Task::Export { time, reconstruction } => {
            prepare_out(spec)?;
            let (disc, traj) = run_config(&spec.config).map_err(|e| e.to_string())?;
            let t = time.unwrap_or_else(|| traj.certified_horizon());
            let state = reconstruct(&traj, t, *reconstruction).map_err(|e| e.to_string())?;
            let files = export_fields(&disc, &state, &spec.out.join("fields")).map_err(|e| e.to_string())?;
            write(&spec.out.join("energy.svg"), &energy_svg(&traj))?;
            write(&spec.out.join("interface.svg"), &interface_svg(&disc, &traj))?;
            for f in files {
                println!("{}", f.display());
            }
            report_outcome(&traj.outcome);
            Ok(partial_code(spec, !traj.outcome.is_complete()))
        }
    }
}

fn report_outcome(o: &fpsi_core::Outcome) {
    if let fpsi_core::Outcome::Partial { step, time, reason } = o {
        eprintln!("PARTIAL: stopped before step {step} at t={time}: {reason}");
    }
}

fn write_sweep(spec: &CommandSpec, kind: SweepKind, runs: &[SweepRun], report: &SweepReport) -> Result<(), String> {
    for r in runs {
        let dir = spec.out.join(format!("{}_{}", kind.key(), r.value));
        std::fs::create_dir_all(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        write(&dir.join("config.toml"), &r.config.to_toml_string())?;
        match &r.result {
            Ok((disc, traj)) => {
                write(&dir.join("summary.json"), &json(&summarize(disc, traj, kind.key(), r.value)))?;
                write_energy_csv(traj, &dir.join("energy.csv")).map_err(|e| e.to_string())?;
            }
            Err(e) => write(&dir.join("error.txt"), &format!("{e}\n"))?,
        }
    }
    write(&spec.out.join("report.json"), &json(report))
}

fn print_sweep(report: &SweepReport) {
    println!("{:>12} {:>9} {:>12} {:>14} {:>14} {:>12}", report.kind.key(), "complete", "horizon", "terminal norm", "max drift", "plate share");
    for r in &report.runs {
        println!("{:>12} {:>9} {:>12.6} {:>14.6e} {:>14.6e} {:>12.6e}", r.value, r.complete, r.certified_horizon, r.terminal_norm, r.max_drift, r.plate_share);
    }
    for (v, e) in &report.errors {
        println!("{v:>12} error: {e}");
    }
    let list = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ");
    if !report.difference_ratios.is_empty() {
        println!("difference ratios: {}", list(&report.difference_ratios));
        println!("orders: {}", list(&report.orders));
    }
    if !report.drift_orders.is_empty() {
        println!("drift orders: {}", list(&report.drift_orders));
    }
    if !report.plate_share_scaling.is_empty() {
        println!("plate share / h (relative): {}", list(&report.plate_share_scaling));
    }
    println!("horizons identical: {}", report.horizons_identical);
}

fn print_table(results: &[CheckResult]) {
    println!("{:<3} {:<34} {:<6} {:>7}  detail", "id", "check", "result", "time");
    for r in results {
        println!("{:<3} {:<34} {:<6} {:>6.2}s  {}", r.id, r.name, if r.passed { "PASS" } else { "FAIL" }, r.seconds, r.detail);
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} checks, {failed} failed", results.len());
}

/// Entry point shared by the binary.
pub fn main_with_args(args: Vec<String>) -> ExitCode {
    let spec = match parse(args) {
        Ok(s) => s,
        Err(e) => {
            if e.code == EXIT_OK {
                print!("{e}");
            } else {
                eprint!("{e}");
                if !e.message.ends_with('\n') {
                    eprintln!();
                }
            }
            return ExitCode::from(e.code);
        }
    };
    if let Err(msg) = init_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_ERROR);
    }
    ExitCode::from(execute(&spec))
}
