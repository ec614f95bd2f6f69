use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use wsopt_core::error::{Error, Result};
use wsopt_core::market::{
    compute_real_returns, default_price_path, fit_return_model, load_price_csv, ReturnModel,
    DATA_DIR_ENV,
};
use wsopt_core::mortality::{hazard_sequence, load_life_table_file, HazardSequence, LifeTable, MAX_AGE};
use wsopt_core::policy::Policy;
use wsopt_core::schedule::{compute_thresholds, CashFlowSchedule, ScheduleSpec};
use wsopt_core::simulate::{simulate_success, simulate_success_mortality, SimConfig};
use wsopt_core::solver::{
    backward_induction, backward_induction_mortality, SolverConfig, SurfaceFile,
};
use wsopt_core::sweep::{run_sweep, write_sweep_csv, CheckPolicy, SweepMode, SweepSettings, SweepSpec};

#[derive(Parser)]
#[command(name = "wsopt", version, about = "Maximal probability of completing a withdrawal schedule")]
struct Cli {
    /// Cap on worker threads; results are identical for any value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the Normal return model to an annual price series.
    Fit(FitArgs),
    /// Solve for the value and optimal policy surfaces of a schedule.
    Solve(SolveArgs),
    /// Estimate the success probability of a policy by simulation.
    Simulate(SimulateArgs),
    /// Smallest lump sum or annual contribution reaching a confidence level.
    Sweep(SweepArgs),
}

#[derive(Args, Serialize)]
struct FitArgs {
    /// `year,index,dividend,cpi` CSV. Defaults to the file in the data directory.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Where to write the fitted model JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct MarketArgs {
    /// Return model JSON `{"mu": .., "sigma": ..}`. Defaults to (1.083, 0.1753).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Disaster level w.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    w: f64,
    /// Annual real bond rate r.
    #[arg(long, default_value_t = 0.0)]
    r: f64,
}

#[derive(Args, Serialize)]
struct MortalityArgs {
    /// `age,death_rate` CSV. Defaults to the bundled table.
    #[arg(long)]
    life_table: Option<PathBuf>,
    /// Age at time 0. Switches to the mortality-adjusted target with horizon 120 - age.
    #[arg(long)]
    start_age: Option<usize>,
}

#[derive(Args, Serialize)]
struct SolveArgs {
    /// Schedule JSON: `{"flows": [..]}`, `{"lump_sum": {"c0", "withdrawals"}}` or `{"dca": {"x", "k1", "k2"}}`.
    #[arg(long)]
    schedule: PathBuf,
    #[command(flatten)]
    market: MarketArgs,
    #[command(flatten)]
    mortality: MortalityArgs,
    /// Grid resolution M.
    #[arg(long = "M", default_value_t = 300)]
    grid: usize,
    /// Surface JSON output.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    schedule: PathBuf,
    #[command(flatten)]
    market: MarketArgs,
    #[command(flatten)]
    mortality: MortalityArgs,
    /// `optimal:<surface-file>` or `constant:<q>`.
    #[arg(long)]
    policy: String,
    /// Number of paths.
    #[arg(long = "N", default_value_t = 100_000)]
    paths: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Result JSON output; printed to stdout either way.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ModeArg {
    Lump,
    Dca,
    LumpMortality,
    DcaMortality,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum CheckArg {
    Optimal,
    AllStock,
}

#[derive(Args, Serialize)]
struct SweepArgs {
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Comma-separated confidence levels.
    #[arg(long, default_value = "0.95")]
    confidence: String,
    /// Contribution counts: `a,b,c` or `start:end[:step]`, inclusive.
    #[arg(long, default_value = "")]
    k1: String,
    /// Withdrawal counts, same syntax as --k1.
    #[arg(long, default_value = "")]
    k2: String,
    /// Start ages for the mortality modes, same syntax as --k1.
    #[arg(long, default_value = "")]
    start_age: String,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    w: f64,
    #[arg(long, default_value_t = 0.0)]
    r: f64,
    #[arg(long)]
    life_table: Option<PathBuf>,
    #[arg(long = "M", default_value_t = 300)]
    grid: usize,
    /// Paths for the simulation check at each returned amount.
    #[arg(long = "N", default_value_t = 100_000)]
    paths: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Search resolution in the swept amount.
    #[arg(long, default_value_t = 0.01)]
    tolerance: f64,
    /// Search bracket `lo,hi`.
    #[arg(long)]
    bracket: Option<String>,
    /// Skip the simulation checks.
    #[arg(long)]
    no_sim: bool,
    /// Policy reported in the sim_value column.
    #[arg(long, value_enum, default_value_t = CheckArg::Optimal)]
    check: CheckArg,
    /// CSV output.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct RunManifest<'a, C: Serialize> {
    command: &'a str,
    tool_version: &'a str,
    argv: Vec<String>,
    threads: usize,
    config: &'a C,
    extra: Value,
    wall_clock_seconds: f64,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Validation(_)
        | Error::TriviallySatisfiable { .. }
        | Error::InsufficientData(_)
        | Error::Degenerate(_) => 2,
        Error::NotAchievable { .. } => 3,
        Error::Io(_) | Error::Format(_) | Error::Json(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .expect("global thread pool is configured once");
    }
    let started = Instant::now();
    let outcome = match &cli.command {
        Command::Fit(a) => cmd_fit(a, started),
        Command::Solve(a) => cmd_solve(a, started),
        Command::Simulate(a) => cmd_simulate(a, started),
        Command::Sweep(a) => cmd_sweep(a, started),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn emit_manifest<C: Serialize>(
    command: &str,
    config: &C,
    extra: Value,
    out: Option<&Path>,
    started: Instant,
) -> Result<()> {
    let manifest = RunManifest {
        command,
        tool_version: env!("CARGO_PKG_VERSION"),
        argv: std::env::args().collect(),
        threads: rayon::current_num_threads(),
        config,
        extra,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    match out {
        Some(path) => fs::write(manifest_path(path), text)?,
        None => eprintln!("{text}"),
    }
    Ok(())
}

fn load_model(path: Option<&Path>) -> Result<ReturnModel> {
    match path {
        Some(p) => ReturnModel::from_json(&fs::read_to_string(p)?),
        None => Ok(ReturnModel::default()),
    }
}

fn load_table(path: Option<&Path>) -> Result<LifeTable> {
    match path {
        Some(p) => load_life_table_file(p),
        None => Ok(LifeTable::bundled()),
    }
}

fn load_schedule(path: &Path) -> Result<CashFlowSchedule> {
    ScheduleSpec::from_json(&fs::read_to_string(path)?)?.build()
}

/// With a start age, extend the schedule's last (withdrawal) flow up to the
/// age-120 horizon and return the matching hazards.
fn apply_mortality(
    schedule: CashFlowSchedule,
    args: &MortalityArgs,
) -> Result<(CashFlowSchedule, Option<HazardSequence>)> {
    let Some(age) = args.start_age else {
        if args.life_table.is_some() {
            return Err(Error::Validation("--life-table needs --start-age".into()));
        }
        return Ok((schedule, None));
    };
    let table = load_table(args.life_table.as_deref())?;
    let hazards = hazard_sequence(&table, age)?;
    let k = MAX_AGE - age;
    let last = *schedule.flows().last().expect("schedules are non-empty");
    if last >= 0.0 && schedule.horizon() < k {
        return Err(Error::Validation(
            "the schedule must end with a withdrawal to be extended to the mortality horizon"
                .into(),
        ));
    }
    Ok((schedule.extended_to(k, last)?, Some(hazards)))
}

fn cmd_fit(args: &FitArgs, started: Instant) -> Result<u8> {
    let path = args.data.clone().unwrap_or_else(default_price_path);
    let records = load_price_csv(&path).map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(
            io.kind(),
            format!(
                "{}: {io} (pass --data or set {DATA_DIR_ENV})",
                path.display()
            ),
        )),
        e => e,
    })?;
    let returns = compute_real_returns(&records)?;
    let report = fit_return_model(&returns)?;
    if let Some(out) = &args.out {
        fs::write(out, report.model.to_json())?;
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    emit_manifest(
        "fit",
        args,
        json!({ "data": path, "years": records.len() }),
        args.out.as_deref(),
        started,
    )?;
    Ok(0)
}

fn cmd_solve(args: &SolveArgs, started: Instant) -> Result<u8> {
    let model = load_model(args.market.model.as_deref())?;
    let config = SolverConfig::new(args.grid)?;
    let (schedule, hazards) = apply_mortality(load_schedule(&args.schedule)?, &args.mortality)?;
    let thresholds = compute_thresholds(&schedule, args.market.w, args.market.r)?;
    let (values, policy) = match &hazards {
        None => backward_induction(&schedule, &thresholds, &model, &config)?,
        Some(h) => backward_induction_mortality(&schedule, &thresholds, &model, h, &config)?,
    };
    SurfaceFile::from_surfaces(&values, &policy).save(&args.out)?;
    let summary = json!({
        "horizon": schedule.horizon(),
        "c0": schedule.initial(),
        "w0": thresholds.get(0),
        "v0_at_c0": values.v0_at_c0,
        "residual_survival": values.residual_survival,
        "lower_bound": values.lower_bound,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    emit_manifest(
        "solve",
        args,
        json!({ "model": model, "summary": summary }),
        Some(&args.out),
        started,
    )?;
    Ok(0)
}

fn cmd_simulate(args: &SimulateArgs, started: Instant) -> Result<u8> {
    let model = load_model(args.market.model.as_deref())?;
    let policy = Policy::from_descriptor(&args.policy)?;
    let (schedule, hazards) = apply_mortality(load_schedule(&args.schedule)?, &args.mortality)?;
    let config = SimConfig {
        n: args.paths,
        seed: args.seed,
        w: args.market.w,
        r: args.market.r,
    };
    let result = match &hazards {
        None => simulate_success(&schedule, &policy, &model, &config)?,
        Some(h) => simulate_success_mortality(&schedule, &policy, &model, h, &config)?,
    };
    let text = serde_json::to_string_pretty(&result)?;
    if let Some(out) = &args.out {
        fs::write(out, &text)?;
    }
    println!("{text}");
    emit_manifest(
        "simulate",
        args,
        json!({ "model": model, "horizon": schedule.horizon() }),
        args.out.as_deref(),
        started,
    )?;
    Ok(0)
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Validation(format!("bad {what} value `{s}`")))
        })
        .collect()
}

/// `a,b,c`, with any item allowed to be `start:end[:step]` (inclusive).
fn parse_range(text: &str, what: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let parts: Vec<usize> = parse_list(&item.replace(':', ","), what)?;
        match parts.as_slice() {
            [v] => out.push(*v),
            [a, b] => out.extend(*a..=*b),
            [_, _, 0] => {
                return Err(Error::Validation(format!("{what} range step must be positive")))
            }
            [a, b, s] => out.extend((*a..=*b).step_by(*s)),
            _ => return Err(Error::Validation(format!("bad {what} range `{item}`"))),
        }
    }
    Ok(out)
}

fn cmd_sweep(args: &SweepArgs, started: Instant) -> Result<u8> {
    let mode = match args.mode {
        ModeArg::Lump => SweepMode::Lump,
        ModeArg::Dca => SweepMode::Dca,
        ModeArg::LumpMortality => SweepMode::LumpMortality,
        ModeArg::DcaMortality => SweepMode::DcaMortality,
    };
    let bracket = match &args.bracket {
        None => None,
        Some(b) => match parse_list::<f64>(b, "bracket")?.as_slice() {
            [lo, hi] => Some((*lo, *hi)),
            _ => return Err(Error::Validation(format!("bracket must be `lo,hi`, got `{b}`"))),
        },
    };
    let settings = SweepSettings {
        model: load_model(args.model.as_deref())?,
        solver: SolverConfig::new(args.grid)?,
        w: args.w,
        r: args.r,
        tolerance: args.tolerance,
        bracket,
        sim: (!args.no_sim).then_some(SimConfig {
            n: args.paths,
            seed: args.seed,
            w: args.w,
            r: args.r,
        }),
    };
    let spec = SweepSpec {
        mode,
        confidences: parse_list(&args.confidence, "confidence")?,
        k1: parse_range(&args.k1, "k1")?,
        k2: parse_range(&args.k2, "k2")?,
        start_ages: parse_range(&args.start_age, "start age")?,
    };
    let table = load_table(args.life_table.as_deref())?;
    let rows = run_sweep(&spec, &settings, &table)?;
    let check = match args.check {
        CheckArg::Optimal => CheckPolicy::Optimal,
        CheckArg::AllStock => CheckPolicy::AllStock,
    };
    write_sweep_csv(&rows, check, fs::File::create(&args.out)?)?;
    let failures: Vec<&String> = rows.iter().filter_map(|r| r.outcome.as_ref().err()).collect();
    for f in &failures {
        eprintln!("cell not achieved: {f}");
    }
    emit_manifest(
        "sweep",
        args,
        json!({ "model": settings.model, "cells": rows.len(), "unachieved": failures.len() }),
        Some(&args.out),
        started,
    )?;
    Ok(if failures.is_empty() { 0 } else { 3 })
}
