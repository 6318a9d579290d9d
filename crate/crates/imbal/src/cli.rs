//! The `imbal` command line. [`run`] is the whole program minus process
//! plumbing, so tests call it in-process.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use imbal_core::milp::{solve_milp, Status};
use imbal_core::rng::{derive_seed, stream};
use imbal_core::scheduler::build_problem;
use imbal_core::simulator::{self, Mode, SimError};
use imbal_core::{Calendar, DemandSeries};

use crate::config::{Capacity, RunConfig};
use crate::io::{self, Summary, SweepSummary};
use crate::lpformat;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "imbal", version, about = "Balancing-group formation and stochastic battery scheduling")]
pub struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    /// Master seed (overrides the `seed` key).
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sort customers by their aggregation criterion and split them into
    /// balancing groups.
    FormGroups {
        /// Demand CSV (overrides `data.demand_csv`).
        #[arg(long, value_name = "CSV")]
        demand: Option<PathBuf>,
    },
    /// Run the closed-loop campaign for one group.
    Simulate {
        #[arg(long, value_enum, default_value_t = SimMode::Sswcd)]
        mode: SimMode,
        /// Demand CSV (overrides `data.demand_csv`).
        #[arg(long, value_name = "CSV")]
        demand: Option<PathBuf>,
    },
    /// Write a synthetic fleet as a demand CSV.
    Datagen,
    /// Solve an LP-format problem file and print the solution.
    Solve {
        #[arg(value_name = "FILE")]
        problem: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimMode {
    Sswcd,
    Deterministic,
    Nobattery,
    Sweep,
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Input(_) => EXIT_INPUT,
            Failure::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Runtime(m) => m,
        }
    }
}

/// Run one command. Returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(&cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message());
            f.code()
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|e| Failure::Input(e.to_string()))?,
        None => RunConfig::default(),
    };
    for s in &cli.set {
        cfg.apply_override(s).map_err(|e| Failure::Input(e.to_string()))?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(|e| Failure::Input(e.to_string()))?;
    Ok(cfg)
}

fn dispatch(cli: &Cli, stdout: &mut dyn Write) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::FormGroups { demand } => cmd_form_groups(&cfg, demand.as_deref(), &cli.out, stdout),
        Command::Simulate { mode, demand } => cmd_simulate(&cfg, *mode, demand.as_deref(), &cli.out, stdout),
        Command::Datagen => cmd_datagen(&cfg, &cli.out, stdout),
        Command::Solve { problem } => cmd_solve(&cfg, problem, stdout),
    }
}

fn say(stdout: &mut dyn Write, line: std::fmt::Arguments<'_>) -> Result<(), Failure> {
    writeln!(stdout, "{line}").map_err(|e| Failure::Runtime(format!("writing to stdout: {e}")))
}

fn write_out(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, Failure> {
    let path = dir.join(name);
    io::write_atomic(&path, bytes).map_err(|e| Failure::Runtime(e.to_string()))?;
    Ok(path)
}

fn sim_failure(e: SimError) -> Failure {
    match e {
        SimError::InvalidConfig(_) | SimError::Predict(_) | SimError::Groups(_) | SimError::Core(_) => {
            Failure::Input(e.to_string())
        }
        SimError::Schedule { .. } => Failure::Runtime(e.to_string()),
    }
}

/// The fleet and calendar selected by the configuration.
fn load_fleet(cfg: &RunConfig, demand: Option<&Path>) -> Result<(Vec<DemandSeries>, Calendar), Failure> {
    let calendar = match &cfg.holidays {
        Some(p) => io::load_holidays(p).map_err(|e| Failure::Input(e.to_string()))?,
        None => Calendar::default(),
    };
    let path = demand.map(Path::to_path_buf).or_else(|| cfg.demand_csv.clone());
    let fleet = match path {
        Some(p) => io::load_demand_csv(&p).map_err(|e| Failure::Input(e.to_string()))?,
        None => simulator::generate_synthetic_fleet(&cfg.clusters, cfg.fleet_days, cfg.fleet_start, cfg.seed)
            .map_err(sim_failure)?,
    };
    Ok((fleet, calendar))
}

fn group_seed(cfg: &RunConfig) -> u64 {
    derive_seed(cfg.seed, &[stream::GROUPS])
}

fn cmd_form_groups(cfg: &RunConfig, demand: Option<&Path>, out: &Path, stdout: &mut dyn Write) -> Result<(), Failure> {
    let (fleet, _) = load_fleet(cfg, demand)?;
    let formation = simulator::form_fleet_groups(&fleet, &cfg.groups, group_seed(cfg)).map_err(sim_failure)?;
    write_out(out, "groups.json", &io::groups_json(&formation))?;
    for split in &formation.splits {
        write_out(out, &io::posterior_file_name(split), &io::posterior_csv(split))?;
    }
    say(
        stdout,
        format_args!("formed {} groups from {} customers", formation.groups.len(), fleet.len()),
    )?;
    for (i, g) in formation.groups.iter().enumerate() {
        say(
            stdout,
            format_args!(
                "group {i}: customers {}..={} ({} members), expected criterion {:.3} kWh, capacity bound {:.1} kWh",
                g.start,
                g.end,
                g.size(),
                g.expected_dac_kwh,
                g.capacity_bound_kwh
            ),
        )?;
    }
    Ok(())
}

fn dump_failure(cfg: &RunConfig, e: SimError, out: &Path) -> Failure {
    let SimError::Schedule { t, source, input } = &e else {
        return sim_failure(e);
    };
    let comment = format!("window at period {t} failed: {source}");
    let dump = build_problem(input, &cfg.campaign.scheduler)
        .map_err(|b| b.to_string())
        .and_then(|p| {
            let name = format!("failed_window_{t}.lp");
            write_out(out, &name, lpformat::write_lp(&p.milp, &comment).as_bytes()).map_err(|f| f.message().to_string())
        });
    match dump {
        Ok(path) => Failure::Runtime(format!("{e}; problem written to {}", path.display())),
        Err(why) => Failure::Runtime(format!("{e}; problem dump failed: {why}")),
    }
}

fn cmd_simulate(
    cfg: &RunConfig,
    mode: SimMode,
    demand: Option<&Path>,
    out: &Path,
    stdout: &mut dyn Write,
) -> Result<(), Failure> {
    let clock = Instant::now();
    let (fleet, calendar) = load_fleet(cfg, demand)?;
    let formation = simulator::form_fleet_groups(&fleet, &cfg.groups, group_seed(cfg)).map_err(sim_failure)?;
    let group = formation.groups.get(cfg.group_index).ok_or_else(|| {
        Failure::Input(format!(
            "groups.index = {} but only {} groups were formed",
            cfg.group_index,
            formation.groups.len()
        ))
    })?;
    let series = simulator::group_series(&fleet, group, &format!("group{}", cfg.group_index)).map_err(sim_failure)?;
    let prepared = simulator::prepare_campaign(&cfg.campaign(), &series, &calendar).map_err(sim_failure)?;
    let bound = group.capacity_bound_kwh;
    let elapsed = |cfg: &RunConfig| cfg.timing.then(|| clock.elapsed().as_secs_f64());

    write_out(out, "prediction_errors.csv", &io::prediction_error_csv(&prepared.errors))?;
    if let Some(first) = prepared.scenarios.first() {
        write_out(out, &format!("scenarios_{}.csv", prepared.start), &io::scenario_csv(first))?;
    }

    if mode == SimMode::Sweep {
        let caps: Vec<f64> = match &cfg.sweep_kwh {
            Some(k) => k.clone(),
            None => cfg.sweep_pct_of_bound.iter().map(|p| p / 100.0 * bound).collect(),
        };
        let points = sweep(cfg, &prepared, &caps).map_err(|e| dump_failure(cfg, e, out))?;
        write_out(out, "sweep.csv", &io::sweep_csv(&points))?;
        let summary = SweepSummary {
            basic_cost: prepared.basic_cost(),
            capacities_kwh: points.iter().map(|p| p.capacity_kwh).collect(),
            pct_of_basic: points.iter().map(|p| p.pct_of_basic).collect(),
            runtime_s: elapsed(cfg),
        };
        write_out(out, "sweep_summary.json", &io::sweep_json(&summary))?;
        for p in &points {
            say(
                stdout,
                format_args!("sweep: capacity {:.1} kWh -> {:.2}% of basic cost", p.capacity_kwh, p.pct_of_basic),
            )?;
        }
        return Ok(());
    }

    let capacity = match cfg.battery.capacity {
        Capacity::GroupBound => bound,
        Capacity::Kwh(k) => k,
    };
    let battery = cfg.battery.spec(capacity);
    let sim_mode = match mode {
        SimMode::Sswcd => Mode::Sswcd,
        SimMode::Deterministic => Mode::Deterministic,
        _ => Mode::NoBattery,
    };
    let trace = simulator::run(&prepared, sim_mode, &battery).map_err(|e| dump_failure(cfg, e, out))?;
    let name = sim_mode.name();
    write_out(out, &format!("trace_{name}.csv"), &io::trace_csv(&trace))?;
    let summary = Summary::from_trace(&trace, elapsed(cfg));
    write_out(out, &format!("summary_{name}.json"), &io::summary_json(&summary))?;
    say(
        stdout,
        format_args!(
            "{name}: total_cost {:.2} basic_cost {:.2} reduction {:.2}% over {} periods",
            summary.total_cost, summary.basic_cost, summary.reduction_pct, summary.periods
        ),
    )
}

/// Capacity sweep with the configured battery shape.
fn sweep(
    cfg: &RunConfig,
    prepared: &simulator::PreparedCampaign,
    caps: &[f64],
) -> Result<Vec<simulator::SweepPoint>, SimError> {
    caps.iter()
        .map(|&c| {
            let trace = simulator::run(prepared, Mode::Sswcd, &cfg.battery.spec(c))?;
            Ok(simulator::SweepPoint {
                capacity_kwh: c,
                total_cost: trace.total_cost,
                pct_of_basic: trace.pct_of_basic(),
            })
        })
        .collect()
}

fn cmd_datagen(cfg: &RunConfig, out: &Path, stdout: &mut dyn Write) -> Result<(), Failure> {
    let fleet = simulator::generate_synthetic_fleet(&cfg.clusters, cfg.fleet_days, cfg.fleet_start, cfg.seed)
        .map_err(sim_failure)?;
    let path = write_out(out, "demand.csv", &io::demand_csv(&fleet))?;
    let rows: usize = fleet.iter().map(DemandSeries::len).sum();
    say(
        stdout,
        format_args!("wrote {} customers, {rows} rows to {}", fleet.len(), path.display()),
    )
}

fn status_name(s: Status) -> &'static str {
    match s {
        Status::Optimal => "optimal",
        Status::Infeasible => "infeasible",
        Status::Unbounded => "unbounded",
        Status::NodeLimit => "node_limit",
    }
}

fn cmd_solve(cfg: &RunConfig, problem: &Path, stdout: &mut dyn Write) -> Result<(), Failure> {
    let text = std::fs::read_to_string(problem).map_err(|e| Failure::Input(format!("{}: {e}", problem.display())))?;
    let model = lpformat::parse_lp(&text).map_err(|e| Failure::Input(format!("{}: {e}", problem.display())))?;
    let sol = solve_milp(&model.problem, &cfg.campaign.scheduler.bnb).map_err(|e| Failure::Runtime(e.to_string()))?;
    say(stdout, format_args!("status: {}", status_name(sol.status)))?;
    if sol.x.is_empty() {
        return Ok(());
    }
    say(stdout, format_args!("objective: {}", model.reported_objective(sol.objective)))?;
    say(stdout, format_args!("nodes: {}", sol.nodes))?;
    let lp = &model.problem.lp;
    for (j, v) in sol.x.iter().enumerate() {
        say(stdout, format_args!("{} = {}", lp.var_name(j), v))?;
    }
    Ok(())
}
