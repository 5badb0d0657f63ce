use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use qsignal_cli::format::{
    compare_csv, gnuplot_script, phase_log_csv, run_csv, sig6, sweep_csv,
};
use qsignal_cli::orchestrate::{
    build_experiment, compare, controller_kind, controller_name, resolve_scenario, td_grid,
    timed_run, CompareEntry, SolverOptions,
};
use qsignal_cli::scenario_file::scenario_to_toml;
use qsignal_core::experiment::sweep_td;
use qsignal_core::scenario::built_in_scenario;

/// QUBO-driven adaptive traffic-signal control and its benchmark harness.
#[derive(Parser)]
#[command(name = "qsignal", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and emit its hourly CSV report.
    Run(RunArgs),
    /// Sweep the dynamic seconds-per-vehicle value over a grid.
    Sweep(SweepArgs),
    /// Compare controllers over common seeds, reporting improvements.
    Compare(CompareArgs),
    /// Export a built-in scenario as an editable scenario file.
    Scenario(ScenarioArgs),
}

#[derive(Args)]
struct BaseArgs {
    /// Built-in scenario name (simple, dongda) or a scenario file path.
    #[arg(long)]
    scenario: String,
    /// Demand preset: T1-T4 (dongda) or H, D, L, LT, LR, LRB (simple).
    #[arg(long)]
    preset: Option<String>,
    /// Simulated seconds.
    #[arg(long)]
    duration: Option<u64>,
    /// Master seed; all subsystem streams derive from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Exclude speed samples before this time from the metrics.
    #[arg(long)]
    warmup: Option<u64>,
    /// Penalty-factor override (default: recomputed floor per solve).
    #[arg(long)]
    phi: Option<f64>,
    /// Phase-selection solver.
    #[arg(long, value_parser = ["anneal", "exact"])]
    solver: Option<String>,
    /// Annealer restarts.
    #[arg(long)]
    anneal_reads: Option<u32>,
    /// Annealer sweeps per restart.
    #[arg(long)]
    anneal_sweeps: Option<u32>,
    /// Annealer schedule start (inverse temperature).
    #[arg(long)]
    beta_start: Option<f64>,
    /// Annealer schedule end (inverse temperature).
    #[arg(long)]
    beta_end: Option<f64>,
    /// TOML file with defaults for the flags above plus controller/td.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Optional defaults file; explicit flags win over it.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    controller: Option<String>,
    dynamic: Option<bool>,
    td: Option<f64>,
    phi: Option<f64>,
    duration_s: Option<u64>,
    seed: Option<u64>,
    warmup_s: Option<u64>,
    solver: Option<String>,
    anneal: Option<AnnealSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnealSection {
    num_reads: Option<u32>,
    sweeps: Option<u32>,
    beta_start: Option<f64>,
    beta_end: Option<f64>,
}

struct Resolved {
    scenario: qsignal_core::scenario::ScenarioConfig,
    solver: SolverOptions,
    phi: Option<f64>,
    warmup: u64,
    controller: Option<String>,
    dynamic: Option<bool>,
    td: Option<f64>,
}

impl BaseArgs {
    fn resolve(&self) -> Result<Resolved> {
        let file: ConfigFile = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                toml::from_str(&text).context("invalid config file")?
            }
            None => ConfigFile::default(),
        };
        let anneal = file.anneal.unwrap_or_default();
        let solver_name = self.solver.clone().or(file.solver);
        if let Some(name) = &solver_name {
            if name != "anneal" && name != "exact" {
                bail!("unknown solver '{name}' (expected anneal, exact)");
            }
        }
        let scenario = resolve_scenario(
            &self.scenario,
            self.preset.as_deref(),
            self.duration.or(file.duration_s),
            self.seed.or(file.seed),
        )?;
        Ok(Resolved {
            scenario,
            solver: SolverOptions {
                exact: solver_name.as_deref() == Some("exact"),
                anneal_reads: self.anneal_reads.or(anneal.num_reads),
                anneal_sweeps: self.anneal_sweeps.or(anneal.sweeps),
                beta_start: self.beta_start.or(anneal.beta_start),
                beta_end: self.beta_end.or(anneal.beta_end),
            },
            phi: self.phi.or(file.phi),
            warmup: self.warmup.or(file.warmup_s).unwrap_or(0),
            controller: file.controller,
            dynamic: file.dynamic,
            td: file.td,
        })
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    base: BaseArgs,
    /// Signal controller to drive the junction.
    #[arg(long, value_parser = ["fixed", "cqubo", "qubo"])]
    controller: Option<String>,
    /// Size the winning green by its halting queue.
    #[arg(long)]
    dynamic: bool,
    /// Seconds of green per halting vehicle, in (0, 2]; requires --dynamic.
    #[arg(long)]
    td: Option<f64>,
    /// Write the CSV report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the phase-activation log as CSV.
    #[arg(long)]
    phase_log: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    base: BaseArgs,
    /// Adaptive controller to sweep.
    #[arg(long, value_parser = ["cqubo", "qubo"])]
    controller: Option<String>,
    #[arg(long, default_value_t = 0.1)]
    td_from: f64,
    #[arg(long, default_value_t = 1.0)]
    td_to: f64,
    #[arg(long, default_value_t = 0.1)]
    td_step: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write a gnuplot script rendering the sweep (needs --out).
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    base: BaseArgs,
    /// Comma-separated controllers; the first is the baseline.
    #[arg(long, default_value = "fixed,cqubo,qubo")]
    controllers: String,
    /// Seeds per controller (seed, seed+1, ...).
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// Give the adaptive controllers dynamic timing with this t_d.
    #[arg(long)]
    td: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Built-in scenario to export.
    #[arg(long, value_parser = ["simple", "dongda"])]
    name: String,
    /// Demand preset to embed as [[flows.flow]] entries.
    #[arg(long)]
    preset: Option<String>,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit(path: &Option<PathBuf>, contents: &str) -> Result<()> {
    match path {
        Some(path) => std::fs::write(path, contents)
            .with_context(|| format!("writing {}", path.display())),
        None => {
            std::io::stdout().write_all(contents.as_bytes())?;
            Ok(())
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let resolved = args.base.resolve()?;
    let controller_name_str = args
        .controller
        .or(resolved.controller)
        .context("--controller is required (fixed, cqubo, qubo)")?;
    let kind = controller_kind(&controller_name_str)?;
    let dynamic = args.dynamic || resolved.dynamic.unwrap_or(false);
    let td = args.td.or(resolved.td);
    let dynamic_td = match (dynamic, td) {
        (true, Some(td)) => Some(td),
        (true, None) => bail!("--dynamic requires --td <seconds-per-vehicle>"),
        (false, Some(_)) => bail!("--td requires --dynamic"),
        (false, None) => None,
    };
    let seed = resolved.scenario.seed;
    let config = build_experiment(
        resolved.scenario,
        kind,
        dynamic_td,
        &resolved.solver,
        resolved.phi,
        resolved.warmup,
    )?;
    let result = timed_run(&config)?;

    eprintln!(
        "{}: avg speed {} m/s over {} hour(s); {} injected, {} departed, wall {:.2?}",
        controller_name(kind),
        sig6(result.overall_avg_speed_mps),
        result.hours.len(),
        result.total_injected,
        result.total_departed,
        result.wall_time,
    );
    for hour in &result.empty_hours {
        eprintln!("warning: hour {hour} had no speed samples and is omitted");
    }
    if result.decode_failures > 0 {
        eprintln!(
            "warning: {} solver selections violated one-hot and were ignored",
            result.decode_failures
        );
    }
    if let Some(path) = &args.phase_log {
        std::fs::write(path, phase_log_csv(&result.phase_log))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    emit(&args.out, &run_csv(&result, controller_name(kind), dynamic_td, seed))
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let resolved = args.base.resolve()?;
    let name = args
        .controller
        .or(resolved.controller)
        .unwrap_or_else(|| "qubo".to_string());
    let kind = controller_kind(&name)?;
    let values = td_grid(args.td_from, args.td_to, args.td_step)?;
    let seed = resolved.scenario.seed;
    let base = build_experiment(
        resolved.scenario,
        kind,
        Some(values[0]),
        &resolved.solver,
        resolved.phi,
        resolved.warmup,
    )?;
    let sweep = sweep_td(&base, &values).map_err(anyhow::Error::msg)?;
    let best = &sweep.rows[sweep.best];
    eprintln!(
        "{name}: best t_d {} with avg speed {} m/s over {} runs",
        sig6(best.t_d),
        sig6(best.avg_speed_mps),
        sweep.rows.len()
    );
    if let Some(plot) = &args.plot {
        let csv = args
            .out
            .as_ref()
            .context("--plot needs --out so the script can reference the CSV")?;
        std::fs::write(
            plot,
            gnuplot_script(&csv.display().to_string(), 4, &format!("{name} t_d sweep")),
        )?;
    }
    emit(&args.out, &sweep_csv(&sweep, &name, seed))
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let resolved = args.base.resolve()?;
    let td = args.td.or(resolved.td);
    let entries: Vec<CompareEntry> = args
        .controllers
        .split(',')
        .map(|name| {
            let kind = controller_kind(name.trim())?;
            let dynamic_td = match kind {
                qsignal_core::controller::ControllerKind::Fixed => None,
                _ => td,
            };
            Ok(CompareEntry { controller: kind, dynamic_td })
        })
        .collect::<Result<_>>()?;
    if entries.is_empty() {
        bail!("--controllers must name at least one controller");
    }
    if args.seeds < 1 {
        bail!("--seeds must be at least 1");
    }
    let rows = compare(
        &resolved.scenario,
        &entries,
        args.seeds,
        &resolved.solver,
        resolved.phi,
        resolved.warmup,
    )?;
    for row in &rows {
        match row.improvement_pct {
            Some(pct) => eprintln!(
                "{}: {} m/s ({}{}% vs {})",
                row.controller,
                sig6(row.mean_speed_mps),
                if pct >= 0.0 { "+" } else { "" },
                sig6(pct),
                rows[0].controller
            ),
            None => eprintln!("{}: {} m/s (baseline)", row.controller, sig6(row.mean_speed_mps)),
        }
    }
    emit(&args.out, &compare_csv(&rows))
}

fn cmd_scenario(args: ScenarioArgs) -> Result<()> {
    let mut config = built_in_scenario(&args.name).map_err(anyhow::Error::msg)?;
    if let Some(preset) = &args.preset {
        let preset = qsignal_core::scenario::demand_preset(preset).map_err(anyhow::Error::msg)?;
        config.flows =
            qsignal_core::scenario::preset_flows(&preset, &config.network, config.duration_s)
                .map_err(anyhow::Error::msg)?;
    }
    emit(&args.out, &scenario_to_toml(&config)?)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Scenario(args) => cmd_scenario(args),
    }
}
