//! Resolving scenarios, building experiment configs, and running the
//! multi-seed / multi-controller batches behind `sweep` and `compare`.

use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;

use qsignal_core::controller::{ControllerKind, DynamicGreen, SolverChoice};
use qsignal_core::experiment::{run_experiment, ExperimentConfig, ExperimentResult};
use qsignal_core::qubo::AnnealConfig;
use qsignal_core::scenario::{built_in_scenario, demand_preset, preset_flows, ScenarioConfig};

use crate::format::CompareRow;
use crate::scenario_file::parse_scenario;

pub fn controller_kind(name: &str) -> Result<ControllerKind> {
    match name {
        "fixed" => Ok(ControllerKind::Fixed),
        "cqubo" => Ok(ControllerKind::CQubo),
        "qubo" => Ok(ControllerKind::Qubo),
        other => bail!("unknown controller '{other}' (expected fixed, cqubo, qubo)"),
    }
}

pub fn controller_name(kind: ControllerKind) -> &'static str {
    match kind {
        ControllerKind::Fixed => "fixed",
        ControllerKind::CQubo => "cqubo",
        ControllerKind::Qubo => "qubo",
    }
}

/// Loads a scenario by built-in name or file path, then applies the demand
/// preset and run overrides.
pub fn resolve_scenario(
    spec: &str,
    preset: Option<&str>,
    duration: Option<u64>,
    seed: Option<u64>,
) -> Result<ScenarioConfig> {
    let mut config = match built_in_scenario(spec) {
        Ok(config) => config,
        Err(_) if Path::new(spec).exists() => {
            let text = std::fs::read_to_string(spec)
                .with_context(|| format!("reading scenario file {spec}"))?;
            parse_scenario(&text)?
        }
        Err(e) => {
            return Err(anyhow!("{e}; or pass a path to a scenario file (not found: {spec})"))
        }
    };
    if let Some(duration) = duration {
        config.duration_s = duration;
        for flow in &mut config.flows {
            // Windows that tracked the old duration follow the override.
            if flow.end_s == 0 || flow.end_s > duration {
                flow.end_s = duration;
            }
        }
    }
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(name) = preset {
        let preset = demand_preset(name)?;
        config.flows = preset_flows(&preset, &config.network, config.duration_s)?;
    }
    if config.flows.is_empty() {
        bail!("scenario '{spec}' has no demand; pass --preset or define [[flows.flow]]");
    }
    Ok(config)
}

/// Solver and timing knobs shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct SolverOptions {
    pub exact: bool,
    pub anneal_reads: Option<u32>,
    pub anneal_sweeps: Option<u32>,
    pub beta_start: Option<f64>,
    pub beta_end: Option<f64>,
}

impl SolverOptions {
    pub fn build(&self) -> Result<SolverChoice> {
        if self.exact {
            let overridden = self.anneal_reads.is_some()
                || self.anneal_sweeps.is_some()
                || self.beta_start.is_some()
                || self.beta_end.is_some();
            if overridden {
                bail!("annealer flags conflict with --solver exact");
            }
            return Ok(SolverChoice::Exact);
        }
        let defaults = AnnealConfig::default();
        Ok(SolverChoice::Anneal(AnnealConfig {
            num_reads: self.anneal_reads.unwrap_or(defaults.num_reads),
            sweeps: self.anneal_sweeps.unwrap_or(defaults.sweeps),
            beta_start: self.beta_start.unwrap_or(defaults.beta_start),
            beta_end: self.beta_end.unwrap_or(defaults.beta_end),
            seed: 0,
        }))
    }
}

pub fn build_experiment(
    scenario: ScenarioConfig,
    controller: ControllerKind,
    dynamic_td: Option<f64>,
    solver: &SolverOptions,
    phi: Option<f64>,
    warmup_s: u64,
) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::new(scenario, controller);
    config.dynamic = dynamic_td.map(DynamicGreen::new);
    config.solver = solver.build()?;
    config.phi = phi;
    config.warmup_s = warmup_s;
    config.validate().map_err(|e| anyhow!(e))?;
    Ok(config)
}

/// Runs one experiment and stamps its wall-clock time.
pub fn timed_run(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let start = Instant::now();
    let mut result = run_experiment(config).map_err(|e| anyhow!(e))?;
    result.wall_time = start.elapsed();
    Ok(result)
}

/// Mean overall speed across `seeds` consecutive seeds starting at the
/// config's own; runs in parallel, results reduced in seed order.
pub fn mean_speed_over_seeds(base: &ExperimentConfig, seeds: u64) -> Result<f64> {
    assert!(seeds >= 1);
    let speeds: Result<Vec<f64>> = (0..seeds)
        .into_par_iter()
        .map(|offset| {
            let mut config = base.clone();
            config.seed = base.seed + offset;
            Ok(run_experiment(&config).map_err(|e| anyhow!(e))?.overall_avg_speed_mps)
        })
        .collect();
    let speeds = speeds?;
    Ok(speeds.iter().sum::<f64>() / speeds.len() as f64)
}

/// One request line of a comparison: a controller, optionally with dynamic
/// timing.
#[derive(Debug, Clone, Copy)]
pub struct CompareEntry {
    pub controller: ControllerKind,
    pub dynamic_td: Option<f64>,
}

/// Runs every entry over the same seeds and reports means and improvements
/// relative to the first entry.
pub fn compare(
    scenario: &ScenarioConfig,
    entries: &[CompareEntry],
    seeds: u64,
    solver: &SolverOptions,
    phi: Option<f64>,
    warmup_s: u64,
) -> Result<Vec<CompareRow>> {
    let mut rows = Vec::with_capacity(entries.len());
    for entry in entries {
        let config = build_experiment(
            scenario.clone(),
            entry.controller,
            entry.dynamic_td,
            solver,
            phi,
            warmup_s,
        )?;
        let mean = mean_speed_over_seeds(&config, seeds)?;
        let improvement = rows.first().map(|baseline: &CompareRow| {
            100.0 * (mean / baseline.mean_speed_mps - 1.0)
        });
        rows.push(CompareRow {
            controller: controller_name(entry.controller).to_string(),
            t_d: entry.dynamic_td,
            seeds,
            mean_speed_mps: mean,
            improvement_pct: improvement,
        });
    }
    Ok(rows)
}

/// The `--td-from/--td-to/--td-step` grid.
pub fn td_grid(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !(from > 0.0 && from <= 2.0) || !(to > 0.0 && to <= 2.0) || from > to {
        bail!("t_d range must satisfy 0 < from <= to <= 2");
    }
    if !(step > 0.0) {
        bail!("t_d step must be positive");
    }
    let mut values = Vec::new();
    let mut k = 0u32;
    loop {
        let value = from + step * k as f64;
        if value > to + 1e-9 {
            break;
        }
        // Snap near-integral multiples so 0.1 + 2*0.1 prints as 0.3.
        values.push((value * 1e9).round() / 1e9);
        k += 1;
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn td_grid_covers_the_range_inclusively() {
        let grid = td_grid(0.1, 1.0, 0.1).unwrap();
        assert_eq!(grid.len(), 10);
        assert_eq!(grid[0], 0.1);
        assert_eq!(grid[9], 1.0);
        assert!(td_grid(0.0, 1.0, 0.1).is_err());
        assert!(td_grid(0.5, 0.1, 0.1).is_err());
    }

    #[test]
    fn unknown_controller_is_rejected() {
        assert!(controller_kind("qubo").is_ok());
        assert!(controller_kind("magic").is_err());
    }

    #[test]
    fn resolve_rejects_a_missing_scenario() {
        let err = resolve_scenario("nope", None, None, None).unwrap_err();
        assert!(err.to_string().contains("simple"), "{err}");
    }

    #[test]
    fn resolve_applies_preset_and_overrides() {
        let config = resolve_scenario("dongda", Some("T1"), Some(600), Some(9)).unwrap();
        assert_eq!(config.duration_s, 600);
        assert_eq!(config.seed, 9);
        assert!(config.flows.iter().all(|f| f.end_s == 600));
    }
}
