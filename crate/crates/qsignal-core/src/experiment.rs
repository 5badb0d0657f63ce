//! Running a controller against a scenario and measuring it.
//!
//! The loop each simulated second: inject arrivals, tick the controllers
//! (computing halting counts only when some controller wants them), apply the
//! resulting phases, advance traffic, then sample every active vehicle's
//! speed. The headline metric is the mean of those per-second per-vehicle
//! samples per hour; a vehicle present for k seconds contributes k samples,
//! so standing queues pull the number down exactly as congestion should. A
//! per-trip mean (distance over network time, averaged over the vehicles
//! departing that hour) is reported alongside for reference.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::time::Duration;

use crate::controller::{
    Controller, ControllerConfig, ControllerKind, DynamicGreen, PhaseEvent, SolverChoice,
};
use crate::qubo::AnnealConfig;
use crate::rng::{derive_seed, STREAM_ANNEAL};
use crate::scenario::ScenarioConfig;
use crate::signal::Phase;
use crate::sim::{halting_counts, Event, FlowEngine, SimWorld};

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub controller: ControllerKind,
    /// Dynamic green timing; requires an adaptive controller.
    pub dynamic: Option<DynamicGreen>,
    pub solver: SolverChoice,
    /// Penalty override; the default recomputes the floor per solve.
    pub phi: Option<f64>,
    pub duration_s: u64,
    pub seed: u64,
    /// Samples before this time are excluded from the speed metric.
    pub warmup_s: u64,
}

impl ExperimentConfig {
    /// A config over a prepared scenario, using the controller defaults and
    /// the scenario's duration and seed.
    pub fn new(scenario: ScenarioConfig, controller: ControllerKind) -> Self {
        let duration_s = scenario.duration_s;
        let seed = scenario.seed;
        ExperimentConfig {
            scenario,
            controller,
            dynamic: None,
            solver: SolverChoice::Anneal(AnnealConfig::default()),
            phi: None,
            duration_s,
            seed,
            warmup_s: 0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.duration_s == 0 {
            return Err("duration must be positive".into());
        }
        if let Some(dynamic) = self.dynamic {
            if self.controller == ControllerKind::Fixed {
                return Err("dynamic green timing requires an adaptive controller".into());
            }
            if !(dynamic.t_d > 0.0 && dynamic.t_d <= 2.0) {
                return Err(alloc::format!(
                    "seconds-per-vehicle must be in (0, 2], got {}",
                    dynamic.t_d
                ));
            }
            if !(dynamic.cap_s > 0.0) {
                return Err("dynamic green cap must be positive".into());
            }
        }
        if let Some(phi) = self.phi {
            if !(phi > 0.0) {
                return Err("penalty override must be positive".into());
            }
        }
        if let SolverChoice::Anneal(cfg) = &self.solver {
            cfg.validate().map_err(|e| alloc::format!("{e}"))?;
        }
        self.scenario.classes.validate()?;
        if !(self.scenario.sigma >= 0.0 && self.scenario.sigma <= 1.0) {
            return Err("driver sigma must be in [0, 1]".into());
        }
        Ok(())
    }
}

/// One hour of aggregated measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct HourBucket {
    pub hour: u64,
    /// Mean of all per-second per-vehicle speed samples in the hour.
    pub avg_speed_mps: f64,
    /// Mean trip speed of vehicles departing this hour, if any departed.
    pub trip_mean_mps: Option<f64>,
    pub samples: u64,
    pub injected: u64,
    pub departed: u64,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    /// Hourly series; hours without a single speed sample are omitted here
    /// and flagged in `empty_hours`.
    pub hours: Vec<HourBucket>,
    pub empty_hours: Vec<u64>,
    /// Mean over every post-warmup sample of the whole run.
    pub overall_avg_speed_mps: f64,
    pub total_injected: u64,
    pub total_entered: u64,
    pub total_departed: u64,
    pub phase_log: Vec<PhaseEvent>,
    /// Solves discarded for returning a non-one-hot selection.
    pub decode_failures: u32,
    /// Filled in by callers that time the run; the core has no clock.
    pub wall_time: Duration,
}

impl ExperimentResult {
    /// The run-level speed: `overall_avg_speed_mps`, or 0 when the run never
    /// produced a sample.
    pub fn speed(&self) -> f64 {
        self.overall_avg_speed_mps
    }
}

/// Streaming form of the per-hour speed metric.
#[derive(Debug, Clone, Default)]
pub struct SpeedAccumulator {
    sums: BTreeMap<u64, (f64, u64)>,
    total: f64,
    count: u64,
}

impl SpeedAccumulator {
    pub fn new() -> Self {
        SpeedAccumulator::default()
    }

    pub fn add(&mut self, t: u64, speed_mps: f64) {
        let bucket = self.sums.entry(t / 3600).or_insert((0.0, 0));
        bucket.0 += speed_mps;
        bucket.1 += 1;
        self.total += speed_mps;
        self.count += 1;
    }

    /// `(hour, mean, samples)` rows for every hour that had samples.
    pub fn hourly(&self) -> Vec<(u64, f64, u64)> {
        self.sums.iter().map(|(&h, &(sum, n))| (h, sum / n as f64, n)).collect()
    }

    pub fn overall(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.total / self.count as f64
        }
    }

    pub fn sample_count(&self) -> u64 {
        self.count
    }
}

/// Arithmetic mean of timestamped speed samples per whole simulated hour;
/// empty hours are simply absent from the result.
pub fn average_speed_per_hour(
    samples: impl IntoIterator<Item = (u64, f64)>,
) -> Vec<(u64, f64)> {
    let mut acc = SpeedAccumulator::new();
    for (t, speed) in samples {
        acc.add(t, speed);
    }
    acc.hourly().into_iter().map(|(h, mean, _)| (h, mean)).collect()
}

/// Runs one experiment to completion. Deterministic: the result is a pure
/// function of the config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult, String> {
    config.validate()?;
    let scenario = &config.scenario;
    let mut world = SimWorld::new(
        scenario.network.clone(),
        scenario.classes,
        scenario.sigma,
        config.seed,
    );
    let mut engine =
        FlowEngine::new(world.network(), &scenario.flows, scenario.arrivals, config.seed)?;

    let mut solver = config.solver.clone();
    if let SolverChoice::Anneal(anneal) = &mut solver {
        anneal.seed = derive_seed(config.seed, STREAM_ANNEAL);
    }
    let mut controllers: Vec<Controller> = world
        .network()
        .junctions
        .iter()
        .map(|junction| {
            Controller::new(
                config.controller,
                junction.plan.clone(),
                ControllerConfig {
                    solver: solver.clone(),
                    dynamic: config.dynamic,
                    phi: config.phi,
                },
            )
        })
        .collect();

    let mut phase_log: Vec<PhaseEvent> = Vec::new();
    let mut events: Vec<Event> = Vec::new();
    let mut speeds = SpeedAccumulator::new();
    let mut injected_by_hour: BTreeMap<u64, u64> = BTreeMap::new();
    let mut departed_by_hour: BTreeMap<u64, u64> = BTreeMap::new();
    let mut trip_by_hour: BTreeMap<u64, (f64, u64)> = BTreeMap::new();

    for t in 0..config.duration_s {
        events.clear();
        engine.inject(&mut world, t, &mut events);

        let halts = controllers
            .iter()
            .any(|c| c.needs_counts(t))
            .then(|| halting_counts(&world));
        for controller in &mut controllers {
            controller.tick(t, halts.as_ref(), &mut phase_log);
        }
        let phases: Vec<Phase> = controllers.iter().map(|c| c.active_phase()).collect();

        world.advance(&phases, &mut events);

        let hour = t / 3600;
        for event in &events {
            match event {
                Event::Spawned { .. } => *injected_by_hour.entry(hour).or_insert(0) += 1,
                Event::Departed { entered_at, dist_m, t: depart_t, .. } => {
                    *departed_by_hour.entry(hour).or_insert(0) += 1;
                    let seconds = depart_t.saturating_sub(*entered_at).max(1) as f64;
                    let trip = trip_by_hour.entry(hour).or_insert((0.0, 0));
                    trip.0 += dist_m / seconds;
                    trip.1 += 1;
                }
                _ => {}
            }
        }
        if t >= config.warmup_s {
            for speed in world.speed_samples() {
                speeds.add(t, speed);
            }
        }
    }

    let sampled: BTreeMap<u64, (f64, u64)> =
        speeds.hourly().into_iter().map(|(h, mean, n)| (h, (mean, n))).collect();
    let mut hours = Vec::new();
    let mut empty_hours = Vec::new();
    let last_hour = (config.duration_s - 1) / 3600;
    for hour in 0..=last_hour {
        match sampled.get(&hour) {
            Some(&(mean, n)) => hours.push(HourBucket {
                hour,
                avg_speed_mps: mean,
                trip_mean_mps: trip_by_hour.get(&hour).map(|&(sum, n)| sum / n as f64),
                samples: n,
                injected: injected_by_hour.get(&hour).copied().unwrap_or(0),
                departed: departed_by_hour.get(&hour).copied().unwrap_or(0),
            }),
            None => empty_hours.push(hour),
        }
    }

    let decode_failures = controllers.iter().map(|c| c.decode_failures()).sum();
    Ok(ExperimentResult {
        hours,
        empty_hours,
        overall_avg_speed_mps: speeds.overall(),
        total_injected: world.injected(),
        total_entered: world.entered(),
        total_departed: world.departed(),
        phase_log,
        decode_failures,
        wall_time: Duration::ZERO,
    })
}

/// One row of a seconds-per-vehicle sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub t_d: f64,
    pub avg_speed_mps: f64,
    pub hours: Vec<(u64, f64)>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Index of the best row; earlier (smaller `t_d`) wins ties.
    pub best: usize,
}

/// Runs `base` once per `t_d` value with the same seed and reports the value
/// maximizing the average speed.
pub fn sweep_td(base: &ExperimentConfig, td_values: &[f64]) -> Result<SweepResult, String> {
    if td_values.is_empty() {
        return Err("sweep needs at least one t_d value".into());
    }
    if base.controller == ControllerKind::Fixed {
        return Err("dynamic green timing requires an adaptive controller".into());
    }
    let mut rows = Vec::with_capacity(td_values.len());
    for &t_d in td_values {
        let mut config = base.clone();
        let cap_s = base.dynamic.map(|d| d.cap_s).unwrap_or(crate::signal::DYNAMIC_GREEN_CAP_S);
        config.dynamic = Some(DynamicGreen { t_d, cap_s });
        let result = run_experiment(&config)?;
        rows.push(SweepRow {
            t_d,
            avg_speed_mps: result.overall_avg_speed_mps,
            hours: result.hours.iter().map(|h| (h.hour, h.avg_speed_mps)).collect(),
        });
    }
    let mut best = 0;
    for (i, row) in rows.iter().enumerate() {
        if row.avg_speed_mps > rows[best].avg_speed_mps {
            best = i;
        }
    }
    Ok(SweepResult { rows, best })
}

/// Fair-sharing audit over a phase log: green activations must partition into
/// consecutive groups, each serving every mode exactly once (the final group
/// may be a truncated prefix), and every green must be at least `min_green_s`
/// long.
pub fn audit_fair_sharing(
    log: &[PhaseEvent],
    n_modes: usize,
    min_green_s: u32,
) -> Result<(), String> {
    let greens: Vec<&PhaseEvent> =
        log.iter().filter(|e| matches!(e.phase, Phase::Green(_))).collect();
    for event in &greens {
        if event.scheduled_s < min_green_s {
            return Err(alloc::format!(
                "green at t={} scheduled for {} s, below the {} s minimum",
                event.t,
                event.scheduled_s,
                min_green_s
            ));
        }
    }
    for (g, group) in greens.chunks(n_modes).enumerate() {
        let mut seen = alloc::vec![false; n_modes];
        for event in group {
            let Phase::Green(mode) = event.phase else { unreachable!("filtered") };
            if seen[mode] {
                return Err(alloc::format!(
                    "cycle group {g} activates mode {} twice (t={})",
                    mode + 1,
                    event.t
                ));
            }
            seen[mode] = true;
        }
        if group.len() == n_modes && seen.iter().any(|&s| !s) {
            return Err(alloc::format!("cycle group {g} misses a mode"));
        }
    }
    Ok(())
}

/// Checks that every change of green mode in a log is preceded by exactly one
/// yellow of the plan's duration.
pub fn audit_yellow_transitions(log: &[PhaseEvent], yellow_s: u32) -> Result<(), String> {
    let mut last_green: Option<usize> = None;
    let mut yellows_since = 0u32;
    for event in log {
        match event.phase {
            Phase::Yellow => {
                if event.scheduled_s != yellow_s {
                    return Err(alloc::format!(
                        "yellow at t={} lasts {} s, plan says {} s",
                        event.t,
                        event.scheduled_s,
                        yellow_s
                    ));
                }
                yellows_since += 1;
            }
            Phase::Green(mode) => {
                if let Some(prev) = last_green {
                    let expected = if prev == mode { 0 } else { 1 };
                    if yellows_since != expected {
                        return Err(alloc::format!(
                            "green at t={} follows {} yellows, expected {}",
                            event.t,
                            yellows_since,
                            expected
                        ));
                    }
                }
                yellows_since = 0;
                last_green = Some(mode);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hourly_mean_of_constant_samples() {
        let samples = (0..3600).map(|t| (t, 10.0));
        assert_eq!(average_speed_per_hour(samples), alloc::vec![(0, 10.0)]);
    }

    #[test]
    fn hourly_mean_of_two_level_samples() {
        let samples = (0..3600).map(|t| (t, if t < 1800 { 0.0 } else { 10.0 }));
        assert_eq!(average_speed_per_hour(samples), alloc::vec![(0, 5.0)]);
    }

    #[test]
    fn empty_hours_are_omitted() {
        // Samples only in hour 0 and hour 2.
        let samples = [(10, 4.0), (7500, 8.0)];
        assert_eq!(average_speed_per_hour(samples), alloc::vec![(0, 4.0), (2, 8.0)]);
    }

    #[test]
    fn fair_sharing_audit_accepts_permutation_groups() {
        let log: Vec<PhaseEvent> = [0, 2, 1, 3, 3, 0, 2, 1, 2]
            .iter()
            .enumerate()
            .map(|(i, &m)| PhaseEvent {
                t: i as u64 * 25,
                junction: 0,
                phase: Phase::Green(m),
                scheduled_s: 20,
            })
            .collect();
        audit_fair_sharing(&log, 4, 20).unwrap();
    }

    #[test]
    fn fair_sharing_audit_rejects_repeats_and_short_greens() {
        let log: Vec<PhaseEvent> = [0, 2, 2, 3]
            .iter()
            .enumerate()
            .map(|(i, &m)| PhaseEvent {
                t: i as u64 * 25,
                junction: 0,
                phase: Phase::Green(m),
                scheduled_s: 20,
            })
            .collect();
        assert!(audit_fair_sharing(&log, 4, 20).is_err());
        let short = [PhaseEvent { t: 0, junction: 0, phase: Phase::Green(0), scheduled_s: 12 }];
        assert!(audit_fair_sharing(&short, 4, 20).is_err());
    }
}
