//! Byte-stable report formatting. All numeric cells go through [`sig6`] so a
//! fixed config always produces identical bytes.

use qsignal_core::controller::PhaseEvent;
use qsignal_core::experiment::{ExperimentResult, SweepResult};

/// Fixed-point rendering with (at least) six significant digits: the decimal
/// count adapts to the magnitude, never scientific notation.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".to_string() } else { "inf".to_string() };
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

pub const RUN_CSV_HEADER: &str =
    "hour,avg_speed_mps,trip_mean_mps,injected,departed,controller,t_d,seed";

/// The per-run report: one row per non-empty hour.
pub fn run_csv(result: &ExperimentResult, controller: &str, t_d: Option<f64>, seed: u64) -> String {
    let mut out = String::from(RUN_CSV_HEADER);
    out.push('\n');
    let td_cell = t_d.map(sig6).unwrap_or_default();
    for hour in &result.hours {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            hour.hour,
            sig6(hour.avg_speed_mps),
            hour.trip_mean_mps.map(sig6).unwrap_or_default(),
            hour.injected,
            hour.departed,
            controller,
            td_cell,
            seed,
        ));
    }
    out
}

/// Sweep report: every (t_d, hour) row plus a `best` marker column.
pub fn sweep_csv(sweep: &SweepResult, controller: &str, seed: u64) -> String {
    let mut out = String::from("t_d,hour,avg_speed_mps,overall_avg_speed_mps,best,controller,seed\n");
    for (i, row) in sweep.rows.iter().enumerate() {
        let best = if i == sweep.best { "1" } else { "0" };
        for &(hour, speed) in &row.hours {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                sig6(row.t_d),
                hour,
                sig6(speed),
                sig6(row.avg_speed_mps),
                best,
                controller,
                seed,
            ));
        }
    }
    out
}

/// One controller's aggregate in a comparison.
pub struct CompareRow {
    pub controller: String,
    pub t_d: Option<f64>,
    pub seeds: u64,
    pub mean_speed_mps: f64,
    /// Relative improvement over the first (baseline) row, in percent.
    pub improvement_pct: Option<f64>,
}

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut out = String::from("controller,t_d,seeds,mean_avg_speed_mps,improvement_pct\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.controller,
            row.t_d.map(sig6).unwrap_or_default(),
            row.seeds,
            sig6(row.mean_speed_mps),
            row.improvement_pct.map(sig6).unwrap_or_default(),
        ));
    }
    out
}

/// Phase-activation log, enough to audit fair sharing and minimum durations.
pub fn phase_log_csv(log: &[PhaseEvent]) -> String {
    let mut out = String::from("t,junction,phase,scheduled_s\n");
    for event in log {
        out.push_str(&format!(
            "{},{},{},{}\n",
            event.t, event.junction, event.phase, event.scheduled_s
        ));
    }
    out
}

/// A small gnuplot script rendering the hourly series of a run/sweep CSV.
pub fn gnuplot_script(csv_path: &str, value_column: usize, title: &str) -> String {
    format!(
        "set datafile separator ','\n\
         set key autotitle columnhead\n\
         set xlabel 'hour'\n\
         set ylabel 'average speed (m/s)'\n\
         set title '{title}'\n\
         plot '{csv_path}' using 1:{value_column} with linespoints\n"
    )
}
