//! From halting counts to a phase choice.
//!
//! The objective couples the simulator to the optimizer: for every junction
//! `i` and green mode `j`, `C[i][j]` counts the vehicles halting on inbound
//! lanes that mode `j` serves. Minimizing
//!
//! ```text
//! sum_ij -C[i][j] q_ij  +  phi * sum_i (1 - sum_j q_ij)^2
//! ```
//!
//! over binary `q` picks, per junction, exactly one mode — the one clearing
//! the most halting vehicles — whenever `phi` is at least [`penalty_floor`].
//! Expanded with `q^2 = q`, that is a QUBO with linear terms `-C[i][j] - phi`,
//! in-junction pair terms `2 phi`, and a constant `phi` per junction.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;

use crate::qubo::{Assignment, QuboProblem};
use crate::sim::Movement;

/// Floor applied to every dynamically computed green duration.
pub const DYNAMIC_GREEN_FLOOR_S: f64 = 10.0;
/// Default ceiling for dynamic green durations; an uncapped green would
/// starve cross traffic.
pub const DYNAMIC_GREEN_CAP_S: f64 = 120.0;

#[derive(Debug, Clone, PartialEq)]
pub enum SignalError {
    /// The penalty factor must be strictly positive.
    InvalidPenalty { phi: f64 },
    /// A decoded junction had `set_bits != 1` modes selected.
    SelectionViolation { junction: usize, set_bits: usize },
    /// Assignment length does not match the layout.
    LayoutMismatch { expected: usize, actual: usize },
    /// Seconds-per-vehicle outside `(0, 2]`.
    InvalidPassTime { t_d: f64 },
    /// A junction with no modes cannot be optimized.
    EmptyJunction { junction: usize },
}

impl fmt::Display for SignalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignalError::InvalidPenalty { phi } => {
                write!(f, "penalty factor must be positive, got {phi}")
            }
            SignalError::SelectionViolation { junction, set_bits } => {
                write!(f, "junction {junction} has {set_bits} modes selected, expected exactly 1")
            }
            SignalError::LayoutMismatch { expected, actual } => {
                write!(f, "assignment has {actual} bits, layout has {expected} variables")
            }
            SignalError::InvalidPassTime { t_d } => {
                write!(f, "seconds-per-vehicle must be in (0, 2], got {t_d}")
            }
            SignalError::EmptyJunction { junction } => {
                write!(f, "junction {junction} has no green modes")
            }
        }
    }
}

impl core::error::Error for SignalError {}

/// Halting-vehicle counts per (junction, green mode). Rows may be jagged:
/// each junction has its own mode count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HaltCountMatrix {
    counts: Vec<Vec<u32>>,
}

impl HaltCountMatrix {
    pub fn new(counts: Vec<Vec<u32>>) -> Self {
        HaltCountMatrix { counts }
    }

    /// Single-junction matrix.
    pub fn from_row(row: Vec<u32>) -> Self {
        HaltCountMatrix { counts: alloc::vec![row] }
    }

    pub fn junctions(&self) -> usize {
        self.counts.len()
    }

    pub fn modes(&self, junction: usize) -> usize {
        self.counts[junction].len()
    }

    pub fn count(&self, junction: usize, mode: usize) -> u32 {
        self.counts[junction][mode]
    }

    pub fn row(&self, junction: usize) -> &[u32] {
        &self.counts[junction]
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.counts
    }

    pub fn max_count(&self) -> u32 {
        self.counts.iter().flatten().copied().max().unwrap_or(0)
    }
}

/// Bijection between QUBO variable indices and (junction, mode) pairs, in
/// junction-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableLayout {
    entries: Vec<(usize, usize)>,
    offsets: Vec<usize>,
}

impl VariableLayout {
    fn for_matrix(halts: &HaltCountMatrix) -> Self {
        let mut entries = Vec::new();
        let mut offsets = Vec::with_capacity(halts.junctions());
        for (i, row) in halts.rows().iter().enumerate() {
            offsets.push(entries.len());
            for j in 0..row.len() {
                entries.push((i, j));
            }
        }
        VariableLayout { entries, offsets }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn junctions(&self) -> usize {
        self.offsets.len()
    }

    /// The (junction, mode) pair behind variable `var`.
    pub fn entry(&self, var: usize) -> (usize, usize) {
        self.entries[var]
    }

    /// The variable index of (junction, mode).
    pub fn var(&self, junction: usize, mode: usize) -> usize {
        self.offsets[junction] + mode
    }

    pub fn modes(&self, junction: usize) -> usize {
        let end = self.offsets.get(junction + 1).copied().unwrap_or(self.entries.len());
        end - self.offsets[junction]
    }
}

/// The provably sufficient penalty: `max(1, 1 + max C)`. Selecting two modes
/// at a junction then costs at least `phi - max C > 0` versus the best
/// one-hot choice, and selecting none costs `phi > 0`.
pub fn penalty_floor(halts: &HaltCountMatrix) -> f64 {
    (1.0 + halts.max_count() as f64).max(1.0)
}

/// Builds the phase-selection QUBO for the given counts and penalty.
pub fn build_phase_qubo(
    halts: &HaltCountMatrix,
    phi: f64,
) -> Result<(QuboProblem, VariableLayout), SignalError> {
    if !(phi > 0.0) || !phi.is_finite() {
        return Err(SignalError::InvalidPenalty { phi });
    }
    for (i, row) in halts.rows().iter().enumerate() {
        if row.is_empty() {
            return Err(SignalError::EmptyJunction { junction: i });
        }
    }
    let layout = VariableLayout::for_matrix(halts);
    let mut problem = QuboProblem::new(layout.len());
    for (i, row) in halts.rows().iter().enumerate() {
        problem.add_offset(phi);
        for (j, &c) in row.iter().enumerate() {
            let var = layout.var(i, j);
            problem.add(var, var, -(c as f64) - phi).expect("layout index in range");
            for k in (j + 1)..row.len() {
                problem.add(var, layout.var(i, k), 2.0 * phi).expect("layout index in range");
            }
        }
    }
    Ok((problem, layout))
}

/// Reads the selected mode per junction out of a one-hot assignment.
pub fn decode_selection(
    x: &Assignment,
    layout: &VariableLayout,
) -> Result<Vec<usize>, SignalError> {
    if x.len() != layout.len() {
        return Err(SignalError::LayoutMismatch { expected: layout.len(), actual: x.len() });
    }
    let mut selected: Vec<Option<usize>> = alloc::vec![None; layout.junctions()];
    let mut set_bits: Vec<usize> = alloc::vec![0; layout.junctions()];
    for var in x.ones() {
        let (i, j) = layout.entry(var);
        set_bits[i] += 1;
        selected[i] = Some(j);
    }
    for (i, &bits) in set_bits.iter().enumerate() {
        if bits != 1 {
            return Err(SignalError::SelectionViolation { junction: i, set_bits: bits });
        }
    }
    Ok(selected.into_iter().map(|m| m.expect("checked one-hot")).collect())
}

/// Green time proportional to the halting queue: `halt_count * t_d` seconds,
/// floored at 10 s for a smooth transition and capped to keep cross traffic
/// alive. `t_d` is the seconds one vehicle needs to pass the junction.
pub fn dynamic_green_duration(halt_count: u32, t_d: f64) -> Result<f64, SignalError> {
    dynamic_green_duration_with_cap(halt_count, t_d, DYNAMIC_GREEN_CAP_S)
}

pub fn dynamic_green_duration_with_cap(
    halt_count: u32,
    t_d: f64,
    cap_s: f64,
) -> Result<f64, SignalError> {
    if !(t_d > 0.0 && t_d <= 2.0) {
        return Err(SignalError::InvalidPassTime { t_d });
    }
    Ok((halt_count as f64 * t_d).max(DYNAMIC_GREEN_FLOOR_S).min(cap_s))
}

/// What a junction's lights can show: one green mode, or the all-red yellow
/// transition between modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Green(usize),
    Yellow,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::Green(m) => write!(f, "G{}", m + 1),
            Phase::Yellow => write!(f, "Y"),
        }
    }
}

/// One green mode: the set of movements that may cross simultaneously.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GreenMode {
    pub movements: BTreeSet<Movement>,
}

impl GreenMode {
    pub fn new(movements: impl IntoIterator<Item = Movement>) -> Self {
        GreenMode { movements: movements.into_iter().collect() }
    }

    pub fn permits(&self, movement: &Movement) -> bool {
        self.movements.contains(movement)
    }
}

/// A junction's signal program: the green modes in cycle order, their fixed
/// durations, and the yellow transition length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignalPlan {
    /// Index of the junction this plan drives.
    pub junction: usize,
    pub green_modes: Vec<GreenMode>,
    /// Per-mode green durations used by the fixed-cycle controller and as the
    /// fallback cycle of the fast-rolling controller.
    pub green_durations_s: Vec<u32>,
    pub yellow_s: u32,
}

impl SignalPlan {
    pub fn n_modes(&self) -> usize {
        self.green_modes.len()
    }

    pub fn cycle_s(&self) -> u64 {
        self.green_durations_s.iter().map(|&d| d as u64 + self.yellow_s as u64).sum()
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        if self.green_modes.len() < 2 {
            return Err("a signal plan needs at least two green modes");
        }
        if self.green_durations_s.len() != self.green_modes.len() {
            return Err("one green duration per mode required");
        }
        if self.green_durations_s.iter().any(|&d| d == 0) {
            return Err("green durations must be positive");
        }
        if self.yellow_s == 0 {
            return Err("yellow duration must be positive");
        }
        Ok(())
    }
}
