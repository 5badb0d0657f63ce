//! The three signal controllers.
//!
//! - **Fixed**: the plan's modes in sequential order with their fixed
//!   durations, a pure function of time.
//! - **Fast-rolling** (`cqubo` on the CLI): keeps the sequential order, but a
//!   solve every 10 s (and at every mode switch) can trigger fast-rolling:
//!   intermediate modes are passed in 20 s hops until the proposed mode gets
//!   its long green.
//! - **Fair-sharing** (`qubo` on the CLI): hops to any mode, under a
//!   two-stage solve per phase: a global pick over the raw counts, then a
//!   local pick over counts masked to the modes not yet served in the current
//!   cycle group. Every mode is served exactly once per group of N phases;
//!   the winner gets 40 s when both picks agree and a minimal 20 s otherwise.
//!
//! With dynamic timing enabled, the winning mode's green is instead sized by
//! [`dynamic_green_duration_with_cap`] from its halting queue.
//!
//! Controllers are single-owner state machines, one per junction, driven by
//! `tick` once per simulated second before the traffic step for that second.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::qubo::{solve_anneal, solve_exact, AnnealConfig, Assignment, QuboProblem};
use crate::signal::{
    build_phase_qubo, decode_selection, dynamic_green_duration_with_cap, penalty_floor,
    HaltCountMatrix, Phase, SignalError, SignalPlan, DYNAMIC_GREEN_CAP_S,
};

/// Minimum green of the adaptive controllers when timing is static.
pub const MIN_GREEN_S: u32 = 20;
/// Green granted to the mode an adaptive controller settles on.
pub const PROPOSED_GREEN_S: u32 = 40;
/// Green granted to modes passed through while fast-rolling.
pub const PASSING_GREEN_S: u32 = 20;
/// Re-solve cadence of the fast-rolling controller.
pub const CONSULT_PERIOD_S: u64 = 10;

/// How the controllers solve their phase-selection problems.
#[derive(Debug, Clone, PartialEq)]
pub enum SolverChoice {
    /// Exhaustive enumeration; exact and fast at one junction's size.
    Exact,
    /// Simulated annealing, the default.
    Anneal(AnnealConfig),
}

impl SolverChoice {
    fn solve(&self, problem: &QuboProblem) -> Assignment {
        match self {
            SolverChoice::Exact => solve_exact(problem).expect("junction-sized problem"),
            SolverChoice::Anneal(cfg) => solve_anneal(problem, cfg).expect("validated config"),
        }
    }
}

/// Dynamic green timing: seconds of green per halting vehicle, with a cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicGreen {
    pub t_d: f64,
    pub cap_s: f64,
}

impl DynamicGreen {
    pub fn new(t_d: f64) -> Self {
        DynamicGreen { t_d, cap_s: DYNAMIC_GREEN_CAP_S }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub solver: SolverChoice,
    pub dynamic: Option<DynamicGreen>,
    /// Penalty override; default recomputes [`penalty_floor`] per solve.
    pub phi: Option<f64>,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            solver: SolverChoice::Anneal(AnnealConfig::default()),
            dynamic: None,
            phi: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    Fixed,
    CQubo,
    Qubo,
}

/// A scheduled phase: what to show and for how long.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseCommand {
    pub phase: Phase,
    pub duration_s: u32,
}

/// One line of the phase-activation log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseEvent {
    pub t: u64,
    pub junction: usize,
    pub phase: Phase,
    /// Scheduled duration at activation; the final event of a run may be cut
    /// short by the end of the simulation.
    pub scheduled_s: u32,
}

/// The phase of the fixed sequential cycle at time `t`, with the time left in
/// it: `G1, Y, G2, Y, ..., GN, Y` repeating, a pure function of
/// `t mod cycle`.
pub fn fixed_cycle_next(plan: &SignalPlan, t: u64) -> PhaseCommand {
    let mut pos = t % plan.cycle_s();
    for (mode, &green) in plan.green_durations_s.iter().enumerate() {
        if pos < green as u64 {
            return PhaseCommand { phase: Phase::Green(mode), duration_s: (green as u64 - pos) as u32 };
        }
        pos -= green as u64;
        if pos < plan.yellow_s as u64 {
            return PhaseCommand {
                phase: Phase::Yellow,
                duration_s: (plan.yellow_s as u64 - pos) as u32,
            };
        }
        pos -= plan.yellow_s as u64;
    }
    unreachable!("pos < cycle length");
}

/// A per-junction signal controller. Call [`Controller::tick`] once per
/// simulated second, in order, before advancing traffic for that second;
/// [`Controller::active_phase`] is then what the lights show during it.
#[derive(Debug, Clone)]
pub struct Controller {
    kind: ControllerKind,
    plan: SignalPlan,
    cfg: ControllerConfig,
    phase: Phase,
    entered: u64,
    ends: u64,
    queue: VecDeque<PhaseCommand>,
    /// Whether the queued phases were granted by a fast-roll: such phases run
    /// their granted duration, and a newer proposal only replaces the tail.
    queue_is_roll: bool,
    /// Whether the showing phase was granted by a fast-roll.
    committed: bool,
    /// Fair-sharing mask: modes already served in the current cycle group.
    served: Vec<bool>,
    decode_failures: u32,
    started: bool,
}

impl Controller {
    pub fn new(kind: ControllerKind, plan: SignalPlan, cfg: ControllerConfig) -> Self {
        plan.validate().expect("valid signal plan");
        let n = plan.n_modes();
        let first_green = plan.green_durations_s[0] as u64;
        let (ends, served) = match kind {
            // Expires immediately so the first tick runs a two-stage pick.
            ControllerKind::Qubo => (0, alloc::vec![false; n]),
            _ => (first_green, Vec::new()),
        };
        Controller {
            kind,
            plan,
            cfg,
            phase: Phase::Green(0),
            entered: 0,
            ends,
            queue: VecDeque::new(),
            queue_is_roll: false,
            committed: false,
            served,
            decode_failures: 0,
            started: false,
        }
    }

    pub fn kind(&self) -> ControllerKind {
        self.kind
    }

    pub fn plan(&self) -> &SignalPlan {
        &self.plan
    }

    pub fn active_phase(&self) -> Phase {
        self.phase
    }

    /// End time of the currently showing phase.
    pub fn phase_ends(&self) -> u64 {
        self.ends
    }

    /// Upcoming scheduled phases, if any.
    pub fn pending(&self) -> impl Iterator<Item = &PhaseCommand> {
        self.queue.iter()
    }

    pub fn served_mask(&self) -> &[bool] {
        &self.served
    }

    /// Solves that produced a non-one-hot assignment and were ignored.
    pub fn decode_failures(&self) -> u32 {
        self.decode_failures
    }

    /// Whether `tick(t, ..)` will want a fresh [`HaltCountMatrix`].
    pub fn needs_counts(&self, t: u64) -> bool {
        match self.kind {
            ControllerKind::Fixed => false,
            ControllerKind::CQubo => t % CONSULT_PERIOD_S == 0 || self.ends <= t,
            ControllerKind::Qubo => self.ends <= t,
        }
    }

    /// Advances the controller to second `t`. `halts` must be `Some` whenever
    /// [`Controller::needs_counts`] returned true for this `t`.
    pub fn tick(&mut self, t: u64, halts: Option<&HaltCountMatrix>, log: &mut Vec<PhaseEvent>) {
        if !self.started {
            self.started = true;
            if self.kind != ControllerKind::Qubo {
                // The initial green; the fair-sharing controller logs its own
                // first activation when the expiry below fires.
                log.push(PhaseEvent {
                    t,
                    junction: self.plan.junction,
                    phase: self.phase,
                    scheduled_s: (self.ends - self.entered) as u32,
                });
                if self.kind == ControllerKind::CQubo {
                    self.consult(t, halts);
                }
            }
        } else if self.kind == ControllerKind::CQubo
            && t % CONSULT_PERIOD_S == 0
            && matches!(self.phase, Phase::Green(_))
        {
            self.consult(t, halts);
        }

        while self.ends <= t {
            match self.queue.pop_front() {
                Some(cmd) => {
                    self.activate(t, cmd, log);
                    if let Phase::Green(_) = cmd.phase {
                        // Solve again on every mode switch.
                        if self.kind == ControllerKind::CQubo {
                            self.consult(t, halts);
                        }
                    }
                }
                None => match self.kind {
                    ControllerKind::Qubo => self.two_stage_step(t, halts, log),
                    _ => self.refill_sequential(),
                },
            }
        }
    }

    /// Queues the fixed cycle's next yellow-then-green from the current mode.
    fn refill_sequential(&mut self) {
        let current = match self.phase {
            Phase::Green(m) => m,
            Phase::Yellow => unreachable!("yellow is always followed by a queued green"),
        };
        let next = (current + 1) % self.plan.n_modes();
        self.queue.push_back(PhaseCommand { phase: Phase::Yellow, duration_s: self.plan.yellow_s });
        self.queue.push_back(PhaseCommand {
            phase: Phase::Green(next),
            duration_s: self.plan.green_durations_s[next],
        });
        self.queue_is_roll = false;
    }

    fn activate(&mut self, t: u64, cmd: PhaseCommand, log: &mut Vec<PhaseEvent>) {
        self.phase = cmd.phase;
        self.entered = t;
        self.ends = t + cmd.duration_s as u64;
        self.committed = self.queue_is_roll;
        log.push(PhaseEvent {
            t,
            junction: self.plan.junction,
            phase: cmd.phase,
            scheduled_s: cmd.duration_s,
        });
    }

    /// Final green mode of the pending schedule, if one is pending.
    fn pending_target(&self) -> Option<usize> {
        self.queue.iter().rev().find_map(|cmd| match cmd.phase {
            Phase::Green(m) => Some(m),
            Phase::Yellow => None,
        })
    }

    /// Solves this junction's phase QUBO over the given counts.
    fn propose(&mut self, halts: &HaltCountMatrix) -> Option<usize> {
        let row = halts.row(self.plan.junction).to_vec();
        self.propose_row(row)
    }

    fn propose_row(&mut self, row: Vec<u32>) -> Option<usize> {
        let matrix = HaltCountMatrix::from_row(row);
        let phi = self.cfg.phi.unwrap_or_else(|| penalty_floor(&matrix));
        let (problem, layout) = build_phase_qubo(&matrix, phi).expect("positive phi, modes >= 2");
        let solution = self.cfg.solver.solve(&problem);
        match decode_selection(&solution, &layout) {
            Ok(modes) => Some(modes[0]),
            Err(SignalError::SelectionViolation { set_bits, .. }) => {
                self.decode_failures += 1;
                log::warn!(
                    "junction {}: solver returned {set_bits} selected modes, keeping current phase",
                    self.plan.junction
                );
                None
            }
            Err(_) => unreachable!("layout built alongside the problem"),
        }
    }

    /// Green duration for `mode` under the dynamic rule, rounded to the 1 s
    /// grid, or `fallback` when static.
    fn green_duration(&self, halts: Option<&HaltCountMatrix>, mode: usize, fallback: u32) -> u32 {
        match (self.cfg.dynamic, halts) {
            (Some(dynamic), Some(halts)) => {
                let count = halts.count(self.plan.junction, mode);
                let secs = dynamic_green_duration_with_cap(count, dynamic.t_d, dynamic.cap_s)
                    .expect("t_d validated at config time");
                libm::round(secs) as u32
            }
            _ => fallback,
        }
    }

    /// Fast-rolling re-evaluation: keep going if the proposal is the current
    /// mode or already the pending target; otherwise rebuild the pending
    /// schedule to roll sequentially toward the proposal. A phase still
    /// running its plan duration is cut to the 20 s minimum; a phase granted
    /// by an earlier roll is committed and runs out before the new schedule
    /// starts.
    fn consult(&mut self, t: u64, halts: Option<&HaltCountMatrix>) {
        let Phase::Green(current) = self.phase else { return };
        let Some(halts) = halts else { return };
        let Some(proposal) = self.propose(halts) else { return };
        if proposal == current || self.pending_target() == Some(proposal) {
            return;
        }

        let n = self.plan.n_modes();
        let mut queue = VecDeque::new();
        let mut mode = current;
        loop {
            mode = (mode + 1) % n;
            queue.push_back(PhaseCommand { phase: Phase::Yellow, duration_s: self.plan.yellow_s });
            if mode == proposal {
                let duration = self.green_duration(Some(halts), mode, PROPOSED_GREEN_S);
                queue.push_back(PhaseCommand { phase: Phase::Green(mode), duration_s: duration });
                break;
            }
            queue.push_back(PhaseCommand {
                phase: Phase::Green(mode),
                duration_s: PASSING_GREEN_S,
            });
        }
        self.queue = queue;
        self.queue_is_roll = true;
        if !self.committed {
            self.ends = self.ends.min((self.entered + MIN_GREEN_S as u64).max(t));
        }
    }

    /// One fair-sharing phase decision, run when the current green expires.
    fn two_stage_step(&mut self, t: u64, halts: Option<&HaltCountMatrix>, log: &mut Vec<PhaseEvent>) {
        let Phase::Green(current) = self.phase else {
            unreachable!("yellow is always followed by a queued green")
        };
        if self.served.iter().all(|&s| s) {
            self.served.iter_mut().for_each(|s| *s = false);
        }

        let row: Vec<u32> = match halts {
            Some(h) => h.row(self.plan.junction).to_vec(),
            None => {
                self.keep_current(t, halts, current, log);
                return;
            }
        };
        let global = self.propose_row(row.clone());
        let masked: Vec<u32> = row
            .iter()
            .enumerate()
            .map(|(j, &c)| if self.served[j] { 0 } else { c })
            .collect();
        let local = self.propose_row(masked);
        let (Some(global), Some(local)) = (global, local) else {
            self.keep_current(t, halts, current, log);
            return;
        };
        // Masked coefficients of served modes are zero, so an all-zero tie can
        // still land on a served mode; push it to the first unserved one.
        let winner = if self.served[local] {
            (0..self.plan.n_modes()).find(|&j| !self.served[j]).expect("mask was reset when full")
        } else {
            local
        };
        self.served[winner] = true;

        let fallback = if global == winner { PROPOSED_GREEN_S } else { PASSING_GREEN_S };
        let duration = self.green_duration(halts, winner, fallback);
        if winner == current {
            self.activate(t, PhaseCommand { phase: Phase::Green(winner), duration_s: duration }, log);
        } else {
            self.queue
                .push_back(PhaseCommand { phase: Phase::Green(winner), duration_s: duration });
            self.activate(
                t,
                PhaseCommand { phase: Phase::Yellow, duration_s: self.plan.yellow_s },
                log,
            );
        }
    }

    /// Decode-failure fallback: hold the current mode for a minimal green and
    /// leave the fair-share mask untouched.
    fn keep_current(
        &mut self,
        t: u64,
        halts: Option<&HaltCountMatrix>,
        current: usize,
        log: &mut Vec<PhaseEvent>,
    ) {
        let duration = self.green_duration(halts, current, MIN_GREEN_S);
        self.activate(t, PhaseCommand { phase: Phase::Green(current), duration_s: duration }, log);
    }
}
