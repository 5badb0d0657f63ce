//! Deterministic discrete-time microscopic traffic simulation.
//!
//! Geometry is one-dimensional per lane: a vehicle's `pos_m` is the distance
//! of its front bumper from the lane start, so it occupies
//! `[pos_m - length, pos_m]`. Inbound lanes end at the junction stop line;
//! outbound lanes end at the network boundary where vehicles depart. Crossing
//! the junction is a timed transit between an inbound lane head and a target
//! lane tail (or a scooter waiting box), with at most one vehicle in transit
//! per inbound lane.
//!
//! Everything steps at a fixed 1 s; all iteration orders are fixed, so a
//! (network, flows, seed) triple fully determines the trajectory.

mod world;

pub use world::{
    ArrivalProcess, CrossDest, Event, Flow, FlowEngine, LaneState, SimWorld, Transit, Vehicle,
    WaitBoxState,
};

use alloc::string::String;
use alloc::vec::Vec;

use crate::signal::{HaltCountMatrix, SignalPlan};

/// Simulation time step in seconds.
pub const DT_S: f64 = 1.0;
/// Desired time headway of the safe-speed rule.
pub const FOLLOW_HEADWAY_S: f64 = 1.0;
/// Speed at or below which a vehicle counts as halting.
pub const HALT_SPEED_MPS: f64 = 0.1;
/// Upper bound of the uniform driver-imperfection draw.
pub const DEFAULT_DRIVER_SIGMA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClassKind {
    Car,
    Scooter,
    Truck,
}

impl ClassKind {
    pub const ALL: [ClassKind; 3] = [ClassKind::Car, ClassKind::Scooter, ClassKind::Truck];

    pub fn name(&self) -> &'static str {
        match self {
            ClassKind::Car => "car",
            ClassKind::Scooter => "scooter",
            ClassKind::Truck => "truck",
        }
    }
}

/// Kinematic parameters of a vehicle class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassParams {
    pub length_m: f64,
    pub max_speed_mps: f64,
    pub accel_mps2: f64,
    pub decel_mps2: f64,
    pub min_gap_m: f64,
}

impl ClassParams {
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("length", self.length_m),
            ("max speed", self.max_speed_mps),
            ("acceleration", self.accel_mps2),
            ("deceleration", self.decel_mps2),
        ];
        for (name, value) in fields {
            if !(value > 0.0) || !value.is_finite() {
                return Err(alloc::format!("class {name} must be positive"));
            }
        }
        if !(self.min_gap_m >= 0.0) || !self.min_gap_m.is_finite() {
            return Err("class min gap must be non-negative".into());
        }
        Ok(())
    }
}

/// Per-class parameters for one scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassTable {
    pub car: ClassParams,
    pub scooter: ClassParams,
    pub truck: ClassParams,
}

impl Default for ClassTable {
    fn default() -> Self {
        ClassTable {
            car: ClassParams {
                length_m: 5.0,
                max_speed_mps: 13.9,
                accel_mps2: 2.6,
                decel_mps2: 4.5,
                min_gap_m: 2.5,
            },
            scooter: ClassParams {
                length_m: 2.0,
                max_speed_mps: 11.1,
                accel_mps2: 3.0,
                decel_mps2: 5.0,
                min_gap_m: 1.0,
            },
            truck: ClassParams {
                length_m: 10.0,
                max_speed_mps: 11.1,
                accel_mps2: 1.3,
                decel_mps2: 4.0,
                min_gap_m: 2.5,
            },
        }
    }
}

impl ClassTable {
    pub fn get(&self, kind: ClassKind) -> &ClassParams {
        match kind {
            ClassKind::Car => &self.car,
            ClassKind::Scooter => &self.scooter,
            ClassKind::Truck => &self.truck,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for kind in ClassKind::ALL {
            self.get(kind).validate()?;
        }
        Ok(())
    }
}

/// Set of vehicle classes, packed as a bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassSet(u8);

impl ClassSet {
    pub fn all() -> Self {
        ClassSet::from_iter(ClassKind::ALL)
    }

    pub fn from_iter(kinds: impl IntoIterator<Item = ClassKind>) -> Self {
        let mut set = ClassSet(0);
        for k in kinds {
            set.insert(k);
        }
        set
    }

    pub fn insert(&mut self, kind: ClassKind) {
        self.0 |= 1 << kind as u8;
    }

    pub fn contains(&self, kind: ClassKind) -> bool {
        self.0 & (1 << kind as u8) != 0
    }

    pub fn iter(&self) -> impl Iterator<Item = ClassKind> + '_ {
        ClassKind::ALL.into_iter().filter(|&k| self.contains(k))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LaneId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Turn {
    Left,
    Through,
    Right,
    UTurn,
}

impl Turn {
    pub fn name(&self) -> &'static str {
        match self {
            Turn::Left => "left",
            Turn::Through => "through",
            Turn::Right => "right",
            Turn::UTurn => "uturn",
        }
    }
}

/// A signalized movement: a turn out of a specific inbound lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Movement {
    pub from: LaneId,
    pub turn: Turn,
}

/// Which side of the junction an approach sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Compass {
    North,
    East,
    South,
    West,
}

impl Compass {
    pub fn opposite(self) -> Compass {
        match self {
            Compass::North => Compass::South,
            Compass::South => Compass::North,
            Compass::East => Compass::West,
            Compass::West => Compass::East,
        }
    }

    /// Counterclockwise neighbor: the side a left turn exits on, for traffic
    /// heading *toward* this side.
    fn ccw(self) -> Compass {
        match self {
            Compass::East => Compass::North,
            Compass::North => Compass::West,
            Compass::West => Compass::South,
            Compass::South => Compass::East,
        }
    }

    fn cw(self) -> Compass {
        self.ccw().opposite()
    }
}

/// Side a vehicle exits on when entering from `from` and making `turn`.
pub fn exit_side(from: Compass, turn: Turn) -> Compass {
    let heading_toward = from.opposite();
    match turn {
        Turn::Through => heading_toward,
        Turn::Left => heading_toward.ccw(),
        Turn::Right => heading_toward.cw(),
        Turn::UTurn => from,
    }
}

/// Turn required to enter from `from` and exit on `to`.
pub fn turn_between(from: Compass, to: Compass) -> Turn {
    for turn in [Turn::Through, Turn::Left, Turn::Right, Turn::UTurn] {
        if exit_side(from, turn) == to {
            return turn;
        }
    }
    unreachable!("every side pair maps to a turn")
}

#[derive(Debug, Clone)]
pub struct Lane {
    pub name: String,
    pub length_m: f64,
    pub allowed: ClassSet,
    /// Turn-to-target map; empty for outbound lanes.
    pub movements: Vec<(Turn, LaneId)>,
}

impl Lane {
    pub fn target(&self, turn: Turn) -> Option<LaneId> {
        self.movements.iter().find(|(t, _)| *t == turn).map(|(_, l)| *l)
    }

    pub fn is_inbound(&self) -> bool {
        !self.movements.is_empty()
    }
}

/// One side of the junction: its inbound and outbound lanes and, optionally,
/// the waiting box used by scooters two-stage-left-turning *from* it.
#[derive(Debug, Clone)]
pub struct Approach {
    pub name: String,
    pub position: Compass,
    pub inbound: Vec<LaneId>,
    pub outbound: Vec<LaneId>,
    pub wait_box: Option<usize>,
}

/// Corner waiting box for two-stage left turns: scooters cross straight into
/// it, then ride out with the cross street's green.
#[derive(Debug, Clone)]
pub struct WaitBox {
    /// Approach the scooters come from.
    pub approach: usize,
    pub capacity: usize,
    /// Junction mode whose green releases the box.
    pub release_mode: usize,
    /// Outbound lane the released scooters join.
    pub target: LaneId,
}

#[derive(Debug, Clone)]
pub struct Junction {
    pub plan: SignalPlan,
    pub inbound: Vec<LaneId>,
    /// Distance covered while crossing; transit takes
    /// `ceil(distance / max(speed, 1))` seconds.
    pub crossing_distance_m: f64,
}

/// A validated road network. Construction via [`Network::build`] computes the
/// derived lookup tables and checks the structural invariants.
#[derive(Debug, Clone)]
pub struct Network {
    pub lanes: Vec<Lane>,
    pub approaches: Vec<Approach>,
    pub junctions: Vec<Junction>,
    pub boxes: Vec<WaitBox>,
    /// Junction owning each lane's stop line (inbound lanes only).
    lane_junction: Vec<Option<usize>>,
    /// Per lane, the modes of its junction serving at least one of its
    /// movements.
    serving_modes: Vec<Vec<usize>>,
}

impl Network {
    pub fn build(
        lanes: Vec<Lane>,
        approaches: Vec<Approach>,
        junctions: Vec<Junction>,
        boxes: Vec<WaitBox>,
    ) -> Result<Network, String> {
        let mut lane_junction = alloc::vec![None; lanes.len()];
        for (j, junction) in junctions.iter().enumerate() {
            for &LaneId(l) in &junction.inbound {
                if l >= lanes.len() {
                    return Err(alloc::format!("junction {j} lists unknown lane {l}"));
                }
                if lane_junction[l].is_some() {
                    return Err(alloc::format!("lane {l} assigned to two junctions"));
                }
                lane_junction[l] = Some(j);
            }
        }

        let mut serving_modes = alloc::vec![Vec::new(); lanes.len()];
        for junction in &junctions {
            for &LaneId(l) in &junction.inbound {
                let modes = &mut serving_modes[l];
                for (m, mode) in junction.plan.green_modes.iter().enumerate() {
                    let serves = lanes[l]
                        .movements
                        .iter()
                        .any(|&(turn, _)| mode.permits(&Movement { from: LaneId(l), turn }));
                    if serves {
                        modes.push(m);
                    }
                }
            }
        }

        let net = Network { lanes, approaches, junctions, boxes, lane_junction, serving_modes };
        net.validate()?;
        Ok(net)
    }

    pub fn lane(&self, id: LaneId) -> &Lane {
        &self.lanes[id.0]
    }

    pub fn junction_of(&self, lane: LaneId) -> Option<usize> {
        self.lane_junction[lane.0]
    }

    pub fn serving_modes(&self, lane: LaneId) -> &[usize] {
        &self.serving_modes[lane.0]
    }

    pub fn approach_named(&self, name: &str) -> Option<usize> {
        self.approaches.iter().position(|a| a.name == name)
    }

    fn validate(&self) -> Result<(), String> {
        for (i, lane) in self.lanes.iter().enumerate() {
            if !(lane.length_m > 0.0) {
                return Err(alloc::format!("lane {}: length must be positive", lane.name));
            }
            let mut turns: Vec<Turn> = lane.movements.iter().map(|(t, _)| *t).collect();
            turns.sort_unstable();
            turns.dedup();
            if turns.len() != lane.movements.len() {
                return Err(alloc::format!("lane {}: duplicate turn", lane.name));
            }
            for &(turn, target) in &lane.movements {
                let Some(target_lane) = self.lanes.get(target.0) else {
                    return Err(alloc::format!("lane {}: unknown target lane", lane.name));
                };
                if target_lane.is_inbound() {
                    return Err(alloc::format!(
                        "lane {}: {} movement targets an inbound lane",
                        lane.name,
                        turn.name()
                    ));
                }
                if self.lane_junction[i].is_none() {
                    return Err(alloc::format!(
                        "lane {}: has movements but belongs to no junction",
                        lane.name
                    ));
                }
            }
        }

        for (j, junction) in self.junctions.iter().enumerate() {
            junction.plan.validate().map_err(|e| alloc::format!("junction {j}: {e}"))?;
            if !(junction.crossing_distance_m > 0.0) {
                return Err(alloc::format!("junction {j}: crossing distance must be positive"));
            }
            // Every movement of every inbound lane is served by some mode.
            for &lane_id in &junction.inbound {
                for &(turn, _) in &self.lane(lane_id).movements {
                    let movement = Movement { from: lane_id, turn };
                    if !junction.plan.green_modes.iter().any(|m| m.permits(&movement)) {
                        return Err(alloc::format!(
                            "junction {j}: movement {} {} served by no green mode",
                            self.lane(lane_id).name,
                            turn.name()
                        ));
                    }
                }
            }
            // Modes only bundle mutually non-conflicting movements.
            for (m, mode) in junction.plan.green_modes.iter().enumerate() {
                let movements: Vec<&Movement> = mode.movements.iter().collect();
                for (a, &ma) in movements.iter().enumerate() {
                    for &mb in &movements[a + 1..] {
                        if self.movements_conflict(ma, mb)? {
                            return Err(alloc::format!(
                                "junction {j} mode {m}: conflicting movements {} {} and {} {}",
                                self.lane(ma.from).name,
                                ma.turn.name(),
                                self.lane(mb.from).name,
                                mb.turn.name()
                            ));
                        }
                    }
                }
                // Every plan movement must exist on its lane.
                for movement in &mode.movements {
                    if self.lane(movement.from).target(movement.turn).is_none() {
                        return Err(alloc::format!(
                            "junction {j} mode {m}: lane {} has no {} movement",
                            self.lane(movement.from).name,
                            movement.turn.name()
                        ));
                    }
                }
            }
        }

        for (b, wait_box) in self.boxes.iter().enumerate() {
            let Some(approach) = self.approaches.get(wait_box.approach) else {
                return Err(alloc::format!("box {b}: unknown approach"));
            };
            if approach.wait_box != Some(b) {
                return Err(alloc::format!("box {b}: approach {} does not own it", approach.name));
            }
            if wait_box.capacity == 0 {
                return Err(alloc::format!("box {b}: capacity must be positive"));
            }
            let Some(target) = self.lanes.get(wait_box.target.0) else {
                return Err(alloc::format!("box {b}: unknown target lane"));
            };
            if target.is_inbound() {
                return Err(alloc::format!("box {b}: target must be an outbound lane"));
            }
            let junction = self.box_junction(b);
            if wait_box.release_mode >= self.junctions[junction].plan.n_modes() {
                return Err(alloc::format!("box {b}: release mode out of range"));
            }
        }
        Ok(())
    }

    /// Junction a box belongs to: the one controlling its approach's lanes.
    pub fn box_junction(&self, box_id: usize) -> usize {
        let approach = &self.approaches[self.boxes[box_id].approach];
        approach
            .inbound
            .iter()
            .find_map(|&l| self.lane_junction[l.0])
            .expect("approach has signalized inbound lanes")
    }

    fn approach_of_lane(&self, lane: LaneId) -> Option<usize> {
        self.approaches.iter().position(|a| a.inbound.contains(&lane))
    }

    /// Whether two movements' junction paths cross. Same-approach movements
    /// never conflict (dedicated lanes); opposite approaches conflict only
    /// when a through meets a left or U-turn; perpendicular approaches always
    /// conflict.
    fn movements_conflict(&self, a: &Movement, b: &Movement) -> Result<bool, String> {
        let side = |m: &Movement| {
            self.approach_of_lane(m.from)
                .map(|i| self.approaches[i].position)
                .ok_or_else(|| alloc::format!("lane {} belongs to no approach", self.lane(m.from).name))
        };
        let (sa, sb) = (side(a)?, side(b)?);
        if sa == sb {
            return Ok(false);
        }
        if sa == sb.opposite() {
            let crossing = |x: Turn, y: Turn| {
                x == Turn::Through && matches!(y, Turn::Left | Turn::UTurn)
            };
            return Ok(crossing(a.turn, b.turn) || crossing(b.turn, a.turn));
        }
        Ok(true)
    }
}

/// Safe-speed car following with bounded acceleration and a stochastic
/// slowdown: `v_safe = leader + (gap - min_gap) / headway` floored at zero,
/// `v = min(own + a dt, v_max, v_safe)`, then `max(0, v - eps * b dt)` with
/// `eps` drawn uniformly from `[0, sigma)` by the caller.
pub fn car_following_speed(
    gap_m: f64,
    own_mps: f64,
    leader_mps: f64,
    params: &ClassParams,
    dt_s: f64,
    epsilon: f64,
) -> f64 {
    let v_safe = (leader_mps + (gap_m - params.min_gap_m) / FOLLOW_HEADWAY_S).max(0.0);
    let v_next = (own_mps + params.accel_mps2 * dt_s).min(params.max_speed_mps).min(v_safe);
    (v_next - epsilon * params.decel_mps2 * dt_s).max(0.0)
}

/// Halting vehicles per (junction, green mode): every vehicle at or below
/// [`HALT_SPEED_MPS`] on an inbound lane counts toward every mode serving
/// that lane.
pub fn halting_counts(world: &SimWorld) -> HaltCountMatrix {
    let net = world.network();
    let mut counts: Vec<Vec<u32>> =
        net.junctions.iter().map(|j| alloc::vec![0; j.plan.n_modes()]).collect();
    for (l, lane_state) in world.lane_states().iter().enumerate() {
        let Some(j) = net.lane_junction[l] else { continue };
        let halting =
            lane_state.vehicles.iter().filter(|v| v.speed_mps <= HALT_SPEED_MPS).count() as u32;
        if halting == 0 {
            continue;
        }
        for &mode in &net.serving_modes[l] {
            counts[j][mode] += halting;
        }
    }
    HaltCountMatrix::new(counts)
}
