//! The two built-in intersections and their demand presets.
//!
//! Both networks are four-way crossroads with, per side: a car-only
//! left/U-turn pocket branching off 150 m before the junction, a middle
//! through lane, an outer through/right lane, and two outbound lanes. Four
//! green modes pair the opposite approaches: through+right on one axis,
//! protected lefts on the same axis, then the other axis.
//!
//! `simple` is symmetric (30 s greens, 5 s yellow) and carries cars only.
//! `dongda` models the Dongda-Keyuan intersection: scooters share the middle
//! and outer lanes, each corner has a two-stage-left waiting box, and the
//! fixed program is the field setting 45/30/22/24 s with 4 s yellows. Its
//! long G1 is assigned to the north-south axis, which carries the heaviest
//! measured flows.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::signal::{GreenMode, SignalPlan};
use crate::sim::{
    exit_side, Approach, ArrivalProcess, ClassKind, ClassSet, ClassTable, Compass, Flow, Junction,
    Lane, LaneId, Movement, Network, Turn, WaitBox, DEFAULT_DRIVER_SIGMA,
};

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioError {
    UnknownPreset { name: String },
    UnknownScenario { name: String },
    Invalid(String),
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioError::UnknownPreset { name } => {
                write!(f, "unknown demand preset '{name}'; valid presets: ")?;
                for (i, p) in PRESET_NAMES.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{p}")?;
                }
                Ok(())
            }
            ScenarioError::UnknownScenario { name } => {
                write!(f, "unknown scenario '{name}'; built-ins: simple, dongda")
            }
            ScenarioError::Invalid(msg) => write!(f, "invalid scenario: {msg}"),
        }
    }
}

impl core::error::Error for ScenarioError {}

/// A fully resolved scenario: network, classes, demand, and run defaults.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub name: String,
    pub network: Network,
    pub classes: ClassTable,
    /// Driver imperfection range (epsilon uniform in `[0, sigma)`).
    pub sigma: f64,
    pub arrivals: ArrivalProcess,
    pub flows: Vec<Flow>,
    pub duration_s: u64,
    pub seed: u64,
}

impl ScenarioConfig {
    /// Re-windows every flow to `[0, duration)`.
    pub fn with_demand(mut self, flows: Vec<Flow>) -> Self {
        self.flows = flows;
        self
    }
}

/// Builds one of the built-in scenarios by name.
pub fn built_in_scenario(name: &str) -> Result<ScenarioConfig, ScenarioError> {
    match name {
        "simple" => Ok(build_simple_intersection()),
        "dongda" => Ok(build_dongda_intersection()),
        other => Err(ScenarioError::UnknownScenario { name: other.into() }),
    }
}

const SIDES: [(&str, Compass); 4] = [
    ("L", Compass::West),
    ("R", Compass::East),
    ("T", Compass::North),
    ("B", Compass::South),
];

/// Approach length before the stop line.
const MAIN_LANE_M: f64 = 300.0;
/// The left/U-turn pocket branches off this far before the junction.
const POCKET_LANE_M: f64 = 150.0;
/// Outbound run to the network boundary.
const OUT_LANE_M: f64 = 150.0;
/// With `ceil(distance / max(speed, 1))`, this distance makes a crossing
/// take 2 s from low speed and 1 s at speed.
const CROSSING_M: f64 = 2.0;
/// Corner waiting-box capacity for two-stage lefts.
const BOX_CAPACITY: usize = 10;

struct SideLanes {
    left: LaneId,
    mid: LaneId,
    outer: LaneId,
    out_inner: LaneId,
    out_outer: LaneId,
}

/// Assembles the shared four-way geometry. `mixed_traffic` opens the middle
/// and outer lanes to scooters and adds the corner waiting boxes.
fn four_way(
    name: &str,
    green_durations_s: [u32; 4],
    yellow_s: u32,
    ns_axis_first: bool,
    mixed_traffic: bool,
) -> ScenarioConfig {
    let car_only = ClassSet::from_iter([ClassKind::Car, ClassKind::Truck]);
    let shared = if mixed_traffic { ClassSet::all() } else { car_only };

    let mut lanes: Vec<Lane> = Vec::new();
    let mut side_lanes: Vec<SideLanes> = Vec::new();
    for (side, _) in SIDES {
        let base = lanes.len();
        lanes.push(Lane {
            name: alloc::format!("{side}.in.left"),
            length_m: POCKET_LANE_M,
            allowed: car_only,
            movements: vec![],
        });
        lanes.push(Lane {
            name: alloc::format!("{side}.in.mid"),
            length_m: MAIN_LANE_M,
            allowed: shared,
            movements: vec![],
        });
        lanes.push(Lane {
            name: alloc::format!("{side}.in.outer"),
            length_m: MAIN_LANE_M,
            allowed: shared,
            movements: vec![],
        });
        lanes.push(Lane {
            name: alloc::format!("{side}.out.inner"),
            length_m: OUT_LANE_M,
            allowed: ClassSet::all(),
            movements: vec![],
        });
        lanes.push(Lane {
            name: alloc::format!("{side}.out.outer"),
            length_m: OUT_LANE_M,
            allowed: ClassSet::all(),
            movements: vec![],
        });
        side_lanes.push(SideLanes {
            left: LaneId(base),
            mid: LaneId(base + 1),
            outer: LaneId(base + 2),
            out_inner: LaneId(base + 3),
            out_outer: LaneId(base + 4),
        });
    }

    let side_at = |pos: Compass| SIDES.iter().position(|&(_, p)| p == pos).expect("four sides");
    for (i, (_, position)) in SIDES.iter().enumerate() {
        let left_exit = side_at(exit_side(*position, Turn::Left));
        let right_exit = side_at(exit_side(*position, Turn::Right));
        let through_exit = side_at(exit_side(*position, Turn::Through));
        lanes[side_lanes[i].left.0].movements = vec![
            (Turn::Left, side_lanes[left_exit].out_inner),
            (Turn::UTurn, side_lanes[i].out_inner),
        ];
        lanes[side_lanes[i].mid.0].movements =
            vec![(Turn::Through, side_lanes[through_exit].out_inner)];
        lanes[side_lanes[i].outer.0].movements = vec![
            (Turn::Through, side_lanes[through_exit].out_outer),
            (Turn::Right, side_lanes[right_exit].out_outer),
        ];
    }

    // Each axis contributes a through+right mode followed by its protected
    // lefts; `ns_axis_first` decides which axis owns G1/G2.
    let axis_sides: [[usize; 2]; 2] = if ns_axis_first {
        [[side_at(Compass::North), side_at(Compass::South)], [side_at(Compass::West), side_at(Compass::East)]]
    } else {
        [[side_at(Compass::West), side_at(Compass::East)], [side_at(Compass::North), side_at(Compass::South)]]
    };
    let mut green_modes = Vec::with_capacity(4);
    let mut through_mode_of_axis = [0usize; 2];
    for (axis, sides) in axis_sides.iter().enumerate() {
        through_mode_of_axis[axis] = green_modes.len();
        green_modes.push(GreenMode::new(sides.iter().flat_map(|&s| {
            [
                Movement { from: side_lanes[s].mid, turn: Turn::Through },
                Movement { from: side_lanes[s].outer, turn: Turn::Through },
                Movement { from: side_lanes[s].outer, turn: Turn::Right },
            ]
        })));
        green_modes.push(GreenMode::new(sides.iter().flat_map(|&s| {
            [
                Movement { from: side_lanes[s].left, turn: Turn::Left },
                Movement { from: side_lanes[s].left, turn: Turn::UTurn },
            ]
        })));
    }

    let plan = SignalPlan {
        junction: 0,
        green_modes,
        green_durations_s: green_durations_s.to_vec(),
        yellow_s,
    };
    let junction = Junction {
        plan,
        inbound: side_lanes
            .iter()
            .flat_map(|s| [s.left, s.mid, s.outer])
            .collect(),
        crossing_distance_m: CROSSING_M,
    };

    let mut approaches: Vec<Approach> = SIDES
        .iter()
        .enumerate()
        .map(|(i, (side, position))| Approach {
            name: String::from(*side),
            position: *position,
            inbound: vec![side_lanes[i].left, side_lanes[i].mid, side_lanes[i].outer],
            outbound: vec![side_lanes[i].out_inner, side_lanes[i].out_outer],
            wait_box: None,
        })
        .collect();

    let mut boxes = Vec::new();
    if mixed_traffic {
        // A two-stage left from approach `i` crosses straight, waits at the
        // far corner, and rides out with the cross axis's through green.
        for i in 0..4 {
            let position = SIDES[i].1;
            let in_axis =
                axis_sides.iter().position(|sides| sides.contains(&i)).expect("side on an axis");
            let cross_axis = 1 - in_axis;
            let exit = side_at(exit_side(position, Turn::Left));
            approaches[i].wait_box = Some(boxes.len());
            boxes.push(WaitBox {
                approach: i,
                capacity: BOX_CAPACITY,
                release_mode: through_mode_of_axis[cross_axis],
                target: side_lanes[exit].out_outer,
            });
        }
    }

    let network = Network::build(lanes, approaches, vec![junction], boxes)
        .expect("built-in scenario geometry is valid");
    ScenarioConfig {
        name: String::from(name),
        network,
        classes: ClassTable::default(),
        sigma: DEFAULT_DRIVER_SIGMA,
        arrivals: ArrivalProcess::Bernoulli,
        flows: Vec::new(),
        duration_s: 3600,
        seed: 0,
    }
}

/// The symmetric crossroad: car traffic only, every green 30 s, yellow 5 s.
pub fn build_simple_intersection() -> ScenarioConfig {
    four_way("simple", [30, 30, 30, 30], 5, false, false)
}

/// The Dongda-Keyuan intersection: mixed car/scooter lanes, corner waiting
/// boxes for two-stage lefts, field signal timing 45/30/22/24 s with 4 s
/// yellows, G1 on the heavy north-south axis.
pub fn build_dongda_intersection() -> ScenarioConfig {
    four_way("dongda", [45, 30, 22, 24], 4, true, true)
}

/// Valid preset names: four measured rush hours for `dongda`, six synthetic
/// conditions for `simple`.
pub const PRESET_NAMES: [&str; 10] =
    ["T1", "T2", "T3", "T4", "H", "D", "L", "LT", "LR", "LRB"];

/// Origin-destination order of the measured table rows.
pub const DONGDA_OD_PAIRS: [(&str, &str); 12] = [
    ("L", "R"),
    ("L", "T"),
    ("L", "B"),
    ("T", "R"),
    ("T", "B"),
    ("T", "L"),
    ("R", "B"),
    ("R", "L"),
    ("R", "T"),
    ("B", "L"),
    ("B", "T"),
    ("B", "R"),
];

/// Hourly (cars, scooters) measured at Dongda-Keyuan per OD pair, for the
/// rush hours T1 (07-08), T2 (08-09), T3 (17-18), and T4 (18-19).
pub const DONGDA_HOURLY_COUNTS: [[(u32, u32); 12]; 4] = [
    // T1
    [
        (351, 311),
        (134, 104),
        (97, 104),
        (184, 79),
        (236, 238),
        (113, 79),
        (120, 46),
        (151, 226),
        (80, 46),
        (224, 131),
        (448, 394),
        (176, 131),
    ],
    // T2
    [
        (399, 371),
        (142, 124),
        (104, 124),
        (188, 86),
        (269, 257),
        (141, 86),
        (115, 57),
        (188, 284),
        (76, 57),
        (237, 150),
        (475, 448),
        (199, 150),
    ],
    // T3
    [
        (434, 375),
        (153, 125),
        (115, 125),
        (148, 96),
        (220, 288),
        (142, 96),
        (72, 58),
        (187, 285),
        (48, 58),
        (256, 161),
        (512, 484),
        (217, 161),
    ],
    // T4
    [
        (288, 288),
        (117, 96),
        (115, 96),
        (171, 64),
        (190, 192),
        (116, 64),
        (68, 47),
        (150, 232),
        (46, 47),
        (195, 130),
        (389, 388),
        (144, 130),
    ],
];

/// Share of total volume driven as trucks, reassigned out of the car counts
/// so per-OD totals stay exactly the measured ones.
pub const TRUCK_SHARE: f64 = 0.01;

/// One demand line of a preset, by approach name.
#[derive(Debug, Clone, PartialEq)]
pub struct PresetEntry {
    pub from: &'static str,
    pub to: &'static str,
    pub class: ClassKind,
    pub rate_per_hour: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemandPreset {
    pub name: &'static str,
    pub entries: Vec<PresetEntry>,
}

impl DemandPreset {
    pub fn total_rate(&self) -> f64 {
        self.entries.iter().map(|e| e.rate_per_hour).sum()
    }
}

/// Looks up a demand preset by name.
pub fn demand_preset(name: &str) -> Result<DemandPreset, ScenarioError> {
    if let Some(period) = ["T1", "T2", "T3", "T4"].iter().position(|&p| p == name) {
        return Ok(dongda_preset(period));
    }
    match PRESET_NAMES.iter().find(|&&p| p == name) {
        Some(&canonical) => Ok(simple_preset(canonical)),
        None => Err(ScenarioError::UnknownPreset { name: name.into() }),
    }
}

fn dongda_preset(period: usize) -> DemandPreset {
    let mut entries = Vec::with_capacity(36);
    for (od, &(cars, scooters)) in DONGDA_OD_PAIRS.iter().zip(&DONGDA_HOURLY_COUNTS[period]) {
        let truck_rate = TRUCK_SHARE * (cars + scooters) as f64;
        entries.push(PresetEntry {
            from: od.0,
            to: od.1,
            class: ClassKind::Car,
            rate_per_hour: cars as f64 - truck_rate,
        });
        entries.push(PresetEntry {
            from: od.0,
            to: od.1,
            class: ClassKind::Scooter,
            rate_per_hour: scooters as f64,
        });
        entries.push(PresetEntry {
            from: od.0,
            to: od.1,
            class: ClassKind::Truck,
            rate_per_hour: truck_rate,
        });
    }
    DemandPreset { name: ["T1", "T2", "T3", "T4"][period], entries }
}

// PLACEHOLDER demand levels for the simple-intersection presets. The original
// study lists per-condition volumes that are not reproduced here; these rates
// only preserve each condition's structure (which approaches are dense). The
// golden-data test in tests/preset_data.rs stays ignored until the measured
// values replace them.
const SIMPLE_DENSE_RATE: f64 = 900.0;
const SIMPLE_BASE_RATE: f64 = 250.0;
const SIMPLE_SYMMETRIC_RATE: f64 = 600.0;

/// Turn split applied to each simple-intersection origin volume.
const SIMPLE_TURN_SPLIT: [(Turn, f64); 3] =
    [(Turn::Left, 0.2), (Turn::Through, 0.6), (Turn::Right, 0.2)];

fn simple_preset(name: &'static str) -> DemandPreset {
    let dense: &[&str] = match name {
        "H" => &[],
        "D" => &["L", "R", "T", "B"],
        "L" => &["L"],
        "LT" => &["L", "T"],
        "LR" => &["L", "R"],
        "LRB" => &["L", "R", "B"],
        _ => unreachable!("checked by demand_preset"),
    };
    let mut entries = Vec::new();
    for (side, position) in SIDES {
        let volume = if name == "H" {
            SIMPLE_SYMMETRIC_RATE
        } else if dense.contains(&side) {
            SIMPLE_DENSE_RATE
        } else {
            SIMPLE_BASE_RATE
        };
        for (turn, share) in SIMPLE_TURN_SPLIT {
            let exit = exit_side(position, turn);
            let to = SIDES.iter().find(|&&(_, p)| p == exit).expect("four sides").0;
            entries.push(PresetEntry {
                from: side,
                to,
                class: ClassKind::Car,
                rate_per_hour: volume * share,
            });
        }
    }
    DemandPreset { name, entries }
}

/// Resolves a preset against a network into flows active on `[0, duration)`.
pub fn preset_flows(
    preset: &DemandPreset,
    network: &Network,
    duration_s: u64,
) -> Result<Vec<Flow>, ScenarioError> {
    let mut flows = Vec::with_capacity(preset.entries.len());
    for entry in &preset.entries {
        let from = network.approach_named(entry.from).ok_or_else(|| {
            ScenarioError::Invalid(alloc::format!("no approach named {}", entry.from))
        })?;
        let to = network.approach_named(entry.to).ok_or_else(|| {
            ScenarioError::Invalid(alloc::format!("no approach named {}", entry.to))
        })?;
        flows.push(Flow {
            from,
            to,
            class: entry.class,
            rate_per_hour: entry.rate_per_hour,
            start_s: 0,
            end_s: duration_s,
        });
    }
    Ok(flows)
}

/// Builds a scenario and applies a preset in one step.
pub fn scenario_with_preset(
    scenario: &str,
    preset: &str,
    duration_s: u64,
) -> Result<ScenarioConfig, ScenarioError> {
    let mut config = built_in_scenario(scenario)?;
    let preset = demand_preset(preset)?;
    config.duration_s = duration_s;
    config.flows = preset_flows(&preset, &config.network, duration_s)?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{FlowEngine, SimWorld};

    #[test]
    fn simple_intersection_geometry() {
        let config = build_simple_intersection();
        let net = &config.network;
        let inbound: Vec<_> = net.lanes.iter().filter(|l| l.is_inbound()).collect();
        assert_eq!(inbound.len(), 12, "4 approaches x 3 inbound lanes");
        assert_eq!(net.lanes.len() - inbound.len(), 8, "4 approaches x 2 outbound lanes");
        let left = net.lanes.iter().find(|l| l.name == "L.in.left").unwrap();
        assert_eq!(left.length_m, 150.0);
        assert!(left.allowed.contains(ClassKind::Car));
        assert!(left.allowed.contains(ClassKind::Truck));
        assert!(!left.allowed.contains(ClassKind::Scooter));
        let plan = &net.junctions[0].plan;
        assert_eq!(plan.green_durations_s, vec![30, 30, 30, 30]);
        assert_eq!(plan.yellow_s, 5);
        assert!(net.boxes.is_empty());
    }

    #[test]
    fn dongda_intersection_geometry() {
        let config = build_dongda_intersection();
        let net = &config.network;
        let plan = &net.junctions[0].plan;
        assert_eq!(plan.green_durations_s, vec![45, 30, 22, 24]);
        assert_eq!(plan.yellow_s, 4);
        assert_eq!(net.boxes.len(), 4, "one waiting box per corner");
        let mid = net.lanes.iter().find(|l| l.name == "L.in.mid").unwrap();
        assert!(mid.allowed.contains(ClassKind::Car));
        assert!(mid.allowed.contains(ClassKind::Scooter));
        // Scooters have no direct left: no lane both allows scooters and has
        // a left movement.
        for lane in &net.lanes {
            if lane.movements.iter().any(|(t, _)| *t == Turn::Left) {
                assert!(!lane.allowed.contains(ClassKind::Scooter), "lane {}", lane.name);
            }
        }
    }

    #[test]
    fn dongda_boxes_release_with_the_cross_axis_green() {
        let config = build_dongda_intersection();
        let net = &config.network;
        // G1 serves north-south through; an east-west scooter's box must
        // release on it, and vice versa for G3.
        let l = net.approach_named("L").unwrap();
        let t = net.approach_named("T").unwrap();
        let l_box = net.approaches[l].wait_box.unwrap();
        let t_box = net.approaches[t].wait_box.unwrap();
        assert_eq!(net.boxes[l_box].release_mode, 0);
        assert_eq!(net.boxes[t_box].release_mode, 2);
    }

    #[test]
    fn measured_presets_keep_table_totals() {
        for (period, name) in ["T1", "T2", "T3", "T4"].iter().enumerate() {
            let preset = demand_preset(name).unwrap();
            assert_eq!(preset.entries.len(), 36);
            for (i, od) in DONGDA_OD_PAIRS.iter().enumerate() {
                let (cars, scooters) = DONGDA_HOURLY_COUNTS[period][i];
                let rate = |class: ClassKind| -> f64 {
                    preset
                        .entries
                        .iter()
                        .filter(|e| e.from == od.0 && e.to == od.1 && e.class == class)
                        .map(|e| e.rate_per_hour)
                        .sum()
                };
                let total = rate(ClassKind::Car) + rate(ClassKind::Scooter) + rate(ClassKind::Truck);
                assert!((total - (cars + scooters) as f64).abs() < 1e-9);
                assert!((rate(ClassKind::Scooter) - scooters as f64).abs() < 1e-9);
                assert!((rate(ClassKind::Truck) - TRUCK_SHARE * (cars + scooters) as f64).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn t1_lr_rates_match_the_measured_row() {
        let preset = demand_preset("T1").unwrap();
        let car_family: f64 = preset
            .entries
            .iter()
            .filter(|e| e.from == "L" && e.to == "R" && e.class != ClassKind::Scooter)
            .map(|e| e.rate_per_hour)
            .sum();
        assert!((car_family - 351.0).abs() < 1e-9);
        let scooter: f64 = preset
            .entries
            .iter()
            .filter(|e| e.from == "L" && e.to == "R" && e.class == ClassKind::Scooter)
            .map(|e| e.rate_per_hour)
            .sum();
        assert!((scooter - 311.0).abs() < 1e-9);
    }

    #[test]
    fn t4_bt_scooter_rate() {
        let preset = demand_preset("T4").unwrap();
        let scooter: f64 = preset
            .entries
            .iter()
            .filter(|e| e.from == "B" && e.to == "T" && e.class == ClassKind::Scooter)
            .map(|e| e.rate_per_hour)
            .sum();
        assert!((scooter - 388.0).abs() < 1e-9);
    }

    #[test]
    fn unknown_preset_lists_the_valid_names() {
        let err = demand_preset("T9").unwrap_err();
        let msg = alloc::format!("{err}");
        assert!(msg.contains("T9"));
        for name in PRESET_NAMES {
            assert!(msg.contains(name), "missing {name} in: {msg}");
        }
    }

    #[test]
    fn every_preset_resolves_on_its_network() {
        for name in PRESET_NAMES {
            let scenario = if name.starts_with('T') { "dongda" } else { "simple" };
            let config = scenario_with_preset(scenario, name, 3600).unwrap();
            let world =
                SimWorld::new(config.network.clone(), config.classes, config.sigma, config.seed);
            // FlowEngine::new re-resolves and validates every route.
            FlowEngine::new(world.network(), &config.flows, config.arrivals, config.seed)
                .unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn networks_pass_validation() {
        // Network::build validates; reaching here means both pass.
        build_simple_intersection();
        build_dongda_intersection();
    }
}
