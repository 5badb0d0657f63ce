//! The scenario file format: a TOML document with `[network]`,
//! `[signal_plan]`, `[flows]`, and `[classes]` sections, documented in
//! docs/scenario-format.md. The built-in scenarios export to the same format
//! (`qsignal scenario`), so a file is both a template and a config.

use std::collections::BTreeMap;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use qsignal_core::scenario::ScenarioConfig;
use qsignal_core::signal::{GreenMode, SignalPlan};
use qsignal_core::sim::{
    Approach, ArrivalProcess, ClassKind, ClassParams, ClassSet, ClassTable, Compass, Flow,
    Junction, Lane, LaneId, Movement, Network, Turn, WaitBox, DEFAULT_DRIVER_SIGMA,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub network: NetworkSection,
    pub signal_plan: SignalPlanSection,
    #[serde(default)]
    pub flows: FlowsSection,
    #[serde(default)]
    pub classes: ClassesSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkSection {
    pub name: String,
    /// Distance covered while crossing the junction; the transit takes
    /// `ceil(distance / max(speed, 1))` seconds.
    #[serde(default = "default_crossing")]
    pub crossing_distance_m: f64,
    /// Driver imperfection range; 0 disables the stochastic slowdown.
    #[serde(default = "default_sigma")]
    pub driver_sigma: f64,
    #[serde(rename = "approach")]
    pub approaches: Vec<ApproachEntry>,
    #[serde(rename = "lane")]
    pub lanes: Vec<LaneEntry>,
    #[serde(rename = "waiting_box", default)]
    pub waiting_boxes: Vec<BoxEntry>,
}

fn default_crossing() -> f64 {
    2.0
}

fn default_sigma() -> f64 {
    DEFAULT_DRIVER_SIGMA
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApproachEntry {
    pub name: String,
    /// Which side of the junction: north, east, south, or west.
    pub side: String,
    pub inbound: Vec<String>,
    pub outbound: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LaneEntry {
    pub name: String,
    pub length_m: f64,
    /// Vehicle classes admitted: car, scooter, truck.
    pub allows: Vec<String>,
    /// `{ turn, to }` pairs; empty for outbound lanes.
    #[serde(default)]
    pub movements: Vec<MovementEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MovementEntry {
    pub turn: String,
    pub to: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxEntry {
    /// Approach whose scooters use this box for two-stage lefts.
    pub approach: String,
    pub capacity: usize,
    /// Mode (by name) whose green releases the box.
    pub release_mode: String,
    /// Outbound lane released scooters join.
    pub exit: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignalPlanSection {
    pub yellow_s: u32,
    #[serde(rename = "mode")]
    pub modes: Vec<ModeEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeEntry {
    pub name: String,
    pub green_s: u32,
    /// Permitted movements as `lane:turn` references.
    pub movements: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct FlowsSection {
    /// `bernoulli` (default) or `evenly_spaced`.
    #[serde(default = "default_arrivals")]
    pub arrivals: String,
    #[serde(rename = "flow", default)]
    pub flows: Vec<FlowEntry>,
}

fn default_arrivals() -> String {
    "bernoulli".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowEntry {
    pub from: String,
    pub to: String,
    pub class: String,
    pub rate_per_hour: f64,
    #[serde(default)]
    pub start_s: u64,
    /// Defaults to the run duration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_s: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct ClassesSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub car: Option<ClassEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scooter: Option<ClassEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truck: Option<ClassEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassEntry {
    pub length_m: f64,
    pub max_speed_mps: f64,
    pub accel_mps2: f64,
    pub decel_mps2: f64,
    pub min_gap_m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSection {
    pub duration_s: u64,
    pub seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { duration_s: 3600, seed: 0 }
    }
}

fn parse_turn(raw: &str) -> Result<Turn> {
    match raw {
        "left" => Ok(Turn::Left),
        "through" => Ok(Turn::Through),
        "right" => Ok(Turn::Right),
        "uturn" => Ok(Turn::UTurn),
        other => bail!("unknown turn '{other}' (expected left, through, right, uturn)"),
    }
}

fn parse_class(raw: &str) -> Result<ClassKind> {
    match raw {
        "car" => Ok(ClassKind::Car),
        "scooter" => Ok(ClassKind::Scooter),
        "truck" => Ok(ClassKind::Truck),
        other => bail!("unknown vehicle class '{other}' (expected car, scooter, truck)"),
    }
}

fn parse_side(raw: &str) -> Result<Compass> {
    match raw {
        "north" => Ok(Compass::North),
        "east" => Ok(Compass::East),
        "south" => Ok(Compass::South),
        "west" => Ok(Compass::West),
        other => bail!("unknown side '{other}' (expected north, east, south, west)"),
    }
}

fn side_name(side: Compass) -> &'static str {
    match side {
        Compass::North => "north",
        Compass::East => "east",
        Compass::South => "south",
        Compass::West => "west",
    }
}

fn class_entry(params: &ClassParams) -> ClassEntry {
    ClassEntry {
        length_m: params.length_m,
        max_speed_mps: params.max_speed_mps,
        accel_mps2: params.accel_mps2,
        decel_mps2: params.decel_mps2,
        min_gap_m: params.min_gap_m,
    }
}

fn class_params(entry: &ClassEntry) -> ClassParams {
    ClassParams {
        length_m: entry.length_m,
        max_speed_mps: entry.max_speed_mps,
        accel_mps2: entry.accel_mps2,
        decel_mps2: entry.decel_mps2,
        min_gap_m: entry.min_gap_m,
    }
}

/// Parses a scenario document into a validated config.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    let file: ScenarioFile = toml::from_str(text).context("invalid scenario file")?;
    scenario_from_file(&file)
}

pub fn scenario_from_file(file: &ScenarioFile) -> Result<ScenarioConfig> {
    let mut lane_ids: BTreeMap<&str, LaneId> = BTreeMap::new();
    for (i, lane) in file.network.lanes.iter().enumerate() {
        if lane_ids.insert(&lane.name, LaneId(i)).is_some() {
            bail!("duplicate lane name '{}'", lane.name);
        }
    }
    let lane_id = |name: &str| -> Result<LaneId> {
        lane_ids.get(name).copied().ok_or_else(|| anyhow!("unknown lane '{name}'"))
    };

    let lanes: Vec<Lane> = file
        .network
        .lanes
        .iter()
        .map(|entry| {
            let allowed = ClassSet::from_iter(
                entry.allows.iter().map(|c| parse_class(c)).collect::<Result<Vec<_>>>()?,
            );
            let movements = entry
                .movements
                .iter()
                .map(|m| Ok((parse_turn(&m.turn)?, lane_id(&m.to)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(Lane { name: entry.name.clone(), length_m: entry.length_m, allowed, movements })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut approaches: Vec<Approach> = file
        .network
        .approaches
        .iter()
        .map(|entry| {
            Ok(Approach {
                name: entry.name.clone(),
                position: parse_side(&entry.side)?,
                inbound: entry.inbound.iter().map(|n| lane_id(n)).collect::<Result<Vec<_>>>()?,
                outbound: entry.outbound.iter().map(|n| lane_id(n)).collect::<Result<Vec<_>>>()?,
                wait_box: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mode_index = |name: &str| -> Result<usize> {
        file.signal_plan
            .modes
            .iter()
            .position(|m| m.name == name)
            .ok_or_else(|| anyhow!("unknown signal mode '{name}'"))
    };
    let boxes: Vec<WaitBox> = file
        .network
        .waiting_boxes
        .iter()
        .enumerate()
        .map(|(b, entry)| {
            let approach = approaches
                .iter()
                .position(|a| a.name == entry.approach)
                .ok_or_else(|| anyhow!("unknown approach '{}'", entry.approach))?;
            approaches[approach].wait_box = Some(b);
            Ok(WaitBox {
                approach,
                capacity: entry.capacity,
                release_mode: mode_index(&entry.release_mode)?,
                target: lane_id(&entry.exit)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let green_modes = file
        .signal_plan
        .modes
        .iter()
        .map(|mode| {
            let movements = mode
                .movements
                .iter()
                .map(|reference| {
                    let (lane, turn) = reference
                        .split_once(':')
                        .ok_or_else(|| anyhow!("movement '{reference}' is not 'lane:turn'"))?;
                    Ok(Movement { from: lane_id(lane)?, turn: parse_turn(turn)? })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(GreenMode::new(movements))
        })
        .collect::<Result<Vec<_>>>()?;
    let plan = SignalPlan {
        junction: 0,
        green_modes,
        green_durations_s: file.signal_plan.modes.iter().map(|m| m.green_s).collect(),
        yellow_s: file.signal_plan.yellow_s,
    };
    let junction = Junction {
        plan,
        inbound: (0..lanes.len()).map(LaneId).filter(|&l| lanes[l.0].is_inbound()).collect(),
        crossing_distance_m: file.network.crossing_distance_m,
    };

    let network = Network::build(lanes, approaches, vec![junction], boxes)
        .map_err(|e| anyhow!("invalid network: {e}"))?;

    let arrivals = match file.flows.arrivals.as_str() {
        "bernoulli" => ArrivalProcess::Bernoulli,
        "evenly_spaced" => ArrivalProcess::EvenlySpaced,
        other => bail!("unknown arrival process '{other}' (expected bernoulli, evenly_spaced)"),
    };
    let duration_s = file.run.duration_s;
    let flows = file
        .flows
        .flows
        .iter()
        .map(|entry| {
            let from = network
                .approach_named(&entry.from)
                .ok_or_else(|| anyhow!("unknown approach '{}'", entry.from))?;
            let to = network
                .approach_named(&entry.to)
                .ok_or_else(|| anyhow!("unknown approach '{}'", entry.to))?;
            Ok(Flow {
                from,
                to,
                class: parse_class(&entry.class)?,
                rate_per_hour: entry.rate_per_hour,
                start_s: entry.start_s,
                end_s: entry.end_s.unwrap_or(duration_s),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let defaults = ClassTable::default();
    let classes = ClassTable {
        car: file.classes.car.as_ref().map(class_params).unwrap_or(defaults.car),
        scooter: file.classes.scooter.as_ref().map(class_params).unwrap_or(defaults.scooter),
        truck: file.classes.truck.as_ref().map(class_params).unwrap_or(defaults.truck),
    };
    classes.validate().map_err(|e| anyhow!("invalid classes: {e}"))?;

    if !(file.network.driver_sigma >= 0.0 && file.network.driver_sigma <= 1.0) {
        bail!("driver_sigma must be in [0, 1]");
    }

    Ok(ScenarioConfig {
        name: file.network.name.clone(),
        network,
        classes,
        sigma: file.network.driver_sigma,
        arrivals,
        flows,
        duration_s,
        seed: file.run.seed,
    })
}

/// Exports a config (built-in or loaded) back to the file schema.
pub fn scenario_to_file(config: &ScenarioConfig) -> ScenarioFile {
    let net = &config.network;
    let lane_name = |id: LaneId| net.lane(id).name.clone();
    let mode_name = |m: usize| format!("G{}", m + 1);

    let lanes = net
        .lanes
        .iter()
        .map(|lane| LaneEntry {
            name: lane.name.clone(),
            length_m: lane.length_m,
            allows: lane.allowed.iter().map(|k| k.name().to_string()).collect(),
            movements: lane
                .movements
                .iter()
                .map(|&(turn, to)| MovementEntry {
                    turn: turn.name().to_string(),
                    to: lane_name(to),
                })
                .collect(),
        })
        .collect();
    let approaches = net
        .approaches
        .iter()
        .map(|a| ApproachEntry {
            name: a.name.clone(),
            side: side_name(a.position).to_string(),
            inbound: a.inbound.iter().map(|&l| lane_name(l)).collect(),
            outbound: a.outbound.iter().map(|&l| lane_name(l)).collect(),
        })
        .collect();
    let waiting_boxes = net
        .boxes
        .iter()
        .map(|b| BoxEntry {
            approach: net.approaches[b.approach].name.clone(),
            capacity: b.capacity,
            release_mode: mode_name(b.release_mode),
            exit: lane_name(b.target),
        })
        .collect();

    let plan = &net.junctions[0].plan;
    let modes = plan
        .green_modes
        .iter()
        .enumerate()
        .map(|(m, mode)| ModeEntry {
            name: mode_name(m),
            green_s: plan.green_durations_s[m],
            movements: mode
                .movements
                .iter()
                .map(|mv| format!("{}:{}", lane_name(mv.from), mv.turn.name()))
                .collect(),
        })
        .collect();

    let flows = config
        .flows
        .iter()
        .map(|f| FlowEntry {
            from: net.approaches[f.from].name.clone(),
            to: net.approaches[f.to].name.clone(),
            class: f.class.name().to_string(),
            rate_per_hour: f.rate_per_hour,
            start_s: f.start_s,
            end_s: (f.end_s != config.duration_s).then_some(f.end_s),
        })
        .collect();

    ScenarioFile {
        network: NetworkSection {
            name: config.name.clone(),
            crossing_distance_m: net.junctions[0].crossing_distance_m,
            driver_sigma: config.sigma,
            approaches,
            lanes,
            waiting_boxes,
        },
        signal_plan: SignalPlanSection { yellow_s: plan.yellow_s, modes },
        flows: FlowsSection {
            arrivals: match config.arrivals {
                ArrivalProcess::Bernoulli => "bernoulli".to_string(),
                ArrivalProcess::EvenlySpaced => "evenly_spaced".to_string(),
            },
            flows,
        },
        classes: ClassesSection {
            car: Some(class_entry(&config.classes.car)),
            scooter: Some(class_entry(&config.classes.scooter)),
            truck: Some(class_entry(&config.classes.truck)),
        },
        run: RunSection { duration_s: config.duration_s, seed: config.seed },
    }
}

/// Renders a scenario to TOML with a short orientation header.
pub fn scenario_to_toml(config: &ScenarioConfig) -> Result<String> {
    let body = toml::to_string_pretty(&scenario_to_file(config))?;
    Ok(format!(
        "# qsignal scenario (see docs/scenario-format.md for the schema)\n\
         # Lanes with movements are inbound; movement targets must be outbound\n\
         # lanes on the side the turn geometrically exits to.\n{body}"
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use qsignal_core::scenario::{build_dongda_intersection, scenario_with_preset};

    #[test]
    fn dongda_round_trips_through_the_file_format() {
        let config = scenario_with_preset("dongda", "T1", 3600).unwrap();
        let toml_text = scenario_to_toml(&config).unwrap();
        let reloaded = parse_scenario(&toml_text).unwrap();
        assert_eq!(reloaded.name, config.name);
        assert_eq!(reloaded.network.lanes.len(), config.network.lanes.len());
        assert_eq!(reloaded.network.boxes.len(), config.network.boxes.len());
        assert_eq!(reloaded.flows.len(), config.flows.len());
        assert_eq!(
            reloaded.network.junctions[0].plan,
            config.network.junctions[0].plan
        );
        for (a, b) in reloaded.flows.iter().zip(&config.flows) {
            assert_eq!(a, b);
        }
        // A second export is byte-identical: the format is canonical.
        assert_eq!(scenario_to_toml(&reloaded).unwrap(), toml_text);
    }

    #[test]
    fn bad_references_are_rejected() {
        let config = build_dongda_intersection();
        let mut file = scenario_to_file(&config);
        file.signal_plan.modes[0].movements.push("nowhere:through".to_string());
        let err = scenario_from_file(&file).unwrap_err();
        assert!(err.to_string().contains("unknown lane"), "{err}");
    }

    #[test]
    fn conflicting_modes_are_rejected() {
        let config = build_dongda_intersection();
        let mut file = scenario_to_file(&config);
        // Put a north-south through into the east-west protected-left mode.
        let stolen = file.signal_plan.modes[0].movements[0].clone();
        file.signal_plan.modes[3].movements.push(stolen);
        let err = scenario_from_file(&file).unwrap_err();
        assert!(err.to_string().contains("conflicting"), "{err}");
    }
}
