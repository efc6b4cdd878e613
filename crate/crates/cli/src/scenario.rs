//! Scenario files: schema, loading, `--set` overrides and resolution into
//! simulator inputs.
//!
//! All quantities are in seconds (`_s`) and bits per second (`_bps`).

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use soze_core::fluid_sim::{AimdSettings, ControlSettings, SignalDelayMode, UpdateMode};
use soze_core::metrics::{DEFAULT_EPSILON, DEFAULT_WINDOW_INTERVALS};
use soze_core::model::{fat_tree, route_flow, star, ControllerKind, RawLink, RawTopology};
use soze_core::{FlowId, FlowSpec, LinkId, SimConfig, Topology};

use crate::builtin;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub topology: TopologySpec,
    #[serde(default)]
    pub flows: Vec<FlowEntry>,
    pub flow_generator: Option<FlowGenerator>,
    #[serde(default)]
    pub control: ControlSection,
    #[serde(default)]
    pub aimd: AimdSection,
    pub sim: SimSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub output: OutputSection,
    /// Exit with status 3 unless every epoch converges.
    #[serde(default)]
    pub require_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologySpec {
    Star {
        /// Number of hosts around the switch.
        n: usize,
        bandwidth_bps: f64,
        #[serde(default)]
        delay_s: f64,
    },
    FatTree {
        k: usize,
        bandwidth_bps: f64,
        #[serde(default)]
        delay_s: f64,
    },
    Inline {
        nodes: Vec<String>,
        /// Directed links.
        #[serde(default)]
        links: Vec<RawLink>,
        /// Bidirectional links, expanded into two directed links `a-b`, `b-a`.
        #[serde(default)]
        cables: Vec<Cable>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cable {
    pub a: String,
    pub b: String,
    pub bandwidth_bps: f64,
    #[serde(default)]
    pub delay_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowEntry {
    pub name: Option<String>,
    pub src: Option<String>,
    pub dst: Option<String>,
    /// Explicit route as link ids; replaces routing from `src`/`dst`.
    pub route: Option<Vec<String>>,
    pub weight: Option<f64>,
    /// `[[time_s, weight], ...]`, first entry at or before the start.
    pub weight_schedule: Option<Vec<(f64, f64)>>,
    #[serde(default)]
    pub start_s: f64,
    pub stop_s: Option<f64>,
    #[serde(default)]
    pub controller: ControllerKind,
    pub initial_rate_bps: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// Hosts `h0..h{count-1}` all send to one sink.
    Incast,
    /// Seeded random distinct source/destination pairs over all hosts.
    RandomPairs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowGenerator {
    pub kind: GeneratorKind,
    pub count: usize,
    /// Incast destination; defaults to the host after the senders.
    pub sink: Option<String>,
    #[serde(default)]
    pub seed: u64,
    /// Constant weight, used when no range is given.
    pub weight: Option<f64>,
    pub weight_min: Option<f64>,
    pub weight_max: Option<f64>,
    #[serde(default)]
    pub controller: ControllerKind,
    /// Weight changes applied to the first `count/2` generated flows:
    /// `[[time_s, weight], ...]`.
    #[serde(default)]
    pub half_weight_schedule: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UpdateKind {
    #[default]
    PerRtt,
    PerPacket,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlSection {
    pub p_s: f64,
    pub k_s: f64,
    pub m: f64,
    pub alpha_bps: Option<f64>,
    pub beta_bps: Option<f64>,
    pub update: UpdateKind,
    /// Required with `update = "fixed"`.
    pub update_interval_s: Option<f64>,
    pub rate_floor_bps: f64,
    pub rate_cap_bps: Option<f64>,
    pub packet_size_bits: f64,
    pub initial_rate_bps: Option<f64>,
}

impl Default for ControlSection {
    fn default() -> Self {
        let d = ControlSettings::default();
        Self {
            p_s: d.p,
            k_s: d.k,
            m: d.m,
            alpha_bps: None,
            beta_bps: None,
            update: UpdateKind::PerRtt,
            update_interval_s: None,
            rate_floor_bps: d.rate_floor,
            rate_cap_bps: None,
            packet_size_bits: d.packet_size,
            initial_rate_bps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AimdSection {
    pub threshold_s: f64,
    pub md: f64,
}

impl Default for AimdSection {
    fn default() -> Self {
        let d = AimdSettings::default();
        Self {
            threshold_s: d.threshold,
            md: d.md,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt_s: f64,
    pub end_s: f64,
    #[serde(default)]
    pub signal_delay: SignalDelayMode,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    pub epsilon: f64,
    pub window_intervals: f64,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            window_intervals: DEFAULT_WINDOW_INTERVALS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub trace: String,
    pub summary: String,
    /// Defaults to the integration step.
    pub sample_interval_s: Option<f64>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            trace: "trace.csv".into(),
            summary: "summary.json".into(),
            sample_interval_s: None,
        }
    }
}

/// Everything the simulator and metrics need, resolved from a scenario.
#[derive(Debug, Clone)]
pub struct Instance {
    pub scenario: ScenarioFile,
    pub topology: Topology,
    pub flows: Vec<FlowSpec>,
    pub config: SimConfig,
}

/// Reads a scenario from a path, or from the built-in set when no such file
/// exists and the name matches one.
pub fn read_source(source: &str) -> Result<String, CliError> {
    let path = Path::new(source);
    if path.exists() {
        return std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{source}: {e}")));
    }
    builtin::get(source).map(str::to_string).ok_or_else(|| {
        CliError::Config(format!(
            "{source}: no such file or built-in scenario (built-ins: {})",
            builtin::NAMES.join(", ")
        ))
    })
}

pub fn parse_value(text: &str) -> Result<toml::Value, CliError> {
    toml::from_str::<toml::Table>(text)
        .map(toml::Value::Table)
        .map_err(|e| CliError::Config(format!("parse error: {e}")))
}

/// Parses a `--set` value as a TOML literal, falling back to a bare string.
fn literal(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies `dotted.key=value`. Numeric segments index arrays; missing
/// tables are created.
pub fn apply_override(root: &mut toml::Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(CliError::Config(format!("override `{assignment}` has an empty key")));
    }
    set_path(root, key, literal(raw.trim()))
}

pub fn set_path(root: &mut toml::Value, key: &str, value: toml::Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = root;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        let bad = || CliError::Config(format!("override `{key}`: cannot descend into `{part}`"));
        cur = match cur {
            toml::Value::Table(t) => {
                if last {
                    t.insert(part.to_string(), value);
                    return Ok(());
                }
                t.entry(part.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            }
            toml::Value::Array(a) => {
                let idx: usize = part.parse().map_err(|_| bad())?;
                let len = a.len();
                let slot = a.get_mut(idx).ok_or_else(|| {
                    CliError::Config(format!("override `{key}`: index {idx} out of range ({len})"))
                })?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(bad()),
        };
    }
    Ok(())
}

pub fn decode(value: toml::Value) -> Result<ScenarioFile, CliError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("field `{path}`: {}", e.into_inner()))
    })
}

/// Loads a scenario source and applies overrides in order.
pub fn load(source: &str, overrides: &[String]) -> Result<(toml::Value, ScenarioFile), CliError> {
    let mut value = parse_value(&read_source(source)?)?;
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    let file = decode(value.clone())?;
    Ok((value, file))
}

fn build_topology(spec: &TopologySpec) -> Result<Topology, CliError> {
    let topo = match spec {
        TopologySpec::Star {
            n,
            bandwidth_bps,
            delay_s,
        } => star(*n, *bandwidth_bps, *delay_s),
        TopologySpec::FatTree {
            k,
            bandwidth_bps,
            delay_s,
        } => fat_tree(*k, *bandwidth_bps, *delay_s),
        TopologySpec::Inline {
            nodes,
            links,
            cables,
        } => {
            let mut raw = RawTopology {
                nodes: nodes.clone(),
                links: links.clone(),
            };
            for c in cables {
                raw.cable(&c.a, &c.b, c.bandwidth_bps, c.delay_s);
            }
            Topology::build(&raw)
        }
    };
    topo.map_err(|e| CliError::Config(format!("topology: {e}")))
}

fn node(topology: &Topology, name: &str, what: &str) -> Result<soze_core::model::NodeId, CliError> {
    topology
        .node_id(name)
        .ok_or_else(|| CliError::Config(format!("{what}: unknown node `{name}`")))
}

fn hosts(topology: &Topology) -> Vec<String> {
    topology
        .nodes()
        .iter()
        .filter(|n| n.starts_with('h'))
        .cloned()
        .collect()
}

fn schedule_of(entry: &FlowEntry, what: &str) -> Result<Vec<(f64, f64)>, CliError> {
    match (&entry.weight_schedule, entry.weight) {
        (Some(s), None) => Ok(s.clone()),
        (None, Some(w)) => Ok(vec![(entry.start_s, w)]),
        (None, None) => Ok(vec![(entry.start_s, 1.0)]),
        (Some(_), Some(_)) => Err(CliError::Config(format!(
            "{what}: give either `weight` or `weight_schedule`, not both"
        ))),
    }
}

fn explicit_flows(
    topology: &Topology,
    entries: &[FlowEntry],
    seed: u64,
) -> Result<Vec<FlowSpec>, CliError> {
    let mut out = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        let what = format!("flows[{i}]");
        let route = match (&e.route, &e.src, &e.dst) {
            (Some(links), _, _) => links
                .iter()
                .map(|l| {
                    topology
                        .link_id(l)
                        .ok_or_else(|| CliError::Config(format!("{what}.route: unknown link `{l}`")))
                })
                .collect::<Result<Vec<LinkId>, _>>()?,
            (None, Some(src), Some(dst)) => route_flow(
                topology,
                node(topology, src, &format!("{what}.src"))?,
                node(topology, dst, &format!("{what}.dst"))?,
                i as u64,
                seed,
            )
            .map_err(|err| CliError::Config(format!("{what}: {err}")))?,
            _ => {
                return Err(CliError::Config(format!(
                    "{what}: needs `route` or both `src` and `dst`"
                )))
            }
        };
        out.push(FlowSpec {
            id: FlowId(i),
            name: e.name.clone().unwrap_or_else(|| format!("f{i}")),
            route,
            weight_schedule: schedule_of(e, &what)?,
            start_time: e.start_s,
            stop_time: e.stop_s,
            controller: e.controller,
            initial_rate: e.initial_rate_bps,
        });
    }
    Ok(out)
}

fn generated_flows(
    topology: &Topology,
    g: &FlowGenerator,
    first_id: usize,
    seed: u64,
) -> Result<Vec<FlowSpec>, CliError> {
    let hosts = hosts(topology);
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
    let weight = |rng: &mut ChaCha8Rng| -> Result<f64, CliError> {
        match (g.weight_min, g.weight_max, g.weight) {
            (Some(lo), Some(hi), None) if lo > 0.0 && hi >= lo => Ok(if hi > lo {
                rng.random_range(lo..=hi)
            } else {
                lo
            }),
            (None, None, w) => Ok(w.unwrap_or(1.0)),
            _ => Err(CliError::Config(
                "flow_generator: give `weight`, or `weight_min` <= `weight_max` (both positive)"
                    .into(),
            )),
        }
    };
    let mut pairs = Vec::with_capacity(g.count);
    match g.kind {
        GeneratorKind::Incast => {
            let sink = match &g.sink {
                Some(s) => s.clone(),
                None => format!("h{}", g.count),
            };
            node(topology, &sink, "flow_generator.sink")?;
            let senders: Vec<&String> = hosts.iter().filter(|h| **h != sink).collect();
            if senders.len() < g.count {
                return Err(CliError::Config(format!(
                    "flow_generator.count: {} senders requested but only {} hosts besides the sink",
                    g.count,
                    senders.len()
                )));
            }
            for s in senders.into_iter().take(g.count) {
                pairs.push((s.clone(), sink.clone(), weight(&mut rng)?));
            }
        }
        GeneratorKind::RandomPairs => {
            if hosts.len() < 2 {
                return Err(CliError::Config(
                    "flow_generator: random_pairs needs at least two hosts".into(),
                ));
            }
            for _ in 0..g.count {
                let a = rng.random_range(0..hosts.len());
                let mut b = rng.random_range(0..hosts.len() - 1);
                if b >= a {
                    b += 1;
                }
                let w = weight(&mut rng)?;
                pairs.push((hosts[a].clone(), hosts[b].clone(), w));
            }
        }
    }
    let half = g.count / 2;
    pairs
        .into_iter()
        .enumerate()
        .map(|(i, (src, dst, w))| {
            let id = first_id + i;
            let route = route_flow(
                topology,
                node(topology, &src, "flow_generator")?,
                node(topology, &dst, "flow_generator")?,
                id as u64,
                seed,
            )
            .map_err(|e| CliError::Config(format!("flow_generator: {e}")))?;
            let mut weight_schedule = vec![(0.0, w)];
            if i < half {
                weight_schedule.extend(g.half_weight_schedule.iter().copied());
            }
            Ok(FlowSpec {
                id: FlowId(id),
                name: format!("g{i}_{src}_{dst}"),
                route,
                weight_schedule,
                start_time: 0.0,
                stop_time: None,
                controller: g.controller,
                initial_rate: None,
            })
        })
        .collect()
}

fn control_settings(c: &ControlSection) -> Result<ControlSettings, CliError> {
    let update = match (c.update, c.update_interval_s) {
        (UpdateKind::PerRtt, _) => UpdateMode::PerRtt,
        (UpdateKind::PerPacket, _) => UpdateMode::PerPacket,
        (UpdateKind::Fixed, Some(interval)) => UpdateMode::Fixed { interval },
        (UpdateKind::Fixed, None) => {
            return Err(CliError::Config(
                "control.update_interval_s: required when control.update = \"fixed\"".into(),
            ))
        }
    };
    Ok(ControlSettings {
        p: c.p_s,
        k: c.k_s,
        m: c.m,
        alpha: c.alpha_bps,
        beta: c.beta_bps,
        update,
        rate_floor: c.rate_floor_bps,
        rate_cap: c.rate_cap_bps,
        packet_size: c.packet_size_bits,
        initial_rate: c.initial_rate_bps,
    })
}

/// Resolves topology, flows and simulator configuration.
pub fn resolve(scenario: &ScenarioFile) -> Result<Instance, CliError> {
    let topology = build_topology(&scenario.topology)?;
    let seed = scenario.sim.seed;
    let mut flows = explicit_flows(&topology, &scenario.flows, seed)?;
    if let Some(g) = &scenario.flow_generator {
        let generated = generated_flows(&topology, g, flows.len(), seed)?;
        flows.extend(generated);
    }
    for f in &flows {
        f.validate(&topology)
            .map_err(|e| CliError::Config(format!("flow {}: {e}", f.name)))?;
    }
    let m = &scenario.metrics;
    if !(m.epsilon > 0.0 && m.window_intervals > 0.0) {
        return Err(CliError::Config(
            "metrics: epsilon and window_intervals must be positive".into(),
        ));
    }
    let config = SimConfig {
        dt: scenario.sim.dt_s,
        end_time: scenario.sim.end_s,
        signal_delay: scenario.sim.signal_delay,
        control: control_settings(&scenario.control)?,
        aimd: AimdSettings {
            threshold: scenario.aimd.threshold_s,
            md: scenario.aimd.md,
        },
        seed,
        sample_interval: scenario.output.sample_interval_s.unwrap_or(scenario.sim.dt_s),
    };
    Ok(Instance {
        scenario: scenario.clone(),
        topology,
        flows,
        config,
    })
}
