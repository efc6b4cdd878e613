//! The `run`, `sweep` and `oracle` commands.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use soze_core::metrics::epoch_reports;
use soze_core::{water_fill, Trace};

use crate::output::{build_summary, summary_json, write_atomic, write_trace_csv, Summary};
use crate::scenario::{decode, load, resolve, set_path, Instance, TopologySpec};
use crate::CliError;

/// Environment variable capping sweep parallelism.
pub const THREADS_ENV: &str = "SOZE_SIM_THREADS";

pub struct RunOutput {
    pub trace: Trace,
    pub summary: Summary,
}

/// Simulates an instance and evaluates every epoch against the oracle.
pub fn execute(inst: &Instance) -> Result<RunOutput, CliError> {
    let trace = soze_core::run(&inst.topology, &inst.flows, &inst.config)?;
    let m = &inst.scenario.metrics;
    let epochs = epoch_reports(&trace, &inst.topology, &inst.flows, m.epsilon, m.window_intervals)?;
    let summary = build_summary(inst, &trace, &epochs);
    Ok(RunOutput { trace, summary })
}

fn flow_ids(inst: &Instance) -> Vec<usize> {
    inst.flows.iter().map(|f| f.id.0).collect()
}

/// Writes the trace CSV and summary JSON named by the scenario into `dir`.
pub fn write_outputs(inst: &Instance, out: &RunOutput, dir: &Path) -> Result<(PathBuf, PathBuf), CliError> {
    let trace_path = dir.join(&inst.scenario.output.trace);
    let summary_path = dir.join(&inst.scenario.output.summary);
    let ids = flow_ids(inst);
    write_atomic(&trace_path, |w| write_trace_csv(&out.trace, &ids, w))?;
    let json = summary_json(&out.summary)?;
    write_atomic(&summary_path, |w| Ok(w.write_all(json.as_bytes())?))?;
    Ok((trace_path, summary_path))
}

fn gbps(x: f64) -> f64 {
    x / 1e9
}

fn print_summary(summary: &Summary, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "scenario {}: {} flows, {} links", summary.scenario, summary.flows.len(), summary.links.len())?;
    let l = &summary.lemma;
    writeln!(
        out,
        "lemma: m={} fairness_ok={} p/dt={} osc_ok={} noosc_ok={}",
        l.m,
        l.fairness_ok,
        l.p_over_dt.map_or("inf".to_string(), |v| format!("{v:.2}")),
        l.queue_osc_ok,
        l.queue_noosc_ok
    )?;
    for e in &summary.epochs {
        let c = &e.convergence;
        writeln!(
            out,
            "epoch [{:.6}, {:.6}) s  converged={}  rtts={}  fairness_err={:.4}",
            e.start_s,
            e.end_s,
            c.converged,
            c.convergence_rtts.map_or("-".to_string(), |r| format!("{r:.1}")),
            c.final_fairness_error
        )?;
        writeln!(out, "  {:<16} {:>12} {:>12}", "flow", "oracle Gbps", "sim Gbps")?;
        for (i, id) in e.flows.iter().enumerate() {
            writeln!(
                out,
                "  {:<16} {:>12.4} {:>12.4}",
                summary.flows[*id].name,
                gbps(e.oracle_rates_bps[i]),
                gbps(e.final_rates_bps[i])
            )?;
        }
    }
    Ok(())
}

/// `run`: simulate, write outputs, print a table. Fails with
/// [`CliError::NotConverged`] after writing when the scenario requires
/// convergence and some epoch missed it.
pub fn cmd_run(source: &str, overrides: &[String], out_dir: &Path, stdout: &mut dyn Write) -> Result<Summary, CliError> {
    let (_, file) = load(source, overrides)?;
    let inst = resolve(&file)?;
    let out = execute(&inst)?;
    let (trace_path, summary_path) = write_outputs(&inst, &out, out_dir)?;
    print_summary(&out.summary, stdout)?;
    writeln!(stdout, "wrote {} and {}", trace_path.display(), summary_path.display())?;
    if file.require_converged && !out.summary.all_converged {
        return Err(CliError::NotConverged(format!(
            "scenario {} requires convergence but some epochs did not converge",
            file.name
        )));
    }
    Ok(out.summary)
}

pub const SWEEP_PARAMS: &[&str] = &["m", "p", "k", "flow_count", "K", "initial_rate"];

/// Overrides for one sweep value. `flow_count` resizes a star topology
/// and turns explicit flows into an incast generator when none is set.
fn sweep_overrides(root: &mut toml::Value, file: &crate::scenario::ScenarioFile, param: &str, raw: &str) -> Result<(), CliError> {
    let bad = |what: &str| CliError::Config(format!("--values: `{raw}` is not {what} for `{param}`"));
    let float = || raw.parse::<f64>().map_err(|_| bad("a number"));
    let count = || raw.parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(|| bad("a positive integer"));
    match param {
        "m" => set_path(root, "control.m", toml::Value::Float(float()?)),
        "p" => set_path(root, "control.p_s", toml::Value::Float(float()?)),
        "k" => set_path(root, "control.k_s", toml::Value::Float(float()?)),
        "initial_rate" => set_path(root, "control.initial_rate_bps", toml::Value::Float(float()?)),
        "K" => set_path(root, "topology.k", toml::Value::Integer(count()? as i64)),
        "flow_count" => {
            let n = count()?;
            if let TopologySpec::Star { .. } = file.topology {
                set_path(root, "topology.n", toml::Value::Integer(n as i64 + 1))?;
            }
            if file.flow_generator.is_none() {
                let weight = file.flows.first().and_then(|f| f.weight).unwrap_or(1.0);
                if let toml::Value::Table(t) = root {
                    t.remove("flows");
                }
                set_path(root, "flow_generator.kind", toml::Value::String("incast".into()))?;
                set_path(root, "flow_generator.weight", toml::Value::Float(weight))?;
            }
            set_path(root, "flow_generator.count", toml::Value::Integer(n as i64))
        }
        _ => Err(CliError::Config(format!(
            "--param: unknown parameter `{param}` (expected one of {})",
            SWEEP_PARAMS.join(", ")
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: String,
    pub value: String,
    pub all_converged: bool,
    /// Per epoch, in order.
    pub convergence_rtts: Vec<Option<f64>>,
    pub max_fairness_error: f64,
    #[serde(skip)]
    pub summary: Option<Summary>,
}

fn sweep_row(param: &str, value: &str, summary: Summary) -> SweepRow {
    SweepRow {
        param: param.to_string(),
        value: value.to_string(),
        all_converged: summary.all_converged,
        convergence_rtts: summary.epochs.iter().map(|e| e.convergence.convergence_rtts).collect(),
        max_fairness_error: summary
            .epochs
            .iter()
            .map(|e| e.convergence.final_fairness_error)
            .fold(0.0, f64::max),
        summary: Some(summary),
    }
}

fn thread_cap() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| CliError::Config(format!("{THREADS_ENV}: `{v}` is not a positive integer"))),
        Err(_) => Ok(None),
    }
}

/// `sweep`: one run per value, in parallel, rows in value order. With
/// `out_dir`, each run writes its outputs to `<out_dir>/<param>_<value>/`.
pub fn cmd_sweep(
    source: &str,
    param: &str,
    values: &[String],
    overrides: &[String],
    out_dir: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<Vec<SweepRow>, CliError> {
    if !SWEEP_PARAMS.contains(&param) {
        return Err(CliError::Config(format!(
            "--param: unknown parameter `{param}` (expected one of {})",
            SWEEP_PARAMS.join(", ")
        )));
    }
    let values: Vec<&str> = values.iter().map(|v| v.trim()).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        return Err(CliError::Config("--values: empty value list".into()));
    }
    let (base, file) = load(source, overrides)?;
    let instances = values
        .iter()
        .map(|v| {
            let mut root = base.clone();
            sweep_overrides(&mut root, &file, param, v)?;
            resolve(&decode(root)?)
        })
        .collect::<Result<Vec<Instance>, CliError>>()?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let rows = pool.install(|| {
        instances
            .par_iter()
            .zip(values.par_iter())
            .map(|(inst, v)| {
                let out = execute(inst)?;
                if let Some(dir) = out_dir {
                    write_outputs(inst, &out, &dir.join(format!("{param}_{v}")))?;
                }
                Ok(sweep_row(param, v, out.summary))
            })
            .collect::<Result<Vec<SweepRow>, CliError>>()
    })?;

    writeln!(stdout, "{param},all_converged,convergence_rtts,max_fairness_error")?;
    for r in &rows {
        let rtts: Vec<String> = r
            .convergence_rtts
            .iter()
            .map(|x| x.map_or("-".to_string(), |v| format!("{v:.2}")))
            .collect();
        writeln!(stdout, "{},{},{},{:.6}", r.value, r.all_converged, rtts.join(";"), r.max_fairness_error)?;
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleLink {
    pub id: usize,
    pub name: String,
    /// Rate per unit weight of the flows this link freezes.
    pub wfs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleEpoch {
    pub start_s: f64,
    pub end_s: f64,
    pub flows: Vec<usize>,
    pub names: Vec<String>,
    pub weights: Vec<f64>,
    pub rates_bps: Vec<f64>,
    /// Bottleneck link id per flow.
    pub bottlenecks: Vec<usize>,
    pub saturated_links: Vec<OracleLink>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub scenario: String,
    pub epochs: Vec<OracleEpoch>,
}

/// Boundaries of the intervals over which the active flow set and weights
/// are constant.
fn epoch_bounds(inst: &Instance) -> Vec<(f64, f64)> {
    let end = inst.config.end_time;
    let mut times = vec![0.0];
    for f in &inst.flows {
        times.push(f.start_time);
        times.extend(f.stop_time);
        times.extend(f.weight_schedule.iter().map(|(t, _)| *t));
    }
    times.retain(|t| (0.0..end).contains(t));
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
        .iter()
        .enumerate()
        .map(|(i, &t)| (t, times.get(i + 1).copied().unwrap_or(end)))
        .collect()
}

pub fn oracle_report(inst: &Instance) -> Result<OracleReport, CliError> {
    let topo = &inst.topology;
    let mut epochs = Vec::new();
    for (start, end) in epoch_bounds(inst) {
        let mid = 0.5 * (start + end);
        let active: Vec<usize> = (0..inst.flows.len()).filter(|&f| inst.flows[f].is_active(mid)).collect();
        let weights: Vec<f64> = active.iter().map(|&f| inst.flows[f].weight_at(mid)).collect();
        let mut epoch = OracleEpoch {
            start_s: start,
            end_s: end,
            flows: active.iter().map(|&f| inst.flows[f].id.0).collect(),
            names: active.iter().map(|&f| inst.flows[f].name.clone()).collect(),
            weights,
            rates_bps: Vec::new(),
            bottlenecks: Vec::new(),
            saturated_links: Vec::new(),
        };
        if !active.is_empty() {
            let routes: Vec<_> = active.iter().map(|&f| inst.flows[f].route.clone()).collect();
            let alloc = water_fill(topo, &routes, &epoch.weights)
                .map_err(|e| CliError::Config(format!("oracle: {e}")))?;
            epoch.rates_bps = alloc.rates;
            epoch.bottlenecks = alloc.bottleneck.iter().map(|l| l.0).collect();
            epoch.saturated_links = alloc
                .wfs
                .iter()
                .enumerate()
                .filter_map(|(l, w)| {
                    w.map(|wfs| OracleLink {
                        id: l,
                        name: topo.links()[l].name.clone(),
                        wfs,
                    })
                })
                .collect();
        }
        epochs.push(epoch);
    }
    Ok(OracleReport {
        scenario: inst.scenario.name.clone(),
        epochs,
    })
}

/// `oracle`: the weighted max-min allocation of every epoch, as JSON.
pub fn cmd_oracle(source: &str, overrides: &[String], stdout: &mut dyn Write) -> Result<OracleReport, CliError> {
    let (_, file) = load(source, overrides)?;
    let inst = resolve(&file)?;
    let report = oracle_report(&inst)?;
    writeln!(stdout, "{}", serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}
