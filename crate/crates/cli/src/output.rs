//! Trace CSV and summary JSON.
//!
//! Trace columns, in order: `time_s`; `flow_<id>_rate_bps` for every flow;
//! `flow_<id>_signal_s` for every flow; `link_<id>_qdelay_s` for every
//! link. Ids are the numeric flow and link ids listed in the summary.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use soze_core::control::{check_lemma_conditions, ControlParams};
use soze_core::metrics::{ConvergenceReport, EpochReport};
use soze_core::model::ControllerKind;
use soze_core::Trace;

use crate::scenario::Instance;
use crate::CliError;

pub fn trace_header(trace: &Trace, flow_ids: &[usize]) -> Vec<String> {
    let mut h = vec!["time_s".to_string()];
    h.extend(flow_ids.iter().map(|id| format!("flow_{id}_rate_bps")));
    h.extend(flow_ids.iter().map(|id| format!("flow_{id}_signal_s")));
    h.extend((0..trace.link_names.len()).map(|id| format!("link_{id}_qdelay_s")));
    h
}

pub fn write_trace_csv<W: Write>(trace: &Trace, flow_ids: &[usize], out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trace_header(trace, flow_ids))?;
    let mut row = Vec::with_capacity(1 + 2 * trace.rates.len() + trace.queue_delays.len());
    for i in 0..trace.len() {
        row.clear();
        row.push(trace.times[i].to_string());
        row.extend(trace.rates.iter().map(|r| r[i].to_string()));
        row.extend(trace.signals.iter().map(|s| s[i].to_string()));
        row.extend(trace.queue_delays.iter().map(|q| q[i].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes via a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, write: impl FnOnce(&mut dyn Write) -> Result<(), CliError>) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
        write(&mut buf)?;
        buf.flush()?;
    }
    // Temporary files are created owner-only.
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644))?;
    }
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowInfo {
    pub id: usize,
    pub name: String,
    pub route: Vec<String>,
    pub base_rtt_s: f64,
    pub weight_schedule: Vec<(f64, f64)>,
    pub start_s: f64,
    pub stop_s: Option<f64>,
    pub controller: ControllerKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkInfo {
    pub id: usize,
    pub name: String,
    pub bandwidth_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaSummary {
    pub m: f64,
    pub p_s: f64,
    pub update_interval_s: f64,
    pub alpha_bps: f64,
    pub beta_bps: f64,
    pub fairness_ok: bool,
    pub queue_osc_ok: bool,
    pub queue_noosc_ok: bool,
    /// `None` when the update interval is zero.
    pub p_over_dt: Option<f64>,
    pub osc_threshold: f64,
    pub noosc_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub start_s: f64,
    pub end_s: f64,
    /// Flow ids running in this epoch.
    pub flows: Vec<usize>,
    pub oracle_rates_bps: Vec<f64>,
    /// Oracle bottleneck link id per flow.
    pub bottlenecks: Vec<usize>,
    /// Rates at the last sample of the epoch.
    pub final_rates_bps: Vec<f64>,
    pub convergence: ConvergenceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub seed: u64,
    pub dt_s: f64,
    pub end_s: f64,
    pub control_interval_s: f64,
    pub flows: Vec<FlowInfo>,
    pub links: Vec<LinkInfo>,
    pub lemma: LemmaSummary,
    pub epochs: Vec<EpochSummary>,
    pub all_converged: bool,
}

/// Lemma conditions evaluated at the longest control interval in the run,
/// which is the most demanding for the queue conditions.
pub fn lemma_summary(inst: &Instance, control_interval: f64) -> LemmaSummary {
    let c = &inst.config.control;
    let (alpha, beta) = c.alpha_beta(&inst.topology, &inst.flows);
    let params = ControlParams {
        p: c.p,
        k: c.k,
        m: c.m,
        alpha,
        beta,
        update_interval: control_interval,
        rate_floor: c.rate_floor,
        rate_cap: c.rate_cap.unwrap_or(f64::MAX),
    };
    let r = check_lemma_conditions(&params);
    LemmaSummary {
        m: c.m,
        p_s: c.p,
        update_interval_s: control_interval,
        alpha_bps: alpha,
        beta_bps: beta,
        fairness_ok: r.fairness_ok,
        queue_osc_ok: r.queue_osc_ok,
        queue_noosc_ok: r.queue_noosc_ok,
        p_over_dt: r.p_over_dt.is_finite().then_some(r.p_over_dt),
        osc_threshold: r.osc_threshold,
        noosc_threshold: r.noosc_threshold,
    }
}

pub fn build_summary(inst: &Instance, trace: &Trace, epochs: &[EpochReport]) -> Summary {
    let topo = &inst.topology;
    let flows = inst
        .flows
        .iter()
        .zip(&trace.flow_base_rtts)
        .map(|(f, rtt)| FlowInfo {
            id: f.id.0,
            name: f.name.clone(),
            route: f.route.iter().map(|l| topo.link(*l).name.clone()).collect(),
            base_rtt_s: *rtt,
            weight_schedule: f.weight_schedule.clone(),
            start_s: f.start_time,
            stop_s: f.stop_time,
            controller: f.controller,
        })
        .collect();
    let links = topo
        .links()
        .iter()
        .map(|l| LinkInfo {
            id: l.id.0,
            name: l.name.clone(),
            bandwidth_bps: l.bandwidth,
        })
        .collect();
    let epochs: Vec<EpochSummary> = epochs
        .iter()
        .map(|e| {
            // The sample at an event time already reflects that event.
            let last = if e.end >= trace.end_time - 1e-6 * trace.sample_interval {
                trace.len() - 1
            } else {
                trace.index_at(e.end).saturating_sub(1)
            };
            EpochSummary {
                start_s: e.start,
                end_s: e.end,
                flows: e.flows.iter().map(|&f| inst.flows[f].id.0).collect(),
                oracle_rates_bps: e.fair_rates.clone(),
                bottlenecks: e.bottlenecks.clone(),
                final_rates_bps: e.flows.iter().map(|&f| trace.rates[f][last]).collect(),
                convergence: e.convergence.clone(),
            }
        })
        .collect();
    Summary {
        scenario: inst.scenario.name.clone(),
        seed: inst.config.seed,
        dt_s: inst.config.dt,
        end_s: trace.end_time,
        control_interval_s: trace.control_interval,
        flows,
        links,
        lemma: lemma_summary(inst, trace.control_interval),
        all_converged: epochs.iter().all(|e| e.convergence.converged),
        epochs,
    }
}

pub fn summary_json(summary: &Summary) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(summary)?)
}
