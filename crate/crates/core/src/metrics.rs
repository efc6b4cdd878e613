//! Measurements over simulation traces.

use serde::{Deserialize, Serialize};

use crate::control::{target_delay, ControlError, ControlParams};
use crate::fluid_sim::Trace;
use crate::model::{FlowSpec, LinkId, Topology};
use crate::oracle::{water_fill, OracleError};

/// Default relative tolerance around the fair rate.
pub const DEFAULT_EPSILON: f64 = 0.05;
/// Default hold window, in control intervals.
pub const DEFAULT_WINDOW_INTERVALS: f64 = 20.0;
/// Peak-to-peak variation below which rates count as steady.
pub const STEADY_TOLERANCE: f64 = 0.005;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("span of {span} s is shorter than the {window} s window")]
    TraceTooShort { span: f64, window: f64 },
    #[error("unknown link {0}")]
    UnknownLink(LinkId),
    #[error("unknown flow index {0}")]
    UnknownFlow(usize),
    #[error("{flows} flows but {rates} oracle rates")]
    SizeMismatch { flows: usize, rates: usize },
    #[error("target delay is zero")]
    ZeroTarget,
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkUtilization {
    pub link: usize,
    pub name: String,
    pub utilization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub converged: bool,
    /// Seconds after the measurement start.
    pub convergence_time: Option<f64>,
    /// `convergence_time / base_rtt`.
    pub convergence_rtts: Option<f64>,
    /// Longest base RTT among the measured flows.
    pub base_rtt: f64,
    /// Relative L∞ error against the oracle at the last sample.
    pub final_fairness_error: f64,
    /// Arrival utilization over the closing window, per link the flows use.
    pub link_utilization: Vec<LinkUtilization>,
    /// Rate std/mean over the closing window, aligned with the flows.
    pub rate_oscillation: Vec<f64>,
}

fn sample_range(trace: &Trace, start: f64, end: f64) -> std::ops::Range<usize> {
    let lo = trace.index_at(start);
    let hi = trace.index_at(end).max(lo);
    lo..hi.min(trace.len())
}

fn check_link(trace: &Trace, link: LinkId) -> Result<(), MetricsError> {
    if link.0 < trace.link_bandwidths.len() {
        Ok(())
    } else {
        Err(MetricsError::UnknownLink(link))
    }
}

/// Convergence after the last event of the trace: the earliest time from
/// which every listed flow stays within `eps` of its oracle rate for
/// `window_intervals` control intervals.
pub fn convergence_time(
    trace: &Trace,
    flows: &[usize],
    oracle: &[f64],
    eps: f64,
    window_intervals: f64,
) -> Result<ConvergenceReport, MetricsError> {
    let start = trace
        .event_times()
        .into_iter()
        .filter(|t| *t < trace.end_time)
        .fold(0.0, f64::max);
    convergence_between(trace, flows, oracle, start, trace.end_time, eps, window_intervals)
}

/// As [`convergence_time`], restricted to `[start, end]`.
pub fn convergence_between(
    trace: &Trace,
    flows: &[usize],
    oracle: &[f64],
    start: f64,
    end: f64,
    eps: f64,
    window_intervals: f64,
) -> Result<ConvergenceReport, MetricsError> {
    if flows.len() != oracle.len() {
        return Err(MetricsError::SizeMismatch {
            flows: flows.len(),
            rates: oracle.len(),
        });
    }
    if let Some(&f) = flows.iter().find(|&&f| f >= trace.rates.len()) {
        return Err(MetricsError::UnknownFlow(f));
    }
    let window = window_intervals * trace.control_interval;
    let tol = 1e-6 * trace.sample_interval;
    if end - start < window - tol {
        return Err(MetricsError::TraceTooShort {
            span: end - start,
            window,
        });
    }
    // The sample at an event time already shows the event, so it belongs
    // to the next epoch; only the very last sample closes the trace.
    let range = sample_range(trace, start, if end >= trace.end_time - tol { end + tol } else { end });
    let base_rtt = flows
        .iter()
        .map(|&f| trace.flow_base_rtts[f])
        .fold(0.0, f64::max);
    let error_at = |i: usize| {
        flows
            .iter()
            .zip(oracle)
            .map(|(&f, &o)| (trace.rates[f][i] - o).abs() / o)
            .fold(0.0, f64::max)
    };
    let final_fairness_error = error_at(range.end - 1);

    // Scan backwards tracking where the current in-tolerance run ends.
    let mut run_end = range.end;
    let mut found = None;
    for i in range.clone().rev() {
        if error_at(i) > eps {
            run_end = i;
            continue;
        }
        if trace.times[run_end - 1] - trace.times[i] >= window - tol {
            found = Some(i);
        }
    }
    let convergence_time = found.map(|i| trace.times[i] - start);

    let steady = (end - window).max(start);
    let mut links: Vec<LinkId> = flows
        .iter()
        .flat_map(|&f| trace.flow_routes[f].iter().copied())
        .collect();
    links.sort();
    links.dedup();
    let link_utilization = links
        .iter()
        .map(|&l| LinkUtilization {
            link: l.0,
            name: trace.link_names[l.0].clone(),
            utilization: mean(sample_range(trace, steady, end).map(|i| {
                trace.link_arrival(l, i) / trace.link_bandwidths[l.0]
            })),
        })
        .collect();
    let rate_oscillation = flows
        .iter()
        .map(|&f| rate_oscillation(trace, f, steady, end))
        .collect();

    Ok(ConvergenceReport {
        converged: convergence_time.is_some(),
        convergence_time,
        convergence_rtts: convergence_time
            .and_then(|t| (base_rtt > 0.0).then(|| t / base_rtt)),
        base_rtt,
        final_fairness_error,
        link_utilization,
        rate_oscillation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub start: f64,
    pub end: f64,
    /// Indices of flows running throughout the epoch.
    pub flows: Vec<usize>,
    /// Fair rates from the oracle, aligned with `flows`.
    pub fair_rates: Vec<f64>,
    /// Oracle bottleneck of each flow, aligned with `flows`.
    pub bottlenecks: Vec<usize>,
    pub convergence: ConvergenceReport,
}

/// Splits the trace at flow events and measures convergence to the
/// weighted max-min allocation within each epoch that has running flows.
pub fn epoch_reports(
    trace: &Trace,
    topology: &Topology,
    specs: &[FlowSpec],
    eps: f64,
    window_intervals: f64,
) -> Result<Vec<EpochReport>, MetricsError> {
    let mut out = Vec::new();
    for (start, end) in trace.epochs() {
        let mid = 0.5 * (start + end);
        let flows: Vec<usize> = (0..specs.len()).filter(|&f| specs[f].is_active(mid)).collect();
        if flows.is_empty() {
            continue;
        }
        let routes: Vec<_> = flows.iter().map(|&f| specs[f].route.clone()).collect();
        let weights: Vec<f64> = flows.iter().map(|&f| specs[f].weight_at(mid)).collect();
        let alloc = water_fill(topology, &routes, &weights)?;
        let convergence =
            convergence_between(trace, &flows, &alloc.rates, start, end, eps, window_intervals)?;
        out.push(EpochReport {
            start,
            end,
            flows,
            fair_rates: alloc.rates,
            bottlenecks: alloc.bottleneck.iter().map(|l| l.0).collect(),
            convergence,
        });
    }
    Ok(out)
}

/// Mean of `Σ rates / B` over `[start, end)`. Values above one mean the
/// link was overdriven and its queue grew.
pub fn utilization(trace: &Trace, link: LinkId, start: f64, end: f64) -> Result<f64, MetricsError> {
    check_link(trace, link)?;
    let b = trace.link_bandwidths[link.0];
    Ok(mean(
        sample_range(trace, start, end).map(|i| trace.link_arrival(link, i) / b),
    ))
}

/// Mean fraction of capacity actually transmitted over `[start, end)`:
/// a link with a standing queue sends at line rate, otherwise at its
/// arrival rate.
pub fn delivered_utilization(
    trace: &Trace,
    link: LinkId,
    start: f64,
    end: f64,
) -> Result<f64, MetricsError> {
    check_link(trace, link)?;
    let b = trace.link_bandwidths[link.0];
    Ok(mean(sample_range(trace, start, end).map(|i| {
        if trace.queue_delays[link.0][i] > 0.0 {
            1.0
        } else {
            (trace.link_arrival(link, i) / b).min(1.0)
        }
    })))
}

/// Mean queueing delay of a link over `[start, end)`.
pub fn mean_queue_delay(
    trace: &Trace,
    link: LinkId,
    start: f64,
    end: f64,
) -> Result<f64, MetricsError> {
    check_link(trace, link)?;
    Ok(mean(
        sample_range(trace, start, end).map(|i| trace.queue_delays[link.0][i]),
    ))
}

/// `|mean D − T(wfs)| / T(wfs)` for a link over `[start, end)`.
pub fn target_delay_error(
    trace: &Trace,
    link: LinkId,
    expected_wfs: f64,
    params: &ControlParams,
    start: f64,
    end: f64,
) -> Result<f64, MetricsError> {
    let observed = mean_queue_delay(trace, link, start, end)?;
    let target = target_delay(expected_wfs, params)?;
    if target == 0.0 {
        return Err(MetricsError::ZeroTarget);
    }
    Ok((observed - target).abs() / target)
}

/// Coefficient of variation (std / mean) of a flow's rate over the window.
pub fn rate_oscillation(trace: &Trace, flow: usize, start: f64, end: f64) -> f64 {
    let xs: Vec<f64> = sample_range(trace, start, end)
        .map(|i| trace.rates[flow][i])
        .collect();
    coefficient_of_variation(&xs)
}

pub fn coefficient_of_variation(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    if m == 0.0 {
        return 0.0;
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64;
    var.sqrt() / m
}

/// Earliest time in `[start, end)` after which every listed flow's rate
/// varies by less than `tol` (peak-to-peak over mean) across `window`
/// seconds. Needs no oracle.
pub fn steady_since(
    trace: &Trace,
    flows: &[usize],
    start: f64,
    end: f64,
    window: f64,
    tol: f64,
) -> Option<f64> {
    let range = sample_range(trace, start, end);
    let span = (window / trace.sample_interval).round() as usize;
    if span == 0 {
        return None;
    }
    range.clone().find_map(|i| {
        let j = i + span;
        if j >= range.end {
            return None;
        }
        let still = flows.iter().all(|&f| {
            let xs = &trace.rates[f][i..=j];
            let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            m > 0.0 && (hi - lo) / m < tol
        });
        still.then(|| trace.times[i])
    })
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = it.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ControlParams;

    /// One link of capacity 100; flows all cross it; control interval = 2 samples.
    fn synthetic(rates: Vec<Vec<f64>>, dt: f64) -> Trace {
        let n = rates[0].len();
        Trace {
            times: (0..n).map(|i| i as f64 * dt).collect(),
            flow_names: (0..rates.len()).map(|i| format!("f{i}")).collect(),
            link_names: vec!["l0".into()],
            signals: vec![vec![0.0; n]; rates.len()],
            queue_delays: vec![vec![0.0; n]],
            events: Vec::new(),
            sample_interval: dt,
            end_time: (n - 1) as f64 * dt,
            flow_routes: vec![vec![LinkId(0)]; rates.len()],
            flow_base_rtts: vec![2.0 * dt; rates.len()],
            link_bandwidths: vec![100.0],
            control_interval: 2.0 * dt,
            rates,
        }
    }

    #[test]
    fn already_converged_is_zero() {
        let t = synthetic(vec![vec![100.0; 50]], 1.0);
        let rep = convergence_time(&t, &[0], &[100.0], 0.05, 5.0).unwrap();
        assert_eq!(rep.convergence_time, Some(0.0));
        assert_eq!(rep.final_fairness_error, 0.0);
        assert_eq!(rep.rate_oscillation, vec![0.0]);
        assert_eq!(rep.link_utilization[0].utilization, 1.0);
    }

    #[test]
    fn never_within_tolerance() {
        let t = synthetic(vec![vec![50.0; 50]], 1.0);
        let rep = convergence_time(&t, &[0], &[100.0], 0.05, 5.0).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.convergence_time, None);
        assert_eq!(rep.convergence_rtts, None);
        assert_eq!(rep.final_fairness_error, 0.5);
    }

    #[test]
    fn exponential_approach_crossing() {
        // r(t) = o·(1 + e^{−t/τ}) crosses 5% at t* = τ·ln 20.
        let tau = 7.3;
        let dt = 0.1;
        let r: Vec<f64> = (0..2000)
            .map(|i| 100.0 * (1.0 + (-(i as f64 * dt) / tau).exp()))
            .collect();
        let t = synthetic(vec![r], dt);
        let rep = convergence_time(&t, &[0], &[100.0], 0.05, 20.0).unwrap();
        let analytic = tau * 20f64.ln();
        let got = rep.convergence_time.unwrap();
        assert!(got >= analytic && got - analytic <= dt + 1e-9, "{got} vs {analytic}");
        assert!((rep.convergence_rtts.unwrap() - got / (2.0 * dt)).abs() < 1e-9);
    }

    #[test]
    fn hold_window_rejects_brief_entries() {
        // In band on [10, 15) and from 20 on.
        let r: Vec<f64> = (0..101)
            .map(|i| if (10..15).contains(&i) || i >= 20 { 100.0 } else { 50.0 })
            .collect();
        let t = synthetic(vec![r], 1.0);
        let rep = convergence_time(&t, &[0], &[100.0], 0.05, 5.0).unwrap();
        assert_eq!(rep.convergence_time, Some(20.0));
        assert_eq!(rep.convergence_rtts, Some(10.0));
    }

    #[test]
    fn measured_from_last_event() {
        use crate::fluid_sim::{EventKind, EventMarker};
        use crate::model::FlowId;
        let r: Vec<f64> = (0..60).map(|i| if i < 35 { 100.0 } else { 200.0 }).collect();
        let mut t = synthetic(vec![r], 1.0);
        t.events.push(EventMarker {
            time: 30.0,
            kind: EventKind::WeightChange {
                flow: FlowId(0),
                weight: 2.0,
            },
        });
        let rep = convergence_time(&t, &[0], &[200.0], 0.05, 5.0).unwrap();
        assert_eq!(rep.convergence_time, Some(5.0));
    }

    #[test]
    fn worst_flow_decides() {
        let a = vec![100.0; 50];
        let b: Vec<f64> = (0..50).map(|i| if i < 30 { 10.0 } else { 98.0 }).collect();
        let t = synthetic(vec![a, b], 1.0);
        let rep = convergence_time(&t, &[0, 1], &[100.0, 100.0], 0.05, 2.5).unwrap();
        assert_eq!(rep.convergence_time, Some(30.0));
    }

    #[test]
    fn short_trace_is_an_error() {
        let t = synthetic(vec![vec![100.0; 10]], 1.0);
        assert!(matches!(
            convergence_time(&t, &[0], &[100.0], 0.05, 20.0),
            Err(MetricsError::TraceTooShort { .. })
        ));
        assert!(convergence_time(&t, &[0], &[], 0.05, 1.0).is_err());
    }

    #[test]
    fn utilization_cases() {
        let mut t = synthetic(vec![vec![100.0; 10]], 1.0);
        assert!((utilization(&t, LinkId(0), 0.0, 10.0).unwrap() - 1.0).abs() < 1e-3);
        t.rates[0] = vec![0.0; 10];
        assert_eq!(utilization(&t, LinkId(0), 0.0, 10.0).unwrap(), 0.0);
        assert!(utilization(&t, LinkId(3), 0.0, 10.0).is_err());

        let mut t = synthetic(vec![vec![50.0; 10], vec![70.0; 10]], 1.0);
        assert!((utilization(&t, LinkId(0), 0.0, 10.0).unwrap() - 1.2).abs() < 1e-12);
        t.rates[1] = vec![30.0; 10];
        assert!((delivered_utilization(&t, LinkId(0), 0.0, 10.0).unwrap() - 0.8).abs() < 1e-12);
        t.queue_delays[0] = vec![1e-6; 10];
        assert_eq!(delivered_utilization(&t, LinkId(0), 0.0, 10.0).unwrap(), 1.0);
    }

    #[test]
    fn target_delay_error_against_wfs() {
        let params = ControlParams::with_defaults(100e9, 1e-6, 100e9);
        let mut t = synthetic(vec![vec![25e9; 10]], 1.0);
        let target = target_delay(25e9, &params).unwrap();
        t.queue_delays[0] = vec![target; 10];
        let e = target_delay_error(&t, LinkId(0), 25e9, &params, 0.0, 10.0).unwrap();
        assert!(e < 1e-12);
        // Five units of weight instead of four: higher target delay.
        let higher = target_delay(20e9, &params).unwrap();
        assert!(higher > target);
        t.queue_delays[0] = vec![higher; 10];
        let e = target_delay_error(&t, LinkId(0), 20e9, &params, 0.0, 10.0).unwrap();
        assert!(e < 1e-12);
        assert!(target_delay_error(&t, LinkId(0), 0.0, &params, 0.0, 10.0).is_err());
    }

    #[test]
    fn oscillation_and_steady() {
        let flat = vec![10.0; 40];
        let wave: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { 5.0 } else { 15.0 }).collect();
        assert_eq!(coefficient_of_variation(&flat), 0.0);
        assert!((coefficient_of_variation(&wave) - 0.5).abs() < 1e-12);
        let mut settle = wave.clone();
        settle[20..].iter_mut().for_each(|x| *x = 10.0);
        let t = synthetic(vec![settle], 1.0);
        assert_eq!(steady_since(&t, &[0], 0.0, 40.0, 5.0, STEADY_TOLERANCE), Some(20.0));
    }
}
