use serde::{Deserialize, Serialize};

use crate::model::{FlowId, LinkId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EventKind {
    FlowStart { flow: FlowId },
    FlowStop { flow: FlowId },
    WeightChange { flow: FlowId, weight: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventMarker {
    /// Scheduled time, seconds.
    pub time: f64,
    pub kind: EventKind,
}

/// Sampled time series of one simulation run, plus the static facts the
/// metrics need to interpret it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub times: Vec<f64>,
    pub flow_names: Vec<String>,
    pub link_names: Vec<String>,
    /// `[flow][sample]`, bits/s; zero while a flow is not running.
    pub rates: Vec<Vec<f64>>,
    /// `[flow][sample]`, seconds; the last signal delivered to the sender.
    pub signals: Vec<Vec<f64>>,
    /// `[link][sample]`, seconds.
    pub queue_delays: Vec<Vec<f64>>,
    pub events: Vec<EventMarker>,
    pub sample_interval: f64,
    pub end_time: f64,
    pub flow_routes: Vec<Vec<LinkId>>,
    pub flow_base_rtts: Vec<f64>,
    pub link_bandwidths: Vec<f64>,
    /// Longest nominal update interval among the flows.
    pub control_interval: f64,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the first sample at or after `t`.
    pub fn index_at(&self, t: f64) -> usize {
        self.times
            .partition_point(|&x| x < t - 1e-6 * self.sample_interval)
    }

    /// Event times, deduplicated and ascending.
    pub fn event_times(&self) -> Vec<f64> {
        let mut times: Vec<f64> = self.events.iter().map(|e| e.time).collect();
        times.sort_by(f64::total_cmp);
        times.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        times
    }

    /// `(start, end)` intervals between consecutive events and the end of
    /// the run. Flows change only at these boundaries.
    pub fn epochs(&self) -> Vec<(f64, f64)> {
        let mut bounds = self.event_times();
        bounds.retain(|t| *t < self.end_time);
        if bounds.first().is_none_or(|t| *t > 0.0) {
            bounds.insert(0, 0.0);
        }
        bounds.push(self.end_time);
        bounds.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Sum of traversing flow rates per link at sample `i`.
    pub fn link_arrival(&self, link: LinkId, i: usize) -> f64 {
        self.flow_routes
            .iter()
            .enumerate()
            .filter(|(_, r)| r.contains(&link))
            .map(|(f, _)| self.rates[f][i])
            .sum()
    }
}
