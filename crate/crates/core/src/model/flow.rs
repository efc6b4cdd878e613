use std::fmt;

use serde::{Deserialize, Serialize};

use super::{LinkId, ModelError, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowId(pub usize);

impl fmt::Display for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "f{}", self.0)
    }
}

/// Which rate controller drives a flow.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    #[default]
    Soze,
    Aimd,
}

/// Static description of a flow. Weight changes are step functions: a
/// new weight holds from its timestamp until the next one.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub id: FlowId,
    pub name: String,
    pub route: Vec<LinkId>,
    /// `(time_s, weight)` pairs with strictly increasing times.
    pub weight_schedule: Vec<(f64, f64)>,
    pub start_time: f64,
    pub stop_time: Option<f64>,
    pub controller: ControllerKind,
    /// Overrides the simulator's default starting rate.
    pub initial_rate: Option<f64>,
}

impl FlowSpec {
    /// A Söze flow with a constant weight that runs from `t = 0`.
    pub fn constant(id: usize, route: Vec<LinkId>, weight: f64) -> Self {
        Self {
            id: FlowId(id),
            name: format!("f{id}"),
            route,
            weight_schedule: vec![(0.0, weight)],
            start_time: 0.0,
            stop_time: None,
            controller: ControllerKind::Soze,
            initial_rate: None,
        }
    }

    pub fn validate(&self, topology: &Topology) -> Result<(), ModelError> {
        let flow = || self.name.clone();
        topology
            .validate_route(&self.route, None, None)
            .map_err(|e| ModelError::InvalidFlow {
                flow: flow(),
                reason: e.to_string(),
            })?;
        let bad = |reason: &str| ModelError::InvalidFlow {
            flow: flow(),
            reason: reason.to_string(),
        };
        let first = self
            .weight_schedule
            .first()
            .ok_or_else(|| bad("empty weight schedule"))?;
        if self
            .weight_schedule
            .iter()
            .any(|&(t, w)| !(w > 0.0) || !w.is_finite() || !t.is_finite())
        {
            return Err(bad("weights must be positive and finite"));
        }
        if self.weight_schedule.windows(2).any(|p| p[1].0 <= p[0].0) {
            return Err(bad("weight schedule times must be strictly increasing"));
        }
        if !(self.start_time >= 0.0) || !self.start_time.is_finite() {
            return Err(bad("start time must be non-negative"));
        }
        if first.0 > self.start_time {
            return Err(bad("first weight must be scheduled no later than start"));
        }
        if let Some(stop) = self.stop_time {
            if !(stop > self.start_time) {
                return Err(bad("stop time must follow start time"));
            }
        }
        if let Some(r) = self.initial_rate {
            if !(r > 0.0) || !r.is_finite() {
                return Err(bad("initial rate must be positive"));
            }
        }
        Ok(())
    }

    /// Weight in force at time `t` (the last schedule entry at or before `t`).
    pub fn weight_at(&self, t: f64) -> f64 {
        self.weight_schedule
            .iter()
            .take_while(|(at, _)| *at <= t)
            .last()
            .unwrap_or(&self.weight_schedule[0])
            .1
    }

    pub fn min_weight(&self) -> f64 {
        self.weight_schedule
            .iter()
            .map(|(_, w)| *w)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_active(&self, t: f64) -> bool {
        t >= self.start_time && self.stop_time.is_none_or(|s| t < s)
    }
}

/// Live control state of a Söze flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub flow: FlowId,
    /// Bits per second.
    pub rate: f64,
    pub weight: f64,
    /// Time of the last applied rate update, seconds.
    pub last_update: f64,
    /// Most recently consumed maxQD signal, seconds.
    pub last_signal: f64,
}

impl FlowState {
    pub fn new(flow: FlowId, rate: f64, weight: f64, now: f64) -> Self {
        Self {
            flow,
            rate,
            weight,
            last_update: now,
            last_signal: 0.0,
        }
    }

    /// Rate divided by weight.
    pub fn rate_per_weight(&self) -> f64 {
        self.rate / self.weight
    }
}
