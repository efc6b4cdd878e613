use serde::{Deserialize, Serialize};

use crate::model::LinkId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    pub link: LinkId,
    /// Queueing delay in seconds; never negative.
    pub queue_delay: f64,
    /// Bits per second.
    pub bandwidth: f64,
}

/// Explicit Euler step of `dD/dt = (R − B) / B`, clamped at an empty queue.
pub fn link_step(link: LinkState, arrival_rate: f64, dt: f64) -> LinkState {
    let d = link.queue_delay + dt * (arrival_rate - link.bandwidth) / link.bandwidth;
    LinkState {
        queue_delay: d.max(0.0),
        ..link
    }
}

/// Largest queueing delay along `route`.
pub fn max_qd(route: &[LinkId], links: &[LinkState]) -> f64 {
    route
        .iter()
        .map(|l| links[l.0].queue_delay)
        .fold(0.0, f64::max)
}
