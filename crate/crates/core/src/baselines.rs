//! Delay-threshold AIMD, the weight-unaware comparison controller.
//!
//! Below the delay threshold the window grows by one packet per update;
//! at or above it the window shrinks by a fixed fraction. Updates are
//! gated once per base RTT and the rate is derived from the window.

use serde::{Deserialize, Serialize};

/// Default queueing-delay threshold, 20 µs.
pub const DEFAULT_AIMD_THRESHOLD: f64 = 20e-6;
/// Default multiplicative decrease, 20 %.
pub const DEFAULT_AIMD_DECREASE: f64 = 0.20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AimdConfig {
    /// Seconds.
    pub threshold: f64,
    /// Fraction removed on each decrease.
    pub md: f64,
    /// Bits.
    pub packet_size: f64,
    /// Seconds.
    pub base_rtt: f64,
    /// Seconds between updates; normally the base RTT.
    pub update_interval: f64,
}

impl AimdConfig {
    pub fn new(packet_size: f64, base_rtt: f64) -> Self {
        Self {
            threshold: DEFAULT_AIMD_THRESHOLD,
            md: DEFAULT_AIMD_DECREASE,
            packet_size,
            base_rtt,
            update_interval: base_rtt,
        }
    }

    pub fn rate_of(&self, cwnd: f64) -> f64 {
        cwnd * self.packet_size / self.base_rtt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AimdState {
    /// Window in packets; never below one.
    pub cwnd: f64,
    /// Bits per second.
    pub rate: f64,
    pub last_update: f64,
}

impl AimdState {
    /// Starts with the window that sustains `rate` over one base RTT.
    pub fn from_rate(rate: f64, now: f64, config: &AimdConfig) -> Self {
        let cwnd = (rate * config.base_rtt / config.packet_size).max(1.0);
        Self {
            cwnd,
            rate: config.rate_of(cwnd),
            last_update: now,
        }
    }
}

pub fn aimd_adjust(state: AimdState, signal: f64, now: f64, config: &AimdConfig) -> AimdState {
    if now - state.last_update <= config.update_interval {
        return state;
    }
    let cwnd = if signal < config.threshold {
        state.cwnd + 1.0
    } else {
        (state.cwnd * (1.0 - config.md)).max(1.0)
    };
    AimdState {
        cwnd,
        rate: config.rate_of(cwnd),
        last_update: now,
    }
}
