use serde::{Deserialize, Serialize};

use crate::baselines::{AimdConfig, DEFAULT_AIMD_DECREASE, DEFAULT_AIMD_THRESHOLD};
use crate::control::{
    ControlParams, DEFAULT_ALPHA_BETA_RATIO, DEFAULT_K, DEFAULT_M, DEFAULT_P, DEFAULT_RATE_FLOOR,
};
use crate::model::{FlowSpec, Topology};

/// How long a maxQD sample takes to come back to the sender.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalDelayMode {
    /// Exactly one base RTT.
    #[default]
    FixedRtt,
    /// Base RTT plus the forward-path queueing delay at emission time.
    PropagationPlusQueue,
}

/// When a Söze flow is allowed to update its rate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum UpdateMode {
    /// Once per base RTT of the flow's route.
    #[default]
    PerRtt,
    /// Once per packet: `Δt = RTT / CWND = packet_size / rate`.
    PerPacket,
    /// A fixed interval in seconds, independent of the route.
    Fixed { interval: f64 },
}

/// Network-wide control settings; resolved into per-flow
/// [`ControlParams`] when a simulation starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlSettings {
    pub p: f64,
    pub k: f64,
    pub m: f64,
    /// Defaults to the highest link bandwidth over the smallest weight.
    pub alpha: Option<f64>,
    /// Defaults to `alpha / 1000`.
    pub beta: Option<f64>,
    pub update: UpdateMode,
    pub rate_floor: f64,
    /// Defaults to the bandwidth of each flow's first hop.
    pub rate_cap: Option<f64>,
    /// Bits. Used by per-packet updates and by AIMD windows.
    pub packet_size: f64,
    /// Starting rate for flows without their own; defaults to `cap / 10`.
    pub initial_rate: Option<f64>,
}

impl Default for ControlSettings {
    fn default() -> Self {
        Self {
            p: DEFAULT_P,
            k: DEFAULT_K,
            m: DEFAULT_M,
            alpha: None,
            beta: None,
            update: UpdateMode::PerRtt,
            rate_floor: DEFAULT_RATE_FLOOR,
            rate_cap: None,
            packet_size: 8000.0,
            initial_rate: None,
        }
    }
}

impl ControlSettings {
    /// `(alpha, beta)` after applying defaults.
    pub fn alpha_beta(&self, topology: &Topology, flows: &[FlowSpec]) -> (f64, f64) {
        let alpha = self.alpha.unwrap_or_else(|| {
            let min_w = flows
                .iter()
                .map(FlowSpec::min_weight)
                .fold(f64::INFINITY, f64::min);
            let min_w = if min_w.is_finite() { min_w } else { 1.0 };
            topology.max_bandwidth() / min_w
        });
        let beta = self.beta.unwrap_or(alpha / DEFAULT_ALPHA_BETA_RATIO);
        (alpha, beta)
    }

    /// Nominal update interval of a flow with the given base RTT and rate.
    pub fn update_interval(&self, base_rtt: f64, rate: f64) -> f64 {
        match self.update {
            UpdateMode::PerRtt => base_rtt,
            UpdateMode::PerPacket => self.packet_size / rate,
            UpdateMode::Fixed { interval } => interval,
        }
    }

    /// Parameters for one flow. For per-packet updates the interval is
    /// evaluated at the flow's starting rate.
    pub fn params_for(
        &self,
        topology: &Topology,
        flow: &FlowSpec,
        alpha: f64,
        beta: f64,
    ) -> ControlParams {
        let cap = self
            .rate_cap
            .unwrap_or_else(|| topology.link(flow.route[0]).bandwidth);
        let base_rtt = topology.base_rtt(&flow.route);
        let mut params = ControlParams {
            p: self.p,
            k: self.k,
            m: self.m,
            alpha,
            beta,
            update_interval: 0.0,
            rate_floor: self.rate_floor,
            rate_cap: cap,
        };
        params.update_interval = self.update_interval(base_rtt, initial_rate(flow, self, &params));
        params
    }
}

/// Starting rate of a flow: its own override, else the scenario-wide
/// default, else a tenth of the rate cap.
pub fn initial_rate(flow: &FlowSpec, settings: &ControlSettings, params: &ControlParams) -> f64 {
    flow.initial_rate
        .or(settings.initial_rate)
        .unwrap_or(params.rate_cap / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AimdSettings {
    pub threshold: f64,
    pub md: f64,
}

impl Default for AimdSettings {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_AIMD_THRESHOLD,
            md: DEFAULT_AIMD_DECREASE,
        }
    }
}

impl AimdSettings {
    pub fn config(&self, packet_size: f64, base_rtt: f64) -> AimdConfig {
        AimdConfig {
            threshold: self.threshold,
            md: self.md,
            packet_size,
            base_rtt,
            update_interval: base_rtt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Integration step, seconds.
    pub dt: f64,
    pub end_time: f64,
    pub signal_delay: SignalDelayMode,
    pub control: ControlSettings,
    pub aimd: AimdSettings,
    /// Recorded with the run; the engine itself draws no random numbers.
    pub seed: u64,
    /// Trace sampling period; a whole multiple of `dt`.
    pub sample_interval: f64,
}

impl SimConfig {
    pub fn new(dt: f64, end_time: f64) -> Self {
        Self {
            dt,
            end_time,
            signal_delay: SignalDelayMode::FixedRtt,
            control: ControlSettings::default(),
            aimd: AimdSettings::default(),
            seed: 0,
            sample_interval: dt,
        }
    }
}
