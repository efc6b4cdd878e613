//! The rate control law.
//!
//! A flow maps its rate-per-weight `s = r / w` to a target queueing delay
//! with a log-linear, strictly decreasing function. When the observed
//! delay differs from that target the flow scales its rate
//! multiplicatively by `(T⁻¹(D) / s)^m`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::FlowState;

/// Default delay scaling, 20 µs.
pub const DEFAULT_P: f64 = 20e-6;
/// Default base delay, 3 µs.
pub const DEFAULT_K: f64 = 3e-6;
/// Default smoothing exponent.
pub const DEFAULT_M: f64 = 0.25;
/// Default ratio between the highest and lowest rate-per-weight.
pub const DEFAULT_ALPHA_BETA_RATIO: f64 = 1000.0;
/// Default rate floor, 1 Mbps.
pub const DEFAULT_RATE_FLOOR: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("rate-per-weight must be positive, got {0}")]
    NonPositiveRate(f64),
    #[error("invalid control parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },
}

/// Constants of the control law. Delays in seconds, rates in bits/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlParams {
    /// Delay span between the highest and lowest rate-per-weight.
    pub p: f64,
    /// Target delay at the highest rate-per-weight.
    pub k: f64,
    /// Update exponent.
    pub m: f64,
    /// Highest rate-per-weight.
    pub alpha: f64,
    /// Lowest rate-per-weight.
    pub beta: f64,
    /// Minimum time between two rate updates (Δt).
    pub update_interval: f64,
    pub rate_floor: f64,
    pub rate_cap: f64,
}

impl ControlParams {
    /// Default constants for a network whose fastest flow can reach `alpha`.
    pub fn with_defaults(alpha: f64, update_interval: f64, rate_cap: f64) -> Self {
        Self {
            p: DEFAULT_P,
            k: DEFAULT_K,
            m: DEFAULT_M,
            alpha,
            beta: alpha / DEFAULT_ALPHA_BETA_RATIO,
            update_interval,
            rate_floor: DEFAULT_RATE_FLOOR,
            rate_cap,
        }
    }

    /// Structural checks only. `m` outside `(0, 2)` is accepted so the
    /// fairness boundary can be exercised; see [`check_lemma_conditions`].
    pub fn validate(&self) -> Result<(), ControlError> {
        let bad = |name, reason: &str| {
            Err(ControlError::InvalidParam {
                name,
                reason: reason.to_string(),
            })
        };
        let finite = [
            self.p,
            self.k,
            self.m,
            self.alpha,
            self.beta,
            self.update_interval,
            self.rate_floor,
            self.rate_cap,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return bad("params", "all values must be finite");
        }
        if self.p <= 0.0 {
            return bad("p", "must be positive");
        }
        if self.k < 0.0 {
            return bad("k", "must be non-negative");
        }
        if self.m <= 0.0 {
            return bad("m", "must be positive");
        }
        if !(self.beta > 0.0 && self.alpha > self.beta) {
            return bad("alpha/beta", "need alpha > beta > 0");
        }
        if self.update_interval < 0.0 {
            return bad("update_interval", "must be non-negative");
        }
        if !(self.rate_floor > 0.0 && self.rate_floor < self.rate_cap) {
            return bad("rate_floor/rate_cap", "need 0 < floor < cap");
        }
        Ok(())
    }

    fn log_span(&self) -> f64 {
        self.alpha.ln() - self.beta.ln()
    }
}

/// Target queueing delay for rate-per-weight `s`:
/// `p · (ln α − ln s) / (ln α − ln β) + k`.
pub fn target_delay(s: f64, params: &ControlParams) -> Result<f64, ControlError> {
    if !(s > 0.0) {
        return Err(ControlError::NonPositiveRate(s));
    }
    Ok(params.p * (params.alpha.ln() - s.ln()) / params.log_span() + params.k)
}

fn ln_inverse_target(delay: f64, params: &ControlParams) -> f64 {
    params.alpha.ln() - (delay - params.k) / params.p * params.log_span()
}

/// Rate-per-weight whose target is `delay`: `α · (β/α)^((D − k)/p)`.
/// Extrapolates beyond `[β, α]` for delays outside `[k, k + p]`.
pub fn inverse_target(delay: f64, params: &ControlParams) -> f64 {
    ln_inverse_target(delay, params).exp()
}

/// Multiplicative update ratio `(T⁻¹(D) / s)^m`.
pub fn update_ratio(s: f64, delay: f64, params: &ControlParams) -> Result<f64, ControlError> {
    if !(s > 0.0) {
        return Err(ControlError::NonPositiveRate(s));
    }
    Ok((params.m * (ln_inverse_target(delay, params) - s.ln())).exp())
}

/// One step of the per-flow algorithm. Applies the update only when more
/// than `update_interval` has elapsed since the last one; the new rate is
/// clamped to `[rate_floor, rate_cap]`.
pub fn adjust_rate(state: FlowState, signal: f64, now: f64, params: &ControlParams) -> FlowState {
    if now - state.last_update <= params.update_interval {
        return state;
    }
    let s = state.rate_per_weight();
    // `rate` never drops below the floor, so `s` is positive.
    let ratio = update_ratio(s, signal, params).unwrap_or(1.0);
    let rate = (state.rate * ratio).clamp(params.rate_floor, params.rate_cap);
    FlowState {
        rate,
        last_update: now,
        last_signal: signal,
        ..state
    }
}

/// Which convergence conditions a parameter set satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    /// `0 < m < 2`.
    pub fairness_ok: bool,
    /// `p / Δt > ½ · ln(α/β)`: the queue converges, possibly oscillating.
    pub queue_osc_ok: bool,
    /// `p / Δt > ln(α/β)`: the queue converges without overshoot.
    pub queue_noosc_ok: bool,
    /// Observed `p / Δt` (infinite when `Δt = 0`).
    pub p_over_dt: f64,
    pub osc_threshold: f64,
    pub noosc_threshold: f64,
}

pub fn check_lemma_conditions(params: &ControlParams) -> LemmaReport {
    let span = (params.alpha / params.beta).ln();
    let p_over_dt = if params.update_interval > 0.0 {
        params.p / params.update_interval
    } else {
        f64::INFINITY
    };
    LemmaReport {
        fairness_ok: params.m > 0.0 && params.m < 2.0,
        queue_osc_ok: p_over_dt > 0.5 * span,
        queue_noosc_ok: p_over_dt > span,
        p_over_dt,
        osc_threshold: 0.5 * span,
        noosc_threshold: span,
    }
}
