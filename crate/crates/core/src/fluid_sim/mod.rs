//! Discrete-time fluid model of queues and rate controllers.

mod config;
mod engine;
mod link;
mod signal;
mod trace;

pub use config::{
    initial_rate, AimdSettings, ControlSettings, SignalDelayMode, SimConfig, UpdateMode,
};
pub use engine::run;
pub use link::{link_step, max_qd, LinkState};
pub use signal::{lag_steps, FeedbackChannel};
pub use trace::{EventKind, EventMarker, Trace};

use crate::model::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}
