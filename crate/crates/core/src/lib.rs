//! Fluid-model simulation and verification tools for Söze, a weighted
//! bandwidth allocation scheme driven by a single end-to-end delay signal.
//!
//! * [`model`]: topologies, routes and flows.
//! * [`control`]: the per-flow target-delay controller.
//! * [`fluid_sim`]: queue and feedback dynamics over time.
//! * [`oracle`]: exact weighted max-min allocations.
//! * [`metrics`]: convergence, utilization and delay measurements.
//! * [`baselines`]: a delay-threshold AIMD controller for comparison.

pub mod baselines;
pub mod control;
pub mod fluid_sim;
pub mod metrics;
pub mod model;
pub mod oracle;

pub use control::{adjust_rate, target_delay, ControlParams};
pub use fluid_sim::{run, SimConfig, SimError, Trace};
pub use model::{FlowId, FlowSpec, FlowState, LinkId, Topology};
pub use oracle::{water_fill, AllocationResult};
