//! Network and flow representation.
//!
//! Links are directed: queueing happens per egress direction, so a cable
//! between two nodes is modeled as two independent links. Host NICs are
//! ordinary links, which lets incast bottlenecks form at the receiver edge.

mod flow;
pub mod generators;
mod routing;
mod topology;

use thiserror::Error;

pub use flow::{ControllerKind, FlowId, FlowSpec, FlowState};
pub use generators::{fat_tree, star};
pub use routing::route_flow;
pub use topology::{Link, LinkId, NodeId, RawLink, RawTopology, Topology};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("duplicate link id `{0}`")]
    DuplicateLink(String),
    #[error("link `{link}` references unknown node `{node}`")]
    DanglingEndpoint { link: String, node: String },
    #[error("link `{link}` has non-positive bandwidth {value}")]
    InvalidBandwidth { link: String, value: f64 },
    #[error("link `{link}` has invalid propagation delay {value}")]
    InvalidDelay { link: String, value: f64 },
    #[error("unknown link `{0}`")]
    UnknownLink(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("route is empty")]
    EmptyRoute,
    #[error("route is not connected between `{from}` and `{to}`")]
    DisconnectedRoute { from: String, to: String },
    #[error("route does not start at the source or end at the destination")]
    RouteEndpointMismatch,
    #[error("source and destination are both `{0}`")]
    SameEndpoints(String),
    #[error("no path from `{src}` to `{dst}`")]
    NoPath { src: String, dst: String },
    #[error("fat-tree arity must be even and at least 2, got {0}")]
    InvalidFatTreeArity(usize),
    #[error("star needs at least 2 hosts, got {0}")]
    InvalidStarSize(usize),
    #[error("flow `{flow}`: {reason}")]
    InvalidFlow { flow: String, reason: String },
}
