use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Index of a node inside a [`Topology`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

/// Index of a directed link inside a [`Topology`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "l{}", self.0)
    }
}

/// A directed link. A physical cable is two of these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    pub name: String,
    pub from: NodeId,
    pub to: NodeId,
    /// Bits per second.
    pub bandwidth: f64,
    /// Seconds.
    pub propagation_delay: f64,
}

/// Unvalidated link description, as read from a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawLink {
    pub id: String,
    pub from: String,
    pub to: String,
    pub bandwidth_bps: f64,
    #[serde(default)]
    pub delay_s: f64,
}

/// Unvalidated topology description.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTopology {
    pub nodes: Vec<String>,
    pub links: Vec<RawLink>,
}

impl RawTopology {
    pub fn node(&mut self, name: impl Into<String>) {
        self.nodes.push(name.into());
    }

    /// Adds both directions of a cable, named `a-b` and `b-a`.
    pub fn cable(&mut self, a: &str, b: &str, bandwidth_bps: f64, delay_s: f64) {
        for (from, to) in [(a, b), (b, a)] {
            self.links.push(RawLink {
                id: format!("{from}-{to}"),
                from: from.to_string(),
                to: to.to_string(),
                bandwidth_bps,
                delay_s,
            });
        }
    }
}

/// Validated, immutable network graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    nodes: Vec<String>,
    links: Vec<Link>,
    node_index: HashMap<String, NodeId>,
    link_index: HashMap<String, LinkId>,
    out_links: Vec<Vec<LinkId>>,
}

impl Topology {
    /// Validates a raw description. Fails on duplicate names, dangling
    /// endpoints, non-positive bandwidth or negative delay.
    pub fn build(raw: &RawTopology) -> Result<Self, ModelError> {
        let mut node_index = HashMap::with_capacity(raw.nodes.len());
        for (i, name) in raw.nodes.iter().enumerate() {
            if node_index.insert(name.clone(), NodeId(i)).is_some() {
                return Err(ModelError::DuplicateNode(name.clone()));
            }
        }

        let mut links = Vec::with_capacity(raw.links.len());
        let mut link_index = HashMap::with_capacity(raw.links.len());
        let mut out_links = vec![Vec::new(); raw.nodes.len()];
        for (i, l) in raw.links.iter().enumerate() {
            let id = LinkId(i);
            if link_index.insert(l.id.clone(), id).is_some() {
                return Err(ModelError::DuplicateLink(l.id.clone()));
            }
            let lookup = |n: &str| {
                node_index.get(n).copied().ok_or_else(|| ModelError::DanglingEndpoint {
                    link: l.id.clone(),
                    node: n.to_string(),
                })
            };
            let from = lookup(&l.from)?;
            let to = lookup(&l.to)?;
            if !(l.bandwidth_bps > 0.0) || !l.bandwidth_bps.is_finite() {
                return Err(ModelError::InvalidBandwidth {
                    link: l.id.clone(),
                    value: l.bandwidth_bps,
                });
            }
            if !(l.delay_s >= 0.0) || !l.delay_s.is_finite() {
                return Err(ModelError::InvalidDelay {
                    link: l.id.clone(),
                    value: l.delay_s,
                });
            }
            out_links[from.0].push(id);
            links.push(Link {
                id,
                name: l.id.clone(),
                from,
                to,
                bandwidth: l.bandwidth_bps,
                propagation_delay: l.delay_s,
            });
        }

        Ok(Self {
            nodes: raw.nodes.clone(),
            links,
            node_index,
            link_index,
            out_links,
        })
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.0]
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.nodes[id.0]
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.node_index.get(name).copied()
    }

    pub fn link_id(&self, name: &str) -> Option<LinkId> {
        self.link_index.get(name).copied()
    }

    /// Outgoing links of `node`, in link-id order.
    pub fn out_links(&self, node: NodeId) -> &[LinkId] {
        &self.out_links[node.0]
    }

    pub fn max_bandwidth(&self) -> f64 {
        self.links.iter().map(|l| l.bandwidth).fold(0.0, f64::max)
    }

    /// Checks that `route` is a connected directed path. When `src`/`dst`
    /// are given the path must start and end there.
    pub fn validate_route(
        &self,
        route: &[LinkId],
        src: Option<NodeId>,
        dst: Option<NodeId>,
    ) -> Result<(), ModelError> {
        let first = route.first().ok_or(ModelError::EmptyRoute)?;
        for l in route {
            if l.0 >= self.links.len() {
                return Err(ModelError::UnknownLink(l.to_string()));
            }
        }
        for pair in route.windows(2) {
            let (a, b) = (self.link(pair[0]), self.link(pair[1]));
            if a.to != b.from {
                return Err(ModelError::DisconnectedRoute {
                    from: a.name.clone(),
                    to: b.name.clone(),
                });
            }
        }
        if let Some(src) = src {
            if self.link(*first).from != src {
                return Err(ModelError::RouteEndpointMismatch);
            }
        }
        if let Some(dst) = dst {
            if self.link(*route.last().unwrap()).to != dst {
                return Err(ModelError::RouteEndpointMismatch);
            }
        }
        Ok(())
    }

    /// Round-trip propagation time of a route: twice the one-way sum.
    pub fn base_rtt(&self, route: &[LinkId]) -> f64 {
        2.0 * route
            .iter()
            .map(|l| self.link(*l).propagation_delay)
            .sum::<f64>()
    }
}
