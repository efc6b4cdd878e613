//! Instance builders shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use soze_core::model::{fat_tree, route_flow, star, NodeId};
use soze_core::{FlowSpec, LinkId, SimConfig, Topology};

pub const BANDWIDTH: f64 = 100e9;

/// Oracle input: routes and weights for `flows` random host pairs on a
/// K-ary fat-tree.
pub struct OracleInstance {
    pub topology: Topology,
    pub routes: Vec<Vec<LinkId>>,
    pub weights: Vec<f64>,
}

pub fn fat_tree_instance(k: usize, flows: usize, seed: u64) -> OracleInstance {
    let topology = fat_tree(k, BANDWIDTH, 0.2e-6).expect("valid fat-tree");
    let hosts: Vec<NodeId> = topology
        .nodes()
        .iter()
        .filter(|n| n.starts_with('h'))
        .map(|n| topology.node_id(n).unwrap())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut routes = Vec::with_capacity(flows);
    let mut weights = Vec::with_capacity(flows);
    for i in 0..flows {
        let a = rng.random_range(0..hosts.len());
        let mut b = rng.random_range(0..hosts.len() - 1);
        if b >= a {
            b += 1;
        }
        routes.push(route_flow(&topology, hosts[a], hosts[b], i as u64, seed).expect("route"));
        weights.push(rng.random_range(0.5..=4.0));
    }
    OracleInstance {
        topology,
        routes,
        weights,
    }
}

/// `n` equal-weight senders into one host of a star, 1 µs RTT.
pub fn incast(n: usize, end_time: f64) -> (Topology, Vec<FlowSpec>, SimConfig) {
    let topology = star(n + 1, BANDWIDTH, 0.25e-6).expect("valid star");
    let sink = topology.node_id(&format!("h{n}")).unwrap();
    let flows = (0..n)
        .map(|i| {
            let src = topology.node_id(&format!("h{i}")).unwrap();
            let route = route_flow(&topology, src, sink, i as u64, 0).expect("route");
            FlowSpec::constant(i, route, 1.0)
        })
        .collect();
    let mut config = SimConfig::new(0.25e-6, end_time);
    config.sample_interval = 1e-6;
    (topology, flows, config)
}
