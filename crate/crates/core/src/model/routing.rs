use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LinkId, ModelError, NodeId, Topology};

/// Hop-count distance from every node to `dst`, following links forward.
fn distances_to(topology: &Topology, dst: NodeId) -> Vec<Option<usize>> {
    let n = topology.nodes().len();
    let mut incoming = vec![Vec::new(); n];
    for l in topology.links() {
        incoming[l.to.0].push(l.from);
    }
    let mut dist = vec![None; n];
    dist[dst.0] = Some(0);
    let mut queue = VecDeque::from([dst]);
    while let Some(v) = queue.pop_front() {
        let d = dist[v.0].unwrap();
        for &u in &incoming[v.0] {
            if dist[u.0].is_none() {
                dist[u.0] = Some(d + 1);
                queue.push_back(u);
            }
        }
    }
    dist
}

/// Picks a shortest (hop-count) path from `src` to `dst`. Among equal-cost
/// next hops the choice is drawn from a generator seeded by
/// `(flow_id, seed)`, so the same inputs always give the same route.
pub fn route_flow(
    topology: &Topology,
    src: NodeId,
    dst: NodeId,
    flow_id: u64,
    seed: u64,
) -> Result<Vec<LinkId>, ModelError> {
    let name = |n: NodeId| topology.node_name(n).to_string();
    if src == dst {
        return Err(ModelError::SameEndpoints(name(src)));
    }
    let dist = distances_to(topology, dst);
    let mut remaining = dist[src.0].ok_or_else(|| ModelError::NoPath {
        src: name(src),
        dst: name(dst),
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ flow_id.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut route = Vec::with_capacity(remaining);
    let mut at = src;
    while remaining > 0 {
        let candidates: Vec<LinkId> = topology
            .out_links(at)
            .iter()
            .copied()
            .filter(|l| dist[topology.link(*l).to.0] == Some(remaining - 1))
            .collect();
        let pick = if candidates.len() == 1 {
            candidates[0]
        } else {
            candidates[rng.random_range(0..candidates.len())]
        };
        route.push(pick);
        at = topology.link(pick).to;
        remaining -= 1;
    }
    Ok(route)
}
