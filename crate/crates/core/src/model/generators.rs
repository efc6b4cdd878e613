//! Topology generators for the standard scenarios.

use super::{ModelError, RawTopology, Topology};

/// K-ary fat-tree: K pods of K/2 edge and K/2 aggregation switches,
/// (K/2)² core switches and K³/4 hosts. Every cable becomes two directed
/// links with the given bandwidth and propagation delay.
///
/// Hosts are named `h<i>` in pod-major order, switches `e<pod>_<i>`,
/// `a<pod>_<i>` and `c<i>`.
pub fn fat_tree(k: usize, bandwidth_bps: f64, delay_s: f64) -> Result<Topology, ModelError> {
    Topology::build(&raw_fat_tree(k, bandwidth_bps, delay_s)?)
}

pub fn raw_fat_tree(k: usize, bandwidth_bps: f64, delay_s: f64) -> Result<RawTopology, ModelError> {
    if k < 2 || !k.is_multiple_of(2) {
        return Err(ModelError::InvalidFatTreeArity(k));
    }
    let half = k / 2;
    let mut raw = RawTopology::default();

    for i in 0..k * k * k / 4 {
        raw.node(format!("h{i}"));
    }
    for pod in 0..k {
        for i in 0..half {
            raw.node(format!("e{pod}_{i}"));
        }
        for i in 0..half {
            raw.node(format!("a{pod}_{i}"));
        }
    }
    for i in 0..half * half {
        raw.node(format!("c{i}"));
    }

    for pod in 0..k {
        for e in 0..half {
            let edge = format!("e{pod}_{e}");
            for h in 0..half {
                let host = format!("h{}", (pod * half + e) * half + h);
                raw.cable(&host, &edge, bandwidth_bps, delay_s);
            }
            for a in 0..half {
                raw.cable(&edge, &format!("a{pod}_{a}"), bandwidth_bps, delay_s);
            }
        }
        for a in 0..half {
            let agg = format!("a{pod}_{a}");
            for c in 0..half {
                raw.cable(&agg, &format!("c{}", a * half + c), bandwidth_bps, delay_s);
            }
        }
    }
    Ok(raw)
}

/// `n` hosts `h0..h<n-1>` attached to a single switch `s0`.
pub fn star(n: usize, bandwidth_bps: f64, delay_s: f64) -> Result<Topology, ModelError> {
    Topology::build(&raw_star(n, bandwidth_bps, delay_s)?)
}

pub fn raw_star(n: usize, bandwidth_bps: f64, delay_s: f64) -> Result<RawTopology, ModelError> {
    if n < 2 {
        return Err(ModelError::InvalidStarSize(n));
    }
    let mut raw = RawTopology::default();
    raw.node("s0");
    for i in 0..n {
        let host = format!("h{i}");
        raw.node(host.clone());
        raw.cable(&host, "s0", bandwidth_bps, delay_s);
    }
    Ok(raw)
}
