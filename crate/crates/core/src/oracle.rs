//! Weighted max-min fair allocations by progressive filling.

use crate::model::{LinkId, Topology};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum OracleError {
    #[error("routes and weights differ in length ({routes} vs {weights})")]
    LengthMismatch { routes: usize, weights: usize },
    #[error("flow {0} has an empty route")]
    EmptyRoute(usize),
    #[error("flow {flow} has non-positive weight {weight}")]
    BadWeight { flow: usize, weight: f64 },
    #[error("flow {flow} uses unknown link {link}")]
    UnknownLink { flow: usize, link: LinkId },
    #[error("flow {flow}: no saturated link on its route where its rate per weight is maximal")]
    NoBottleneck { flow: usize },
    #[error("flow {flow} violates the bottleneck property on link {link}")]
    BottleneckViolation { flow: usize, link: LinkId },
    #[error("empty flow set")]
    EmptyFlowSet,
    #[error("flow sets differ in size ({left} vs {right})")]
    SizeMismatch { left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationResult {
    /// Bits per second, per flow.
    pub rates: Vec<f64>,
    /// Link that froze each flow; the lowest id among ties.
    pub bottleneck: Vec<LinkId>,
    /// Weighted fair share (rate per unit weight) of each saturated link.
    pub wfs: Vec<Option<f64>>,
}

const TIE: f64 = 1e-12;

fn check_inputs(
    topology: &Topology,
    routes: &[Vec<LinkId>],
    weights: &[f64],
) -> Result<(), OracleError> {
    if routes.len() != weights.len() {
        return Err(OracleError::LengthMismatch {
            routes: routes.len(),
            weights: weights.len(),
        });
    }
    let n_links = topology.links().len();
    for (f, (route, &w)) in routes.iter().zip(weights).enumerate() {
        if route.is_empty() {
            return Err(OracleError::EmptyRoute(f));
        }
        if !(w > 0.0 && w.is_finite()) {
            return Err(OracleError::BadWeight { flow: f, weight: w });
        }
        if let Some(&link) = route.iter().find(|l| l.0 >= n_links) {
            return Err(OracleError::UnknownLink { flow: f, link });
        }
    }
    Ok(())
}

/// Raises every unfrozen flow's rate-per-weight together until some link
/// fills, freezes the flows crossing it, and repeats.
pub fn water_fill(
    topology: &Topology,
    routes: &[Vec<LinkId>],
    weights: &[f64],
) -> Result<AllocationResult, OracleError> {
    check_inputs(topology, routes, weights)?;
    let n_links = topology.links().len();
    let mut users: Vec<Vec<usize>> = vec![Vec::new(); n_links];
    for (f, route) in routes.iter().enumerate() {
        for l in route {
            if !users[l.0].contains(&f) {
                users[l.0].push(f);
            }
        }
    }

    let mut rates = vec![0.0; routes.len()];
    let mut bottleneck = vec![LinkId(usize::MAX); routes.len()];
    let mut frozen = vec![false; routes.len()];
    let mut wfs = vec![None; n_links];
    let mut residual: Vec<f64> = topology.links().iter().map(|l| l.bandwidth).collect();
    let mut remaining = routes.len();

    while remaining > 0 {
        let level = |l: usize| -> Option<f64> {
            let w: f64 = users[l].iter().filter(|&&f| !frozen[f]).map(|&f| weights[f]).sum();
            (w > 0.0).then(|| residual[l].max(0.0) / w)
        };
        let levels: Vec<Option<f64>> = (0..n_links).map(level).collect();
        let s = levels
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let saturated: Vec<usize> = (0..n_links)
            .filter(|&l| levels[l].is_some_and(|x| x <= s * (1.0 + TIE)))
            .collect();

        let mut newly = Vec::new();
        for &l in &saturated {
            wfs[l] = Some(s);
            for &f in &users[l] {
                if !frozen[f] && !newly.contains(&f) {
                    newly.push(f);
                }
            }
        }
        for &f in &newly {
            rates[f] = weights[f] * s;
            bottleneck[f] = routes[f]
                .iter()
                .filter(|l| saturated.contains(&l.0))
                .min()
                .copied()
                .expect("frozen flow crosses a saturated link");
        }
        for &f in &newly {
            frozen[f] = true;
            remaining -= 1;
            let mut seen: Vec<LinkId> = Vec::new();
            for l in &routes[f] {
                if !seen.contains(l) {
                    residual[l.0] -= rates[f];
                    seen.push(*l);
                }
            }
        }
    }

    Ok(AllocationResult {
        rates,
        bottleneck,
        wfs,
    })
}

fn link_loads(n_links: usize, routes: &[Vec<LinkId>], rates: &[f64]) -> Vec<f64> {
    let mut load = vec![0.0; n_links];
    for (route, r) in routes.iter().zip(rates) {
        let mut seen: Vec<LinkId> = Vec::new();
        for l in route {
            if !seen.contains(l) {
                load[l.0] += r;
                seen.push(*l);
            }
        }
    }
    load
}

/// A bottleneck of `flow` under arbitrary `rates`: a link on its route that
/// is full (within relative `tol`) and where the flow's rate-per-weight is
/// at least that of every other flow crossing it. The lowest id wins ties.
pub fn find_bottleneck(
    topology: &Topology,
    routes: &[Vec<LinkId>],
    weights: &[f64],
    rates: &[f64],
    flow: usize,
    tol: f64,
) -> Result<LinkId, OracleError> {
    check_inputs(topology, routes, weights)?;
    let load = link_loads(topology.links().len(), routes, rates);
    let own = rates[flow] / weights[flow];
    let mut candidates: Vec<LinkId> = routes[flow]
        .iter()
        .copied()
        .filter(|l| {
            let cap = topology.link(*l).bandwidth;
            if (load[l.0] - cap).abs() > tol * cap {
                return false;
            }
            routes
                .iter()
                .enumerate()
                .filter(|(_, r)| r.contains(l))
                .all(|(g, _)| rates[g] / weights[g] <= own * (1.0 + tol))
        })
        .collect();
    candidates.sort();
    candidates
        .first()
        .copied()
        .ok_or(OracleError::NoBottleneck { flow })
}

/// Whether `rates` is a weighted max-min fair allocation, checked through
/// the bottleneck characterisation: every link within capacity and every
/// flow with a bottleneck.
pub fn is_weighted_max_min(
    topology: &Topology,
    routes: &[Vec<LinkId>],
    weights: &[f64],
    rates: &[f64],
    tol: f64,
) -> Result<bool, OracleError> {
    check_inputs(topology, routes, weights)?;
    let load = link_loads(topology.links().len(), routes, rates);
    let feasible = topology
        .links()
        .iter()
        .all(|l| load[l.id.0] <= l.bandwidth * (1.0 + tol));
    if !feasible {
        return Ok(false);
    }
    Ok((0..routes.len()).all(|f| find_bottleneck(topology, routes, weights, rates, f, tol).is_ok()))
}

/// The link where `flow` froze in `alloc`, after checking the bottleneck
/// property: that link is saturated at the flow's rate-per-weight, which is
/// maximal there, and every
/// other saturated link on its route (unless tied at the same share) carries
/// some flow with a strictly larger rate-per-weight.
pub fn bottleneck_of(
    topology: &Topology,
    routes: &[Vec<LinkId>],
    weights: &[f64],
    alloc: &AllocationResult,
    flow: usize,
) -> Result<LinkId, OracleError> {
    check_inputs(topology, routes, weights)?;
    let share = |g: usize| alloc.rates[g] / weights[g];
    let own = share(flow);
    let b = alloc.bottleneck[flow];
    let on = |l: LinkId| (0..routes.len()).filter(move |&g| routes[g].contains(&l));
    let saturated = alloc.wfs.get(b.0).copied().flatten();
    if saturated.is_none_or(|level| (level - own).abs() > 1e-9 * own)
        || on(b).any(|g| share(g) > own * (1.0 + 1e-9))
    {
        return Err(OracleError::BottleneckViolation { flow, link: b });
    }
    for &l in &routes[flow] {
        let Some(level) = alloc.wfs[l.0] else { continue };
        if l == b || (level - own).abs() <= 1e-9 * own {
            continue;
        }
        if !on(l).any(|g| g != flow && share(g) > own * (1.0 + 1e-9)) {
            return Err(OracleError::BottleneckViolation { flow, link: l });
        }
    }
    Ok(b)
}

/// Single-link goal check: the link is full (`|Σr − B| ≤ eps·B`) and all
/// flows have the same rate-per-weight (spread at most `eps` times the mean).
/// The two together hold exactly for the weighted split `r_i = w_i / W · B`.
pub fn verify_goal_equivalence(
    rates: &[f64],
    weights: &[f64],
    bandwidth: f64,
    eps: f64,
) -> Result<bool, OracleError> {
    if rates.is_empty() {
        return Err(OracleError::EmptyFlowSet);
    }
    if rates.len() != weights.len() {
        return Err(OracleError::SizeMismatch {
            left: rates.len(),
            right: weights.len(),
        });
    }
    let total: f64 = rates.iter().sum();
    let shares: Vec<f64> = rates.iter().zip(weights).map(|(r, w)| r / w).collect();
    let hi = shares.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = shares.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = shares.iter().sum::<f64>() / shares.len() as f64;
    Ok((total - bandwidth).abs() <= eps * bandwidth && hi - lo <= eps * mean)
}

/// The weighted split of one link: `r_i = w_i / Σw · B`.
pub fn single_link_goal(weights: &[f64], bandwidth: f64) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total * bandwidth).collect()
}

/// Largest relative deviation `|r − r*| / r*` across flows.
pub fn fairness_error(rates: &[f64], oracle: &[f64]) -> Result<f64, OracleError> {
    if rates.len() != oracle.len() {
        return Err(OracleError::SizeMismatch {
            left: rates.len(),
            right: oracle.len(),
        });
    }
    Ok(rates
        .iter()
        .zip(oracle)
        .map(|(r, o)| (r - o).abs() / o)
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{star, RawTopology};

    const G: f64 = 1e9;

    fn route(t: &Topology, names: &[&str]) -> Vec<LinkId> {
        names.iter().map(|n| t.link_id(n).unwrap()).collect()
    }

    /// Two switches joined by a cable; h1..h4 on s1, h5 and h6 on s2.
    fn dumbbell() -> (Topology, Vec<Vec<LinkId>>) {
        let mut raw = RawTopology::default();
        for n in ["s1", "s2", "h1", "h2", "h3", "h4", "h5", "h6"] {
            raw.node(n);
        }
        for h in ["h1", "h2", "h3", "h4"] {
            raw.cable(h, "s1", 100.0 * G, 0.0);
        }
        raw.cable("h5", "s2", 100.0 * G, 0.0);
        raw.cable("h6", "s2", 100.0 * G, 0.0);
        raw.cable("s1", "s2", 100.0 * G, 0.0);
        let t = Topology::build(&raw).unwrap();
        let mut routes = vec![route(&t, &["h1-s1", "s1-s2", "s2-h5"])];
        for h in ["h2-s1", "h3-s1", "h4-s1"] {
            routes.push(route(&t, &[h, "s1-s2", "s2-h6"]));
        }
        for _ in 0..2 {
            routes.push(route(&t, &["h5-s2", "s2-h6"]));
        }
        (t, routes)
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * b.abs().max(1.0)
    }

    #[test]
    fn single_link_weighted_split() {
        let t = star(5, 100.0 * G, 0.0).unwrap();
        let routes: Vec<_> = (0..4)
            .map(|i| route(&t, &[&format!("h{i}-s0"), "s0-h4"]))
            .collect();
        let res = water_fill(&t, &routes, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        for (i, r) in res.rates.iter().enumerate() {
            assert!(close(*r, 10.0 * G * (i + 1) as f64));
        }
        let shared = t.link_id("s0-h4").unwrap();
        assert!(res.bottleneck.iter().all(|b| *b == shared));
        assert!(close(res.wfs[shared.0].unwrap(), 10.0 * G));
    }

    #[test]
    fn dumbbell_equal_weights() {
        let (t, routes) = dumbbell();
        let res = water_fill(&t, &routes, &[1.0; 6]).unwrap();
        let want = [40.0, 20.0, 20.0, 20.0, 20.0, 20.0];
        for (r, w) in res.rates.iter().zip(want) {
            assert!(close(*r, w * G), "{:?}", res.rates);
        }
        let s2h6 = t.link_id("s2-h6").unwrap();
        assert_eq!(res.bottleneck[1], s2h6);
        assert_eq!(res.bottleneck[0], t.link_id("s1-s2").unwrap());
    }

    #[test]
    fn dumbbell_bottleneck_moves_with_weight() {
        let (t, routes) = dumbbell();
        let s1s2 = t.link_id("s1-s2").unwrap();
        // Weight 3: the s1-s2 cable binds first.
        let res = water_fill(&t, &routes, &[3.0, 1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(close(res.rates[0], 50.0 * G));
        assert!(close(res.rates[1], 50.0 / 3.0 * G));
        assert!(close(res.rates[4], 25.0 * G));
        assert_eq!(res.bottleneck[0], s1s2);
        assert_eq!(res.bottleneck[1], s1s2);
        assert_eq!(res.bottleneck[4], t.link_id("s2-h6").unwrap());

        let res = water_fill(&t, &routes, &[5.0, 1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(close(res.rates[0], 62.5 * G));
        assert!(close(res.rates[2], 12.5 * G));
        assert!(close(res.rates[5], 31.25 * G));
    }

    #[test]
    fn allocation_is_max_min_and_bottlenecks_agree() {
        let (t, routes) = dumbbell();
        for w1 in [1.0, 1.5, 2.5, 3.0, 5.0] {
            let w = [w1, 1.0, 1.0, 1.0, 1.0, 1.0];
            let res = water_fill(&t, &routes, &w).unwrap();
            assert!(is_weighted_max_min(&t, &routes, &w, &res.rates, 1e-9).unwrap());
            for f in 0..routes.len() {
                let b = bottleneck_of(&t, &routes, &w, &res, f).unwrap();
                assert_eq!(find_bottleneck(&t, &routes, &w, &res.rates, f, 1e-9).unwrap(), b);
                let share = res.wfs[b.0].unwrap();
                assert!(close(res.rates[f] / w[f], share));
            }
        }
    }

    #[test]
    fn perturbed_allocation_is_not_fair() {
        let (t, routes) = dumbbell();
        let w = [1.0; 6];
        let mut rates = water_fill(&t, &routes, &w).unwrap().rates;
        rates[1] *= 0.9;
        rates[2] *= 1.1;
        assert!(!is_weighted_max_min(&t, &routes, &w, &rates, 1e-9).unwrap());
        assert!(find_bottleneck(&t, &routes, &w, &rates, 1, 1e-9).is_err());
    }

    #[test]
    fn bottleneck_follows_weight_of_flow_one() {
        let (t, routes) = dumbbell();
        let s1s2 = t.link_id("s1-s2").unwrap();
        let s2h6 = t.link_id("s2-h6").unwrap();
        let w = [1.0; 6];
        let res = water_fill(&t, &routes, &w).unwrap();
        for f in 1..4 {
            assert_eq!(bottleneck_of(&t, &routes, &w, &res, f).unwrap(), s2h6);
        }
        let w = [5.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        let res = water_fill(&t, &routes, &w).unwrap();
        for f in 1..4 {
            assert_eq!(bottleneck_of(&t, &routes, &w, &res, f).unwrap(), s1s2);
        }
        // A tampered allocation breaks the property.
        let mut bad = res.clone();
        bad.bottleneck[5] = t.link_id("h5-s2").unwrap();
        assert!(bottleneck_of(&t, &routes, &w, &bad, 5).is_err());
    }

    #[test]
    fn goal_equivalence_single_link() {
        let w = [1.0, 2.0, 5.0];
        let goal = single_link_goal(&w, 100.0 * G);
        assert!(verify_goal_equivalence(&goal, &w, 100.0 * G, 1e-9).unwrap());
        let equal = [100.0 * G / 3.0; 3];
        assert!(!verify_goal_equivalence(&equal, &w, 100.0 * G, 1e-9).unwrap());
        let under: Vec<f64> = goal.iter().map(|r| r * 0.9).collect();
        assert!(!verify_goal_equivalence(&under, &w, 100.0 * G, 1e-9).unwrap());
        assert_eq!(
            verify_goal_equivalence(&[], &[], G, 1e-9),
            Err(OracleError::EmptyFlowSet)
        );
    }

    #[test]
    fn single_link_split_is_three_to_one() {
        let t = star(3, 100.0 * G, 0.0).unwrap();
        let routes: Vec<_> = (0..2)
            .map(|i| route(&t, &[&format!("h{i}-s0"), "s0-h2"]))
            .collect();
        let res = water_fill(&t, &routes, &[3.0, 1.0]).unwrap();
        assert!(close(res.rates[0], 75.0 * G));
        assert!(close(res.rates[1], 25.0 * G));
        assert_eq!(
            bottleneck_of(&t, &routes, &[3.0, 1.0], &res, 0).unwrap(),
            t.link_id("s0-h2").unwrap()
        );
    }

    #[test]
    fn rejects_bad_inputs() {
        let t = star(2, G, 0.0).unwrap();
        let r = vec![route(&t, &["h0-s0", "s0-h1"])];
        assert_eq!(
            water_fill(&t, &r, &[0.0]),
            Err(OracleError::BadWeight { flow: 0, weight: 0.0 })
        );
        assert_eq!(water_fill(&t, &[vec![]], &[1.0]), Err(OracleError::EmptyRoute(0)));
        assert!(matches!(
            water_fill(&t, &r, &[1.0, 2.0]),
            Err(OracleError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn fairness_error_is_relative_max() {
        assert_eq!(fairness_error(&[11.0, 20.0], &[10.0, 20.0]), Ok(0.1));
        assert_eq!(fairness_error(&[5.0, 20.4], &[5.0, 20.0]).unwrap(), 0.4 / 20.0 + (20.4 - 20.0 - 0.4) / 20.0);
        assert_eq!(fairness_error(&[], &[]), Ok(0.0));
        assert!(fairness_error(&[1.0], &[]).is_err());
    }
}
