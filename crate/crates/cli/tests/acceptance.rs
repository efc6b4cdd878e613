//! Acceptance suite. Runs every criterion at its stated tolerance, prints
//! one PASS/FAIL line each, and exits non-zero if any fails.
//!
//! `cargo test -p soze-cli --test acceptance` (add `--release` for speed).

use std::cell::RefCell;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use soze_cli::commands::{cmd_sweep, execute, RunOutput};
use soze_cli::output::write_trace_csv;
use soze_cli::scenario::{apply_override, decode, parse_value, read_source, resolve, Instance};
use soze_core::control::ControlParams;
use soze_core::metrics::{delivered_utilization, rate_oscillation, target_delay_error, utilization};
use soze_core::oracle::{single_link_goal, verify_goal_equivalence};
use soze_core::{water_fill, Trace};

const G: f64 = 1e9;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

thread_local! {
    /// (label, identical) for every simulation repeated for determinism.
    static REPEATS: RefCell<Vec<(String, bool)>> = const { RefCell::new(Vec::new()) };
}

fn instance(source: &str, overrides: &[&str]) -> Instance {
    let text = read_source(source).unwrap_or_else(|_| source.to_string());
    let mut v = parse_value(&text).unwrap();
    for o in overrides {
        apply_override(&mut v, o).unwrap();
    }
    resolve(&decode(v).unwrap()).unwrap()
}

fn csv_bytes(inst: &Instance, trace: &Trace) -> Vec<u8> {
    let ids: Vec<usize> = inst.flows.iter().map(|f| f.id.0).collect();
    let mut buf = Vec::new();
    write_trace_csv(trace, &ids, &mut buf).unwrap();
    buf
}

/// Runs twice, records whether the trace files match byte for byte, and
/// returns the first run with its wall time.
fn run(label: &str, inst: &Instance) -> (RunOutput, Duration) {
    let t0 = Instant::now();
    let first = execute(inst).unwrap();
    let elapsed = t0.elapsed();
    let second = execute(inst).unwrap();
    let same = csv_bytes(inst, &first.trace) == csv_bytes(inst, &second.trace);
    REPEATS.with(|r| r.borrow_mut().push((label.to_string(), same)));
    (first, elapsed)
}

fn mean_rate(trace: &Trace, flow: usize, start: f64, end: f64) -> f64 {
    let (lo, hi) = (trace.index_at(start), trace.index_at(end));
    let xs = &trace.rates[flow][lo..hi];
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn mean_queue(trace: &Trace, link: usize, start: f64, end: f64) -> f64 {
    let (lo, hi) = (trace.index_at(start), trace.index_at(end));
    let xs = &trace.queue_delays[link][lo..hi];
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn rel(x: f64, target: f64) -> f64 {
    (x - target).abs() / target
}

const TWO_FLOW: &str = r#"
name = "weighted_pair"
[topology]
kind = "star"
n = 3
bandwidth_bps = 100e9
delay_s = 0.25e-6
[[flows]]
src = "h0"
dst = "h2"
weight = 3.0
[[flows]]
src = "h1"
dst = "h2"
weight = 1.0
[sim]
dt_s = 0.25e-6
end_s = 500e-6
"#;

fn weighted_pair() -> (Instance, RunOutput, Duration) {
    let inst = instance(TWO_FLOW, &[]);
    let (out, wall) = run("weighted pair", &inst);
    (inst, out, wall)
}

fn criterion_1() -> Outcome {
    let (_, out, wall) = weighted_pair();
    let t = &out.trace;
    let (a, b) = (0.8 * t.end_time, t.end_time);
    let r0 = mean_rate(t, 0, a, b);
    let r1 = mean_rate(t, 1, a, b);
    let err = rel(r0, 75.0 * G).max(rel(r1, 25.0 * G));
    outcome(
        err <= 0.02 && wall < Duration::from_secs(5),
        format!(
            "steady {:.3}/{:.3} Gbps, max rel err {:.2e} (tol 2%), runtime {:.2}s (limit 5s)",
            r0 / G,
            r1 / G,
            err,
            wall.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Outcome {
    let inst = instance("fig_maxmin", &[]);
    let (out, _) = run("fig_maxmin", &inst);
    let t = &out.trace;
    let s1s2 = inst.topology.link_id("s1-s2").unwrap().0;
    let mut worst = 0.0f64;
    let mut flow1 = Vec::new();
    let mut moved = Vec::new();
    for e in &out.summary.epochs {
        let a = e.end_s - 0.2 * (e.end_s - e.start_s);
        for (i, &f) in e.flows.iter().enumerate() {
            worst = worst.max(rel(mean_rate(t, f, a, e.end_s), e.oracle_rates_bps[i]));
        }
        flow1.push(mean_rate(t, 0, a, e.end_s));
        moved.push(e.flows[1..4].iter().all(|&f| e.bottlenecks[f] == s1s2));
    }
    let plateau = rel(flow1[0], 40.0 * G) <= 0.03;
    let first_moved = moved.iter().position(|&m| m);
    let increasing = match first_moved {
        Some(i) if i > 0 => flow1[i - 1..].windows(2).all(|w| w[1] > w[0]),
        _ => false,
    };
    let table: Vec<String> = flow1.iter().map(|r| format!("{:.2}", r / G)).collect();
    outcome(
        worst <= 0.03 && plateau && increasing && out.summary.epochs.len() == 5,
        format!(
            "flow1 per epoch [{}] Gbps, worst per-flow err {:.2e} (tol 3%), flows 2-4 move to switch 1 at epoch {:?}",
            table.join(", "),
            worst,
            first_moved.map(|i| i + 1)
        ),
    )
}

fn criterion_3() -> Outcome {
    let (inst, out, _) = weighted_pair();
    let t = &out.trace;
    let l = &out.summary.lemma;
    let c = &inst.config.control;
    let params = ControlParams {
        p: c.p,
        k: c.k,
        m: c.m,
        alpha: l.alpha_bps,
        beta: l.beta_bps,
        update_interval: t.control_interval,
        rate_floor: c.rate_floor,
        rate_cap: f64::MAX,
    };
    let link = inst.topology.link_id("s0-h2").unwrap();
    let (a, b) = (0.8 * t.end_time, t.end_time);
    let err = target_delay_error(t, link, 100.0 * G / 4.0, &params, a, b).unwrap();
    let target = soze_core::target_delay(25.0 * G, &params).unwrap();
    outcome(
        err <= 0.10,
        format!(
            "queue {:.4} us vs T(B/W) {:.4} us, rel err {:.2e} (tol 10%)",
            mean_queue(t, link.0, a, b) * 1e6,
            target * 1e6,
            err
        ),
    )
}

const UNEQUAL_START: &str = r#"
name = "unequal_start"
[topology]
kind = "star"
n = 3
bandwidth_bps = 100e9
delay_s = 0.25e-6
[[flows]]
src = "h0"
dst = "h2"
initial_rate_bps = 20e9
[[flows]]
src = "h1"
dst = "h2"
initial_rate_bps = 60e9
[control]
rate_floor_bps = 1e-200
rate_cap_bps = 1e200
[sim]
dt_s = 0.25e-6
end_s = 200e-6
"#;

fn criterion_4() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    let mut horizon = 0.0;
    for (m, expect) in [(0.25, true), (1.0, true), (1.9, true), (2.0, false), (2.5, false)] {
        let set = format!("control.m={m}");
        let inst = instance(UNEQUAL_START, &[&set]);
        let (out, _) = run(&format!("m={m}"), &inst);
        let e = &out.summary.epochs[0];
        horizon = out.trace.end_time / e.convergence.base_rtt;
        // Lowest instantaneous error over the whole horizon.
        let t = &out.trace;
        let best = (0..t.len())
            .map(|i| {
                (0..2)
                    .map(|f| rel(t.rates[f][i], e.oracle_rates_bps[f]))
                    .fold(0.0, f64::max)
            })
            .fold(f64::INFINITY, f64::min);
        let good = if expect {
            e.convergence.converged
        } else {
            !e.convergence.converged && best >= 0.05
        };
        ok &= good;
        parts.push(format!(
            "m={m}: converged={} min err {:.3}",
            e.convergence.converged, best
        ));
    }
    outcome(ok, format!("{} over {horizon:.0} RTTs", parts.join("; ")))
}

fn lemma2_case(ratio: f64) -> (Vec<f64>, f64) {
    let dt_update = 1e-6;
    let p = format!("control.p_s={}", ratio * dt_update);
    let inst = instance(
        TWO_FLOW,
        &[
            "topology.delay_s=0.0",
            "flows.0.weight=1.0",
            "control.m=1.0",
            "control.update=\"fixed\"",
            "control.update_interval_s=1e-6",
            "control.alpha_bps=100e9",
            "control.beta_bps=100e6",
            "sim.end_s=400e-6",
            &p,
        ],
    );
    let (out, _) = run(&format!("p/dt={ratio}"), &inst);
    let t = &out.trace;
    let link = inst.topology.link_id("s0-h2").unwrap().0;
    let c = &inst.config.control;
    let params = ControlParams {
        p: c.p,
        k: c.k,
        m: c.m,
        alpha: 100e9,
        beta: 100e6,
        update_interval: dt_update,
        rate_floor: c.rate_floor,
        rate_cap: f64::MAX,
    };
    let target = soze_core::target_delay(50.0 * G, &params).unwrap();
    let n = (t.end_time / dt_update).round() as usize;
    let dev = (0..n)
        .map(|i| t.queue_delays[link][t.index_at(i as f64 * dt_update)] - target)
        .collect();
    (dev, target)
}

fn first_crossing(dev: &[f64]) -> Option<usize> {
    let s0 = dev.iter().position(|d| *d != 0.0)?;
    let sign = dev[s0].signum();
    dev.iter().skip(s0).position(|d| d.signum() == -sign).map(|i| i + s0)
}

fn criterion_5() -> Outcome {
    let (low, target) = lemma2_case(2.0);
    let (high, _) = lemma2_case(7.0);
    let amp = |xs: &[f64]| xs.iter().map(|d| d.abs()).fold(0.0, f64::max);
    let osc = match first_crossing(&low) {
        Some(c) if c + 50 <= low.len() => {
            let early = amp(&low[c..c + 50]);
            let late = amp(&low[low.len() - 50..]);
            (late >= 0.5 * early, format!("p/dt=2: amplitude {:.3} -> {:.3} us", early * 1e6, late * 1e6))
        }
        _ => (false, "p/dt=2: no crossing".to_string()),
    };
    let mono = match first_crossing(&high) {
        Some(c) => {
            let tail = &high[c..];
            let ok = tail.windows(2).all(|w| w[1].abs() <= w[0].abs() + 1e-15);
            (
                ok,
                format!(
                    "p/dt=7: first crossing at interval {c}, deviation {:.3e} -> {:.3e} us, monotone={ok}",
                    tail[0].abs() * 1e6,
                    tail[tail.len() - 1].abs() * 1e6
                ),
            )
        }
        None => (false, "p/dt=7: no crossing".to_string()),
    };
    outcome(
        osc.0 && mono.0,
        format!("target {:.3} us; {}; {}", target * 1e6, osc.1, mono.1),
    )
}

fn criterion_6() -> Outcome {
    let inst = instance("fat_tree_random", &[]);
    let (out, wall) = run("fat_tree_random", &inst);
    let t = &out.trace;
    let e = &out.summary.epochs[0];
    let (a, b) = (0.8 * t.end_time, t.end_time);
    let n = e.flows.len();
    let mut close = 0;
    let mut matched = 0;
    for (i, &f) in e.flows.iter().enumerate() {
        if rel(mean_rate(t, f, a, b), e.oracle_rates_bps[i]) <= 0.05 {
            close += 1;
        }
        let argmax = inst.flows[f]
            .route
            .iter()
            .map(|l| (l.0, mean_queue(t, l.0, a, b)))
            .fold((usize::MAX, f64::NEG_INFINITY), |best, x| if x.1 > best.1 { x } else { best })
            .0;
        if argmax == e.bottlenecks[i] {
            matched += 1;
        }
    }
    let need = (0.95 * n as f64).ceil() as usize;
    outcome(
        close >= need && matched >= need && wall < Duration::from_secs(60),
        format!(
            "{close}/{n} flows within 5%, {matched}/{n} bottlenecks match (need {need}), runtime {:.2}s (limit 60s)",
            wall.as_secs_f64()
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures = 0;
    let cases = 1000;
    for _ in 0..cases {
        let n = rng.random_range(1..=20);
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..10.0)).collect();
        let b = rng.random_range(1e9..400e9);
        let goal = single_link_goal(&weights, b);
        let holds = verify_goal_equivalence(&goal, &weights, b, 1e-9).unwrap();
        // Link not full, shares equal.
        let scale = 1.0 + rng.random_range(1e-6..0.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let scaled: Vec<f64> = goal.iter().map(|r| r * scale).collect();
        let bad_sum = verify_goal_equivalence(&scaled, &weights, b, 1e-9).unwrap();
        // Link full, shares unequal.
        let bad_share = if n >= 2 {
            let mut moved = goal.clone();
            let x = goal[0] * rng.random_range(1e-6..0.5);
            moved[0] -= x;
            moved[1] += x;
            verify_goal_equivalence(&moved, &weights, b, 1e-9).unwrap()
        } else {
            false
        };
        if !holds || bad_sum || bad_share {
            failures += 1;
        }
    }
    outcome(
        failures == 0,
        format!("{cases} instances, {failures} failures (eps 1e-9)"),
    )
}

fn criterion_8() -> Outcome {
    let text = read_source("single_link_4flows").unwrap();
    let inst = instance(
        &text.replacen("weight = 1.0", "weight_schedule = [[0.0, 1.0], [250e-6, 2.0]]", 1),
        &[],
    );
    let (out, _) = run("agility", &inst);
    let e = &out.summary.epochs[1];
    let rtts = e.convergence.convergence_rtts;
    let pass = rtts.is_some_and(|r| r <= 20.0);
    let within_10 = rtts.is_some_and(|r| r <= 10.0);
    outcome(
        pass,
        format!(
            "weight 1 -> 2 at 250 us: converged in {} RTTs (limit 20; within 10: {within_10})",
            rtts.map_or("-".into(), |r| format!("{r:.1}"))
        ),
    )
}

const INCAST: &str = r#"
name = "incast_scaling"
[topology]
kind = "star"
n = 11
bandwidth_bps = 100e9
delay_s = 0.25e-6
[flow_generator]
kind = "incast"
count = 10
half_weight_schedule = [[1e-3, 2.0]]
[sim]
dt_s = 0.25e-6
end_s = 2e-3
[output]
sample_interval_s = 1e-6
"#;

/// Shortest of `reps` timed calls.
fn time_min(reps: usize, mut f: impl FnMut()) -> Duration {
    (0..reps)
        .map(|_| {
            let t0 = Instant::now();
            f();
            t0.elapsed()
        })
        .min()
        .unwrap()
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("incast.toml");
    std::fs::write(&file, INCAST).unwrap();
    let values: Vec<String> = ["10", "100", "1000"].iter().map(|s| s.to_string()).collect();
    let src = file.to_str().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let rows = cmd_sweep(src, "flow_count", &values, &[], Some(&a), &mut std::io::sink()).unwrap();
    cmd_sweep(src, "flow_count", &values, &[], Some(&b), &mut std::io::sink()).unwrap();
    for v in &values {
        let sub = format!("flow_count_{v}/trace.csv");
        let same = std::fs::read(a.join(&sub)).unwrap() == std::fs::read(b.join(&sub)).unwrap();
        REPEATS.with(|r| r.borrow_mut().push((format!("flow_count={v}"), same)));
    }
    let rtts: Vec<Option<f64>> = rows.iter().map(|r| r.convergence_rtts.get(1).copied().flatten()).collect();
    let ratio = match rtts.iter().copied().collect::<Option<Vec<f64>>>() {
        Some(xs) => xs.iter().copied().fold(0.0, f64::max) / xs.iter().copied().fold(f64::INFINITY, f64::min),
        None => f64::INFINITY,
    };
    let mut times = Vec::new();
    for v in &values {
        let inst = instance(INCAST, &[&format!("flow_generator.count={v}"), &format!("topology.n={}", v.parse::<usize>().unwrap() + 1)]);
        let routes: Vec<_> = inst.flows.iter().map(|f| f.route.clone()).collect();
        let weights: Vec<f64> = inst.flows.iter().map(|f| f.weight_at(0.0)).collect();
        times.push(time_min(50, || {
            std::hint::black_box(water_fill(&inst.topology, &routes, &weights).unwrap());
        }));
    }
    let grows = times.windows(2).all(|w| w[1] > w[0]);
    let shown: Vec<String> = rtts.iter().map(|r| r.map_or("-".into(), |x| format!("{x:.1}"))).collect();
    let wf: Vec<String> = times.iter().map(|d| format!("{:.1}us", d.as_secs_f64() * 1e6)).collect();
    outcome(
        ratio <= 2.0 && grows,
        format!(
            "flows 10/100/1000: post-change convergence [{}] RTTs, max/min {ratio:.2} (limit 2); water_fill [{}]",
            shown.join(", "),
            wf.join(", ")
        ),
    )
}

fn criterion_10() -> Outcome {
    let soze = instance("single_link_4flows", &[]);
    let aimd = instance(
        "single_link_4flows",
        &[
            "flows.0.controller=\"aimd\"",
            "flows.1.controller=\"aimd\"",
            "flows.2.controller=\"aimd\"",
            "flows.3.controller=\"aimd\"",
        ],
    );
    let (s, _) = run("soze 4 flows", &soze);
    let (a, _) = run("aimd 4 flows", &aimd);
    let link = soze.topology.link_id("s0-h4").unwrap();
    let stats = |t: &Trace| {
        let (lo, hi) = (0.5 * t.end_time, t.end_time);
        let osc = (0..4).map(|f| rate_oscillation(t, f, lo, hi)).sum::<f64>() / 4.0;
        let delivered = delivered_utilization(t, link, lo, hi).unwrap();
        let arrival = utilization(t, link, lo, hi).unwrap();
        (osc, delivered, arrival)
    };
    let (so, su, sa) = stats(&s.trace);
    let (ao, au, aa) = stats(&a.trace);
    outcome(
        ao >= 3.0 * so && su >= au,
        format!(
            "rate CV aimd {ao:.3e} vs soze {so:.3e}; delivered utilization soze {su:.6} vs aimd {au:.6} (arrival {sa:.6} / {aa:.6})"
        ),
    )
}

fn criterion_11() -> Outcome {
    let repeats = REPEATS.with(|r| r.borrow().clone());
    let differing: Vec<&str> = repeats.iter().filter(|(_, same)| !same).map(|(l, _)| l.as_str()).collect();
    outcome(
        !repeats.is_empty() && differing.is_empty(),
        format!(
            "{} runs repeated, {} differ{}",
            repeats.len(),
            differing.len(),
            if differing.is_empty() { String::new() } else { format!(": {}", differing.join(", ")) }
        ),
    )
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "single-link weighted split", criterion_1),
        (2, "two-switch max-min reproduction", criterion_2),
        (3, "target queueing delay", criterion_3),
        (4, "m boundary for fairness", criterion_4),
        (5, "p/dt boundary for queue stability", criterion_5),
        (6, "fat-tree oracle equivalence", criterion_6),
        (7, "single-link goal equivalence", criterion_7),
        (8, "agility after a weight change", criterion_8),
        (9, "convergence vs flow count", criterion_9),
        (10, "AIMD contrast", criterion_10),
        (11, "determinism", criterion_11),
    ];
    let mut failed = 0;
    for (n, name, f) in criteria {
        let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {n:>2} {}: {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("{} of 11 criteria passed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
