use crate::baselines::{aimd_adjust, AimdConfig, AimdState};
use crate::control::{adjust_rate, ControlParams};
use crate::model::{ControllerKind, FlowSpec, FlowState, LinkId, Topology};

use super::config::{initial_rate, SignalDelayMode, SimConfig, UpdateMode};
use super::link::{link_step, max_qd, LinkState};
use super::signal::{lag_steps, FeedbackChannel};
use super::trace::{EventKind, EventMarker, Trace};
use super::SimError;

#[derive(Debug, Clone, Copy)]
enum Controller {
    Soze(FlowState),
    Aimd(AimdState),
}

impl Controller {
    fn rate(&self) -> f64 {
        match self {
            Controller::Soze(s) => s.rate,
            Controller::Aimd(s) => s.rate,
        }
    }
}

struct Runtime<'a> {
    spec: &'a FlowSpec,
    base_rtt: f64,
    params: ControlParams,
    aimd: AimdConfig,
    ctrl: Option<Controller>,
    weight: f64,
    channel: FeedbackChannel,
    signal: f64,
}

#[derive(Debug, Clone, Copy)]
struct Scheduled {
    step: u64,
    order: u8,
    flow: usize,
    marker: EventMarker,
}

fn step_of(t: f64, dt: f64) -> u64 {
    (t / dt - 1e-9).ceil().max(0.0) as u64
}

fn schedule(flows: &[FlowSpec], dt: f64, end: f64) -> Vec<Scheduled> {
    let mut out = Vec::new();
    for (i, f) in flows.iter().enumerate() {
        let stop = f.stop_time.unwrap_or(f64::INFINITY);
        if f.start_time < end {
            out.push(Scheduled {
                step: step_of(f.start_time, dt),
                order: 1,
                flow: i,
                marker: EventMarker {
                    time: f.start_time,
                    kind: EventKind::FlowStart { flow: f.id },
                },
            });
        }
        for &(at, weight) in &f.weight_schedule {
            if at > f.start_time && at < stop && at < end {
                out.push(Scheduled {
                    step: step_of(at, dt),
                    order: 2,
                    flow: i,
                    marker: EventMarker {
                        time: at,
                        kind: EventKind::WeightChange { flow: f.id, weight },
                    },
                });
            }
        }
        if stop < end {
            out.push(Scheduled {
                step: step_of(stop, dt),
                order: 0,
                flow: i,
                marker: EventMarker {
                    time: stop,
                    kind: EventKind::FlowStop { flow: f.id },
                },
            });
        }
    }
    out.sort_by(|a, b| {
        (a.step, a.order, a.flow)
            .cmp(&(b.step, b.order, b.flow))
            .then(a.marker.time.total_cmp(&b.marker.time))
    });
    out
}

fn check_config(
    topology: &Topology,
    flows: &[FlowSpec],
    config: &SimConfig,
) -> Result<(), SimError> {
    let bad = |msg: String| Err(SimError::Config(msg));
    if !(config.dt > 0.0 && config.dt.is_finite()) {
        return bad(format!("dt must be positive, got {}", config.dt));
    }
    if !(config.end_time >= config.dt && config.end_time.is_finite()) {
        return bad(format!("end_time must be at least dt, got {}", config.end_time));
    }
    let ratio = config.sample_interval / config.dt;
    if !(ratio >= 1.0 - 1e-9 && (ratio - ratio.round()).abs() < 1e-6) {
        return bad(format!(
            "sample_interval {} is not a whole multiple of dt {}",
            config.sample_interval, config.dt
        ));
    }
    if config.control.packet_size <= 0.0 {
        return bad("packet_size must be positive".into());
    }
    let mut ids: Vec<usize> = flows.iter().map(|f| f.id.0).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return bad("flow ids must be unique".into());
    }
    for f in flows {
        f.validate(topology)?;
    }
    Ok(())
}

/// Runs the fluid model to `config.end_time` and returns the sampled trace.
///
/// Each step applies due flow events, integrates every link queue over
/// `dt` from the current sending rates, emits maxQD samples into each
/// flow's feedback channel and lets flows that have heard back update.
/// Identical inputs produce identical traces.
pub fn run(topology: &Topology, flows: &[FlowSpec], config: &SimConfig) -> Result<Trace, SimError> {
    check_config(topology, flows, config)?;
    let dt = config.dt;
    let (alpha, beta) = config.control.alpha_beta(topology, flows);

    let mut rt: Vec<Runtime> = Vec::with_capacity(flows.len());
    for f in flows {
        let base_rtt = topology.base_rtt(&f.route);
        let params = config.control.params_for(topology, f, alpha, beta);
        params
            .validate()
            .map_err(|e| SimError::Config(format!("flow {}: {e}", f.name)))?;
        let aimd = config.aimd.config(config.control.packet_size, base_rtt);
        match f.controller {
            ControllerKind::Soze => {
                let fixed_interval = !matches!(config.control.update, UpdateMode::PerPacket);
                if fixed_interval && params.update_interval <= 0.0 {
                    return Err(SimError::Config(format!(
                        "flow {}: update interval is zero; give links a delay or use a fixed interval",
                        f.name
                    )));
                }
                if fixed_interval && dt > params.update_interval / 4.0 * (1.0 + 1e-9) {
                    return Err(SimError::Config(format!(
                        "dt {dt} exceeds a quarter of flow {}'s update interval {}",
                        f.name, params.update_interval
                    )));
                }
            }
            ControllerKind::Aimd => {
                if base_rtt <= 0.0 {
                    return Err(SimError::Config(format!(
                        "AIMD flow {} needs a positive base RTT",
                        f.name
                    )));
                }
                if dt > base_rtt / 4.0 * (1.0 + 1e-9) {
                    return Err(SimError::Config(format!(
                        "dt {dt} exceeds a quarter of flow {}'s base RTT {base_rtt}",
                        f.name
                    )));
                }
            }
        }
        rt.push(Runtime {
            spec: f,
            base_rtt,
            params,
            aimd,
            ctrl: None,
            weight: f.weight_at(f.start_time),
            channel: FeedbackChannel::new(),
            signal: 0.0,
        });
    }

    let events = schedule(flows, dt, config.end_time);
    let total_steps = (config.end_time / dt).round() as u64;
    let sample_every = (config.sample_interval / dt).round() as u64;
    let n_samples = (total_steps / sample_every) as usize + 1;

    let mut links: Vec<LinkState> = topology
        .links()
        .iter()
        .map(|l| LinkState {
            link: l.id,
            queue_delay: 0.0,
            bandwidth: l.bandwidth,
        })
        .collect();

    let mut trace = Trace {
        times: Vec::with_capacity(n_samples),
        flow_names: flows.iter().map(|f| f.name.clone()).collect(),
        link_names: topology.links().iter().map(|l| l.name.clone()).collect(),
        rates: vec![Vec::with_capacity(n_samples); flows.len()],
        signals: vec![Vec::with_capacity(n_samples); flows.len()],
        queue_delays: vec![Vec::with_capacity(n_samples); links.len()],
        events: events.iter().map(|e| e.marker).collect(),
        sample_interval: sample_every as f64 * dt,
        end_time: total_steps as f64 * dt,
        flow_routes: flows.iter().map(|f| f.route.clone()).collect(),
        flow_base_rtts: rt.iter().map(|r| r.base_rtt).collect(),
        link_bandwidths: links.iter().map(|l| l.bandwidth).collect(),
        control_interval: rt
            .iter()
            .map(|r| match (r.spec.controller, config.control.update) {
                (ControllerKind::Soze, UpdateMode::PerPacket) | (ControllerKind::Aimd, _) => {
                    r.base_rtt
                }
                (ControllerKind::Soze, _) => r.params.update_interval,
            })
            .fold(0.0, f64::max),
    };

    let mut cursor = 0usize;
    let mut arrivals = vec![0.0; links.len()];

    let apply_events = |step: u64, cursor: &mut usize, rt: &mut [Runtime]| {
        while *cursor < events.len() && events[*cursor].step <= step {
            let ev = events[*cursor];
            let now = step as f64 * dt;
            let r = &mut rt[ev.flow];
            match ev.marker.kind {
                EventKind::FlowStart { flow } => {
                    r.weight = r.spec.weight_at(r.spec.start_time);
                    let rate = initial_rate(r.spec, &config.control, &r.params);
                    r.ctrl = Some(match r.spec.controller {
                        ControllerKind::Soze => {
                            Controller::Soze(FlowState::new(flow, rate, r.weight, now))
                        }
                        ControllerKind::Aimd => {
                            Controller::Aimd(AimdState::from_rate(rate, now, &r.aimd))
                        }
                    });
                    r.channel.reset();
                    r.signal = 0.0;
                }
                EventKind::FlowStop { .. } => {
                    r.ctrl = None;
                    r.channel.reset();
                    r.signal = 0.0;
                }
                EventKind::WeightChange { weight, .. } => {
                    r.weight = weight;
                    if let Some(Controller::Soze(s)) = &mut r.ctrl {
                        s.weight = weight;
                    }
                }
            }
            *cursor += 1;
        }
    };

    let record = |trace: &mut Trace, t: f64, rt: &[Runtime], links: &[LinkState]| {
        trace.times.push(t);
        for (i, r) in rt.iter().enumerate() {
            trace.rates[i].push(r.ctrl.map_or(0.0, |c| c.rate()));
            trace.signals[i].push(r.signal);
        }
        for (j, l) in links.iter().enumerate() {
            trace.queue_delays[j].push(l.queue_delay);
        }
    };

    apply_events(0, &mut cursor, &mut rt);
    record(&mut trace, 0.0, &rt, &links);

    for n in 0..total_steps {
        arrivals.iter_mut().for_each(|a| *a = 0.0);
        for r in &rt {
            if let Some(c) = r.ctrl {
                let rate = c.rate();
                for l in &r.spec.route {
                    arrivals[l.0] += rate;
                }
            }
        }
        for (l, a) in links.iter_mut().zip(&arrivals) {
            *l = link_step(*l, *a, dt);
        }

        let step = n + 1;
        let now = step as f64 * dt;
        for r in rt.iter_mut() {
            let Some(ctrl) = r.ctrl else { continue };
            let lag = match config.signal_delay {
                SignalDelayMode::FixedRtt => r.base_rtt,
                SignalDelayMode::PropagationPlusQueue => {
                    r.base_rtt + route_queue_sum(&r.spec.route, &links)
                }
            };
            let rtt = lag;
            r.channel
                .emit(step, lag_steps(lag, dt), max_qd(&r.spec.route, &links));
            r.signal = r.channel.signal_at(step);
            if !r.channel.has_signal() {
                continue;
            }
            // The gate compares against an interval shortened by half a step
            // so updates land every `Δt / dt` steps rather than one later.
            r.ctrl = Some(match ctrl {
                Controller::Soze(s) => {
                    let nominal = match config.control.update {
                        UpdateMode::PerPacket => config.control.packet_size / s.rate,
                        // Per-RTT updates follow the RTT the flow observes.
                        UpdateMode::PerRtt => rtt,
                        UpdateMode::Fixed { .. } => r.params.update_interval,
                    };
                    let params = ControlParams {
                        update_interval: nominal - dt / 2.0,
                        ..r.params
                    };
                    Controller::Soze(adjust_rate(s, r.signal, now, &params))
                }
                Controller::Aimd(s) => {
                    let cfg = AimdConfig {
                        update_interval: r.aimd.update_interval - dt / 2.0,
                        ..r.aimd
                    };
                    Controller::Aimd(aimd_adjust(s, r.signal, now, &cfg))
                }
            });
        }

        apply_events(step, &mut cursor, &mut rt);
        if step % sample_every == 0 {
            record(&mut trace, now, &rt, &links);
        }
    }

    Ok(trace)
}

fn route_queue_sum(route: &[LinkId], links: &[LinkState]) -> f64 {
    route.iter().map(|l| links[l.0].queue_delay).sum()
}
