//! Independent reference implementations and fixtures shared by the
//! integration tests and the acceptance harness.

#![allow(dead_code)]

use std::collections::HashMap;

use ridepool::fleetsim::{DispatchContext, Request, RequestStatus, SimOutcome, StopKind, VehicleSchedule};
use ridepool::ingest::Pulse;
use ridepool::learner::{learn_day, EpisodeLog};
use ridepool::netgraph::{NodeId, RoadNetwork, Seconds};
use ridepool::scenario::{alternating_pulses, grid_network, pulse_demand};
use ridepool::{seeded_rng, LearnerConfig, SimConfig, SpaceTimeGrid, StateValueTable, VehicleId};

// ---------------------------------------------------------------------------
// n-step returns
// ---------------------------------------------------------------------------

/// Return from position `t`, written out term by term: the discounted
/// rewards of the next `n` periods that exist, plus the discounted value of
/// the state `n` periods ahead when the episode still has one.
pub fn oracle_return(
    zones: &[usize],
    rewards: &[u32],
    t: usize,
    n: usize,
    gamma: f64,
    v: &dyn Fn(usize, usize) -> f64,
) -> f64 {
    let mut g = 0.0;
    for i in 0..n {
        if t + i >= rewards.len() {
            break;
        }
        g += gamma.powf(i as f64) * rewards[t + i] as f64;
    }
    if t + n < zones.len() {
        g += gamma.powf(n as f64) * v(t + n, zones[t + n]);
    }
    g
}

/// Folds one day of episodes into `(sum, count)` per state. Within a day the
/// sweep runs in time order, so every bootstrap reads a state that has not
/// been touched yet that day: returns can be computed against the values at
/// the start of the day and averaged in one batch.
pub fn oracle_day(
    prior: &HashMap<(usize, usize), (f64, u64)>,
    log: &EpisodeLog,
    n: usize,
    gamma: f64,
) -> HashMap<(usize, usize), (f64, u64)> {
    let value = |t: usize, z: usize| prior.get(&(t, z)).map_or(0.0, |&(s, c)| if c == 0 { 0.0 } else { s / c as f64 });
    let mut next = prior.clone();
    for ep in &log.episodes {
        let zones: Vec<usize> = ep.iter().map(|s| s.state.zone).collect();
        let rewards: Vec<u32> = ep.iter().map(|s| s.reward).collect();
        for t in 0..ep.len() {
            let g = oracle_return(&zones, &rewards, t, n, gamma, &value);
            let e = next.entry((t, zones[t])).or_insert((0.0, 0));
            e.0 += g;
            e.1 += 1;
        }
    }
    next
}

// ---------------------------------------------------------------------------
// Insertion and marginal cost
// ---------------------------------------------------------------------------

#[derive(Clone, Copy)]
struct PlanStop {
    node: NodeId,
    kind: StopKind,
    request: usize,
    submission: Seconds,
    latest: Seconds,
}

fn weighted(cfg: &SimConfig, drive: Seconds, ivt: Seconds, wait: Seconds) -> f64 {
    let m = |s: Seconds| s as f64 / 60.0;
    cfg.theta * m(drive) + (1.0 - cfg.theta) * (m(ivt) + cfg.alpha * m(wait))
}

/// Cost of a stop sequence driven from `(node, t0)`, or `None` if it breaks
/// capacity, a wait limit or a drop-off deadline.
fn plan_cost(
    net: &RoadNetwork,
    cfg: &SimConfig,
    start: (NodeId, Seconds),
    onboard: &[(usize, Seconds)],
    stops: &[PlanStop],
) -> Option<f64> {
    let (mut node, mut t) = start;
    let mut load = onboard.len() as u32;
    let mut picked: HashMap<usize, Seconds> = onboard.iter().copied().collect();
    let (mut drive, mut ivt, mut wait) = (0, 0, 0);
    for s in stops {
        let leg = net.shortest_time(node, s.node).ok()?;
        drive += leg;
        t += leg;
        node = s.node;
        match s.kind {
            StopKind::Pickup => {
                load += 1;
                if load > cfg.capacity || t - s.submission > cfg.w_max {
                    return None;
                }
                picked.insert(s.request, t);
            }
            StopKind::Dropoff => {
                if t > s.latest || load == 0 {
                    return None;
                }
                load -= 1;
                let p = picked[&s.request];
                ivt += t - p;
                wait += p - s.submission;
            }
            StopKind::RepositionEnd => unreachable!(),
        }
        t += cfg.dwell_seconds;
    }
    Some(weighted(cfg, drive, ivt, wait))
}

/// Marginal cost of the vehicle's cheapest insertion of `req` (the
/// insertion with the lowest resulting route cost), by exhaustive scan.
pub fn brute_force_marginal(ctx: &DispatchContext<'_>, v: &VehicleSchedule, req: &Request) -> Option<f64> {
    let (net, cfg) = (ctx.net, ctx.cfg);
    let start = (v.current_node, v.current_time.max(ctx.now));
    let base: Vec<PlanStop> = v
        .stops
        .iter()
        .filter(|s| !s.rebalancing)
        .map(|s| PlanStop {
            node: s.node,
            kind: s.kind,
            request: s.request,
            submission: s.submission,
            latest: s.latest_dropoff,
        })
        .collect();
    let old = plan_cost(net, cfg, start, &v.onboard, &base).expect("committed route stays feasible");
    let latest = req.submission_time
        + cfg.w_max
        + (cfg.detour_factor * net.shortest_time(req.origin, req.dest).unwrap() as f64).floor() as Seconds;
    let p =
        PlanStop { node: req.origin, kind: StopKind::Pickup, request: req.id, submission: req.submission_time, latest };
    let d = PlanStop { kind: StopKind::Dropoff, node: req.dest, ..p };
    let mut best: Option<f64> = None;
    for i in 0..=base.len() {
        for j in i..=base.len() {
            let mut seq = base[..i].to_vec();
            seq.push(p);
            seq.extend_from_slice(&base[i..j]);
            seq.push(d);
            seq.extend_from_slice(&base[j..]);
            if let Some(c) = plan_cost(net, cfg, start, &v.onboard, &seq) {
                if best.map_or(true, |b| c < b) {
                    best = Some(c);
                }
            }
        }
    }
    best.map(|new| new - old)
}

/// Every vehicle's brute-force marginal cost, `None` where infeasible.
pub fn marginal_costs(ctx: &DispatchContext<'_>, req: &Request) -> Vec<Option<f64>> {
    ctx.fleet.iter().map(|v| brute_force_marginal(ctx, v, req)).collect()
}

/// Whether `chosen` is a cheapest vehicle under `costs` (within `tol`).
pub fn is_argmin(costs: &[Option<f64>], chosen: Option<VehicleId>, tol: f64) -> bool {
    let min = costs.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    match chosen {
        None => min.is_infinite(),
        Some(v) => costs[v].is_some_and(|c| c <= min + tol),
    }
}

// ---------------------------------------------------------------------------
// Feasibility of a finished run
// ---------------------------------------------------------------------------

/// Violations of capacity, wait limit, drop-off deadline and conservation
/// found in a finished run, checked from request records alone.
pub fn violations(out: &SimOutcome, cfg: &SimConfig) -> Vec<String> {
    let mut bad = Vec::new();
    let mut events: HashMap<VehicleId, Vec<(Seconds, i32)>> = HashMap::new();
    for r in &out.requests {
        if r.status != RequestStatus::Completed {
            continue;
        }
        let (p, d) = (r.pickup_time.unwrap(), r.dropoff_time.unwrap());
        if p - r.submission_time > cfg.w_max {
            bad.push(format!("request {} waited {} s", r.id, p - r.submission_time));
        }
        if d > r.latest_dropoff {
            bad.push(format!("request {} dropped at {} after {}", r.id, d, r.latest_dropoff));
        }
        if d < p {
            bad.push(format!("request {} dropped before pickup", r.id));
        }
        let ev = events.entry(r.vehicle.unwrap()).or_default();
        ev.push((p, 1));
        ev.push((d, -1));
    }
    for (v, mut ev) in events {
        // drop-offs first when times coincide
        ev.sort();
        let mut load = 0;
        for (t, dl) in ev {
            load += dl;
            if load > cfg.capacity as i32 {
                bad.push(format!("vehicle {v} carries {load} at {t}"));
            }
        }
    }
    for tally in &out.tallies {
        if !tally.is_conserved() {
            bad.push(format!("conservation broken at {}: {tally:?}", tally.time));
        }
    }
    bad
}

// ---------------------------------------------------------------------------
// Two-zone pulsed scenario
// ---------------------------------------------------------------------------

pub const TRAINING_DAYS: u64 = 5;
pub const TRAINING_FLEET: usize = 600;

pub struct PulseWorld {
    pub net: RoadNetwork,
    pub pulses: Vec<Pulse>,
    pub grid: SpaceTimeGrid,
    pub table: StateValueTable,
}

impl PulseWorld {
    /// 16 x 8 grid of one-minute streets in two zones; the busy zone swaps
    /// every hour. Values are learned from a fleet large enough to serve all
    /// of it.
    pub fn build() -> PulseWorld {
        let net = grid_network(16, 8, 60.0, 2);
        let pulses = alternating_pulses(24, 400, 0.2);
        let grid = SpaceTimeGrid::daily(2);
        let mut table = StateValueTable::for_grid(&grid);
        for d in 0..TRAINING_DAYS {
            let seed = 1000 + d;
            let demand = pulse_demand(&pulses, &net, &mut seeded_rng(seed, 0));
            let sim = SimConfig { fleet_size: TRAINING_FLEET, rng_seed: seed, ..SimConfig::default() };
            learn_day(&mut table, d as usize, demand, &net, &sim, &grid, &LearnerConfig::default())
                .expect("training fleet serves every request");
        }
        PulseWorld { net, pulses, grid, table }
    }

    pub fn demand(&self, seed: u64) -> Vec<Request> {
        pulse_demand(&self.pulses, &self.net, &mut seeded_rng(seed, 0))
    }

    pub fn sim(&self, fleet: usize, seed: u64) -> SimConfig {
        SimConfig { fleet_size: fleet, rng_seed: seed, ..SimConfig::default() }
    }
}
