//! Vehicle schedules and the pickup/drop-off insertion heuristic.

use std::fmt;

use super::{Request, RequestId, SimConfig, VehicleId};
use crate::myopic::{route_cost, RouteCost};
use crate::netgraph::{NodeId, RoadNetwork, Seconds};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StopKind {
    Pickup,
    Dropoff,
    RepositionEnd,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stop {
    pub node: NodeId,
    pub kind: StopKind,
    pub request: RequestId,
    pub planned_arrival: Seconds,
    pub submission: Seconds,
    pub latest_dropoff: Seconds,
    /// Relocation leg: no load, no time windows, no dwell.
    pub rebalancing: bool,
}

impl Stop {
    fn pickup_of(req: &Request) -> Self {
        Stop {
            node: req.origin,
            kind: StopKind::Pickup,
            request: req.id,
            planned_arrival: 0,
            submission: req.submission_time,
            latest_dropoff: req.latest_dropoff,
            rebalancing: req.is_rebalancing,
        }
    }

    fn dropoff_of(req: &Request) -> Self {
        Stop {
            node: req.dest,
            kind: if req.is_rebalancing { StopKind::RepositionEnd } else { StopKind::Dropoff },
            ..Stop::pickup_of(req)
        }
    }
}

/// A vehicle's position and committed route.
///
/// `current_time` is when the vehicle is (or will be, if it is mid-edge) at
/// `current_node`; for an idle vehicle it may lag the clock.
#[derive(Clone, Debug, PartialEq)]
pub struct VehicleSchedule {
    pub vehicle_id: VehicleId,
    pub current_node: NodeId,
    pub current_time: Seconds,
    pub stops: Vec<Stop>,
    pub onboard_count: u32,
    /// Onboard passengers and their actual pickup times.
    pub onboard: Vec<(RequestId, Seconds)>,
}

impl VehicleSchedule {
    pub fn idle_at(vehicle_id: VehicleId, node: NodeId, time: Seconds) -> Self {
        VehicleSchedule {
            vehicle_id,
            current_node: node,
            current_time: time,
            stops: Vec::new(),
            onboard_count: 0,
            onboard: Vec::new(),
        }
    }

    /// Where and when the vehicle can start executing a new plan.
    pub fn anchor(&self, now: Seconds) -> (NodeId, Seconds) {
        (self.current_node, self.current_time.max(now))
    }

    pub fn is_idle(&self) -> bool {
        self.stops.is_empty()
    }

    /// Only relocation legs remain.
    pub fn is_relocating(&self) -> bool {
        !self.stops.is_empty() && self.stops.iter().all(|s| s.rebalancing)
    }

    pub fn final_stop(&self) -> Option<&Stop> {
        self.stops.last()
    }

    fn onboard_pickup(&self, id: RequestId) -> Option<Seconds> {
        self.onboard.iter().find(|(r, _)| *r == id).map(|&(_, t)| t)
    }

    /// Pickup time of the passenger served at `stops[idx]` (a drop-off):
    /// either planned earlier in the list or already realised.
    pub(crate) fn pickup_time_for(&self, idx: usize) -> Option<Seconds> {
        let id = self.stops[idx].request;
        self.stops[..idx]
            .iter()
            .rev()
            .find(|s| s.request == id && s.kind == StopKind::Pickup)
            .map(|s| s.planned_arrival)
            .or_else(|| self.onboard_pickup(id))
    }
}

/// Recomputes planned arrivals from the schedule's current node/time and
/// checks capacity, wait and drop-off deadlines. Returns `false` on the
/// first violation.
pub fn replan(sched: &mut VehicleSchedule, net: &RoadNetwork, cfg: &SimConfig) -> bool {
    let mut node = sched.current_node;
    let mut t = sched.current_time;
    let mut load = sched.onboard_count;
    for s in sched.stops.iter_mut() {
        let Some(leg) = net.time_to_stop(node, s.node) else {
            return false;
        };
        t += leg;
        s.planned_arrival = t;
        node = s.node;
        if s.rebalancing {
            continue;
        }
        match s.kind {
            StopKind::Pickup => {
                load += 1;
                if t - s.submission > cfg.w_max || load > cfg.capacity {
                    return false;
                }
            }
            StopKind::Dropoff => {
                if t > s.latest_dropoff || load == 0 {
                    return false;
                }
                load -= 1;
            }
            StopKind::RepositionEnd => {}
        }
        t += cfg.dwell_seconds;
    }
    true
}

/// Outcome of a successful insertion.
#[derive(Clone, Debug, PartialEq)]
pub struct Insertion {
    pub vehicle: VehicleId,
    /// The augmented schedule, anchored at the planning time.
    pub schedule: VehicleSchedule,
    pub old_cost: RouteCost,
    pub new_cost: RouteCost,
    /// Node and arrival time of the last stop after insertion.
    pub final_stop: (NodeId, Seconds),
    /// Positions of the new pickup and drop-off in `schedule.stops`.
    pub positions: (usize, usize),
}

impl Insertion {
    /// c(after) - c(before), minutes.
    pub fn marginal_cost(&self) -> f64 {
        self.new_cost.total - self.old_cost.total
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Infeasible;

impl fmt::Display for Infeasible {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("no feasible insertion")
    }
}

impl std::error::Error for Infeasible {}

/// The schedule as the planner sees it at `now`: relocation legs dropped,
/// anchored at the vehicle's next reachable node, arrivals recomputed.
pub fn planning_base(sched: &VehicleSchedule, net: &RoadNetwork, cfg: &SimConfig, now: Seconds) -> VehicleSchedule {
    let (node, t0) = sched.anchor(now);
    let mut base = VehicleSchedule {
        vehicle_id: sched.vehicle_id,
        current_node: node,
        current_time: t0,
        stops: sched.stops.iter().filter(|s| !s.rebalancing).cloned().collect(),
        onboard_count: sched.onboard_count,
        onboard: sched.onboard.clone(),
    };
    // Committed schedules were feasible when accepted and travel times are static.
    let ok = replan(&mut base, net, cfg);
    debug_assert!(ok, "committed schedule of vehicle {} became infeasible", sched.vehicle_id);
    base
}

/// Cheapest feasible way to add `req` to the vehicle's route, keeping the
/// relative order of the existing stops. Ties keep the earliest (pickup,
/// drop-off) position pair.
pub fn try_insert(
    sched: &VehicleSchedule,
    req: &Request,
    net: &RoadNetwork,
    cfg: &SimConfig,
    now: Seconds,
) -> Result<Insertion, Infeasible> {
    let base = planning_base(sched, net, cfg, now);
    let old_cost = route_cost(&base, cfg);

    if req.is_rebalancing {
        if !base.stops.is_empty() {
            return Err(Infeasible);
        }
        let mut cand = base.clone();
        cand.stops = vec![Stop::pickup_of(req), Stop::dropoff_of(req)];
        if !replan(&mut cand, net, cfg) {
            return Err(Infeasible);
        }
        let new_cost = route_cost(&cand, cfg);
        return Ok(finish(cand, old_cost, new_cost, (0, 1)));
    }

    let k = base.stops.len();
    let pickup = Stop::pickup_of(req);
    let dropoff = Stop::dropoff_of(req);
    let mut best: Option<(f64, VehicleSchedule, (usize, usize))> = None;
    let mut cand = base.clone();
    for i in 0..=k {
        for j in i..=k {
            cand.stops.clear();
            cand.stops.extend_from_slice(&base.stops[..i]);
            cand.stops.push(pickup.clone());
            cand.stops.extend_from_slice(&base.stops[i..j]);
            cand.stops.push(dropoff.clone());
            cand.stops.extend_from_slice(&base.stops[j..]);
            if !replan(&mut cand, net, cfg) {
                continue;
            }
            let cost = route_cost(&cand, cfg).total;
            if best.as_ref().map_or(true, |(c, _, _)| cost < *c) {
                best = Some((cost, cand.clone(), (i, j + 1)));
            }
        }
    }
    let (_, sched, positions) = best.ok_or(Infeasible)?;
    let new_cost = route_cost(&sched, cfg);
    Ok(finish(sched, old_cost, new_cost, positions))
}

fn finish(schedule: VehicleSchedule, old_cost: RouteCost, new_cost: RouteCost, positions: (usize, usize)) -> Insertion {
    let last = schedule.stops.last().expect("insertion adds stops");
    Insertion {
        vehicle: schedule.vehicle_id,
        final_stop: (last.node, last.planned_arrival),
        schedule,
        old_cost,
        new_cost,
        positions,
    }
}

/// Vehicles that could reach the request's origin inside its remaining wait
/// budget, nearest first, at most `cfg.candidate_cap` of them.
pub fn candidate_vehicles(
    req: &Request,
    fleet: &[VehicleSchedule],
    net: &RoadNetwork,
    cfg: &SimConfig,
    now: Seconds,
) -> Vec<VehicleId> {
    let budget = cfg.w_max - (now - req.submission_time);
    if budget < 0 {
        return Vec::new();
    }
    let mut reach: Vec<(Seconds, VehicleId)> = fleet
        .iter()
        .filter_map(|v| {
            let (node, t0) = v.anchor(now);
            let t = (t0 - now) + net.time_to_stop(node, req.origin)?;
            (t <= budget).then_some((t, v.vehicle_id))
        })
        .collect();
    reach.sort_unstable();
    reach.truncate(cfg.candidate_cap);
    reach.into_iter().map(|(_, v)| v).collect()
}
