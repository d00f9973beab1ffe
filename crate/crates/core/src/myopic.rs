//! Weighted operator/passenger route cost and the myopic matcher built on it.

use crate::fleetsim::{
    candidate_vehicles, try_insert, DispatchContext, Insertion, Matcher, Request, SimConfig, StopKind, VehicleSchedule,
};

/// Route cost in minutes.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RouteCost {
    /// Remaining scheduled drive time.
    pub operator_time: f64,
    pub in_vehicle_sum: f64,
    pub wait_sum: f64,
    pub total: f64,
}

impl RouteCost {
    pub fn from_parts(operator_time: f64, in_vehicle_sum: f64, wait_sum: f64, cfg: &SimConfig) -> Self {
        let total = cfg.theta * operator_time + (1.0 - cfg.theta) * (in_vehicle_sum + cfg.alpha * wait_sum);
        RouteCost { operator_time, in_vehicle_sum, wait_sum, total }
    }
}

/// Cost of executing the schedule from its current node and time, using the
/// planned arrivals already stored on the stops.
///
/// Every passenger still on the schedule contributes drop-off minus pickup
/// (in-vehicle) and pickup minus submission (wait); passengers already
/// delivered are gone from the schedule and contribute nothing.
pub fn route_cost(sched: &VehicleSchedule, cfg: &SimConfig) -> RouteCost {
    let mut drive = 0;
    let mut departed = sched.current_time;
    let mut in_vehicle = 0;
    let mut wait = 0;
    for (idx, stop) in sched.stops.iter().enumerate() {
        drive += stop.planned_arrival - departed;
        departed = stop.planned_arrival + if stop.rebalancing { 0 } else { cfg.dwell_seconds };
        if stop.kind == StopKind::Dropoff && !stop.rebalancing {
            let pickup = sched.pickup_time_for(idx).expect("every drop-off has a planned or realised pickup");
            in_vehicle += stop.planned_arrival - pickup;
            wait += pickup - stop.submission;
        }
    }
    RouteCost::from_parts(drive as f64 / 60.0, in_vehicle as f64 / 60.0, wait as f64 / 60.0, cfg)
}

/// Feasible insertion with the lowest post-insertion route cost over the
/// candidate vehicles, lowest vehicle id on ties.
pub fn match_myopic(ctx: &DispatchContext<'_>, req: &Request) -> Option<Insertion> {
    let mut best: Option<Insertion> = None;
    for v in candidate_vehicles(req, ctx.fleet, ctx.net, ctx.cfg, ctx.now) {
        let Ok(ins) = try_insert(&ctx.fleet[v], req, ctx.net, ctx.cfg, ctx.now) else {
            continue;
        };
        let better = match &best {
            None => true,
            Some(b) => {
                ins.new_cost.total < b.new_cost.total
                    || (ins.new_cost.total == b.new_cost.total && ins.vehicle < b.vehicle)
            }
        };
        if better {
            best = Some(ins);
        }
    }
    best
}

/// The baseline policy, also used to generate learning episodes.
#[derive(Clone, Copy, Debug, Default)]
pub struct MyopicMatcher;

impl Matcher for MyopicMatcher {
    fn name(&self) -> &str {
        "myopic"
    }

    fn select(&mut self, ctx: &DispatchContext<'_>, req: &Request) -> Option<Insertion> {
        match_myopic(ctx, req)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fleetsim::Stop;
    use crate::netgraph::NodeId;

    fn stop(kind: StopKind, request: usize, at: i64, submission: i64) -> Stop {
        Stop {
            node: NodeId(0),
            kind,
            request,
            planned_arrival: at,
            submission,
            latest_dropoff: i64::MAX,
            rebalancing: false,
        }
    }

    #[test]
    fn empty_schedule_costs_nothing() {
        let v = VehicleSchedule::idle_at(0, NodeId(0), 0);
        assert_eq!(route_cost(&v, &SimConfig::default()), RouteCost::default());
    }

    #[test]
    fn weighted_cost_example() {
        // drive 10 min in total, rider waits 2 min and rides 6 min
        let mut v = VehicleSchedule::idle_at(0, NodeId(0), 0);
        v.stops.push(stop(StopKind::Pickup, 0, 240, 120));
        v.stops.push(stop(StopKind::Dropoff, 0, 600, 120));
        let c = route_cost(&v, &SimConfig::default());
        assert!((c.operator_time - 10.0).abs() < 1e-12);
        assert!((c.in_vehicle_sum - 6.0).abs() < 1e-12);
        assert!((c.wait_sum - 2.0).abs() < 1e-12);
        assert!((c.total - 9.4).abs() < 1e-12);

        let operator_only = SimConfig { theta: 1.0, ..SimConfig::default() };
        assert!((route_cost(&v, &operator_only).total - 10.0).abs() < 1e-12);
    }

    #[test]
    fn onboard_rider_uses_realised_pickup() {
        let mut v = VehicleSchedule::idle_at(0, NodeId(0), 300);
        v.onboard_count = 1;
        v.onboard.push((7, 180));
        v.stops.push(stop(StopKind::Dropoff, 7, 480, 60));
        let c = route_cost(&v, &SimConfig::default());
        assert!((c.operator_time - 3.0).abs() < 1e-12);
        assert!((c.in_vehicle_sum - 5.0).abs() < 1e-12);
        assert!((c.wait_sum - 2.0).abs() < 1e-12);
    }

    #[test]
    fn dwell_is_not_drive_time() {
        let cfg = SimConfig { dwell_seconds: 30, ..SimConfig::default() };
        let mut v = VehicleSchedule::idle_at(0, NodeId(0), 0);
        v.stops.push(stop(StopKind::Pickup, 0, 60, 0));
        v.stops.push(stop(StopKind::Dropoff, 0, 150, 0));
        let c = route_cost(&v, &cfg);
        assert!((c.operator_time - 2.0).abs() < 1e-12);
    }
}
