//! Fixtures shared by the benchmarks.

use ridepool::fleetsim::{try_insert, Request, VehicleSchedule};
use ridepool::scenario::{grid_network, uniform_demand};
use ridepool::{seeded_rng, RoadNetwork, SimConfig, SpaceTimeGrid, StateValueTable};

/// 20 x 20 grid of one-minute streets in four zones.
pub fn city() -> RoadNetwork {
    grid_network(20, 20, 60.0, 4)
}

pub fn demand(net: &RoadNetwork, count: usize, seed: u64) -> Vec<Request> {
    uniform_demand(net, count, 86_400, &mut seeded_rng(seed, 2))
}

/// Table with values that vary over time and zone.
pub fn table(grid: &SpaceTimeGrid) -> StateValueTable {
    let mut t = StateValueTable::for_grid(grid);
    for s in t.states().collect::<Vec<_>>() {
        t.set(s, 5.0 + (s.time % 24) as f64 * 0.3 + s.zone as f64, 1);
    }
    t
}

/// A vehicle carrying `riders` requests submitted at time 0, built by
/// repeated cheapest insertion.
pub fn loaded_vehicle(net: &RoadNetwork, cfg: &SimConfig, riders: usize) -> VehicleSchedule {
    let mut v = VehicleSchedule::idle_at(0, net.stops()[0], 0);
    let mut added = 0;
    for (i, mut r) in demand(net, 200, 11).into_iter().enumerate() {
        if added == riders {
            break;
        }
        r.id = i;
        r.submission_time = 0;
        r.latest_dropoff = ridepool::fleetsim::latest_dropoff_of(&r, net, cfg).unwrap();
        if let Ok(ins) = try_insert(&v, &r, net, cfg, 0) {
            v = ins.schedule;
            added += 1;
        }
    }
    v
}
