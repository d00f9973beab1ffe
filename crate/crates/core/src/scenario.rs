//! Small synthetic worlds for tests, benchmarks and demos.

use rand::Rng;

use crate::fleetsim::Request;
use crate::ingest::{resolve_trips, synth_demand, Pulse};
use crate::netgraph::{EdgeRecord, NodeRecord, RoadNetwork, Seconds};

/// `width x height` grid of stops with bidirectional `edge_seconds` streets,
/// split into `zones` vertical bands of equal width. Node ids are
/// `y * width + x`.
pub fn grid_network(width: usize, height: usize, edge_seconds: f64, zones: usize) -> RoadNetwork {
    assert!(width >= zones && zones > 0 && height > 0);
    let id = |x: usize, y: usize| (y * width + x) as u64;
    let mut nodes = Vec::with_capacity(width * height);
    let mut edges = Vec::new();
    for y in 0..height {
        for x in 0..width {
            nodes.push(NodeRecord {
                id: id(x, y),
                lat: Some(y as f64),
                lon: Some(x as f64),
                zone: x * zones / width,
                is_stop: true,
            });
            if x + 1 < width {
                edges.push(EdgeRecord { from: id(x, y), to: id(x + 1, y), travel_time: edge_seconds });
                edges.push(EdgeRecord { from: id(x + 1, y), to: id(x, y), travel_time: edge_seconds });
            }
            if y + 1 < height {
                edges.push(EdgeRecord { from: id(x, y), to: id(x, y + 1), travel_time: edge_seconds });
                edges.push(EdgeRecord { from: id(x, y + 1), to: id(x, y), travel_time: edge_seconds });
            }
        }
    }
    RoadNetwork::new(nodes, edges).expect("grid is strongly connected")
}

/// Demand whose hot spot alternates between zone 0 and zone 1 every hour.
/// In each hour `per_hour` trips leave the hot zone; `cross_share` of them
/// head to the other zone, the rest stay inside.
pub fn alternating_pulses(hours: usize, per_hour: usize, cross_share: f64) -> Vec<Pulse> {
    let cross = (per_hour as f64 * cross_share).round() as usize;
    let mut pulses = Vec::new();
    for h in 0..hours {
        let hot = h % 2;
        let (start_s, end_s) = (h as Seconds * 3600, (h as Seconds + 1) * 3600);
        pulses.push(Pulse { start_s, end_s, origin_zone: hot, dest_zone: hot, count: per_hour - cross });
        if cross > 0 {
            pulses.push(Pulse { start_s, end_s, origin_zone: hot, dest_zone: 1 - hot, count: cross });
        }
    }
    pulses
}

/// Resolved requests for a pulse list.
pub fn pulse_demand<G: Rng>(pulses: &[Pulse], net: &RoadNetwork, rng: &mut G) -> Vec<Request> {
    let trips: Vec<_> = synth_demand(pulses, rng).into_iter().map(|t| (0, t)).collect();
    resolve_trips(&trips, "synthetic", net, rng).expect("pulse zones have stops")
}

/// `count` trips between uniformly random stops, submitted uniformly over
/// `[0, horizon)`.
pub fn uniform_demand<G: Rng>(net: &RoadNetwork, count: usize, horizon: Seconds, rng: &mut G) -> Vec<Request> {
    let stops = net.stops();
    let mut reqs: Vec<Request> = (0..count)
        .map(|_| {
            let t = rng.gen_range(0..horizon);
            let o = stops[rng.gen_range(0..stops.len())];
            let d = stops[rng.gen_range(0..stops.len())];
            Request::new(0, t, o, d)
        })
        .collect();
    reqs.sort_by_key(|r| r.submission_time);
    for (i, r) in reqs.iter_mut().enumerate() {
        r.id = i;
    }
    reqs
}
