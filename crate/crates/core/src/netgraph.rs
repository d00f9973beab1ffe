//! Road network, travel-time tables and the space-time state grid.
//!
//! Node ids in input files are arbitrary integers. Internally nodes are
//! renumbered densely in ascending id order, so "lowest index" and "lowest
//! external id" agree and every tie-break can work on [`NodeId`] directly.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

/// Simulation clock, whole seconds.
pub type Seconds = i64;

/// Zone index in `[0, num_zones)`.
pub type ZoneId = usize;

const UNREACHABLE: u32 = u32::MAX;
const NO_HOP: u32 = u32::MAX;

/// Dense internal node handle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum NetError {
    #[error("no directed path from node {from} to node {to}")]
    Unreachable { from: u64, to: u64 },
    #[error("unknown node id {0}")]
    UnknownNode(u64),
    #[error("edge {from}->{to} references an undeclared node")]
    DanglingEdge { from: u64, to: u64 },
    #[error("edge {from}->{to} has non-positive travel time {time}")]
    BadWeight { from: u64, to: u64, time: f64 },
    #[error("duplicate node id {0}")]
    DuplicateNode(u64),
    #[error("network has no virtual stops")]
    NoStops,
    #[error("virtual stop {from} cannot reach virtual stop {to}")]
    NotStronglyConnected { from: u64, to: u64 },
    #[error("{file}:{line}: {msg}")]
    Parse { file: String, line: u64, msg: String },
    #[error("cannot read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One row of the node file.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeRecord {
    pub id: u64,
    pub lat: Option<f64>,
    pub lon: Option<f64>,
    pub zone: ZoneId,
    pub is_stop: bool,
}

/// One row of the edge file, travel time in seconds.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeRecord {
    pub from: u64,
    pub to: u64,
    pub travel_time: f64,
}

/// Directed road graph with virtual stops, zones and precomputed
/// node-to-stop travel times.
///
/// Edge weights are rounded to whole seconds (minimum 1) so that every
/// schedule computation downstream is exact integer arithmetic.
#[derive(Clone, Debug)]
pub struct RoadNetwork {
    labels: Vec<u64>,
    coords: Vec<Option<(f64, f64)>>,
    zone_of: Vec<ZoneId>,
    num_zones: usize,
    out_edges: Vec<Vec<(u32, u32)>>,
    stops: Vec<NodeId>,
    stop_slot: Vec<u32>,
    stops_by_zone: Vec<Vec<NodeId>>,
    /// `to_stop[k][u]`: travel time from node u to stop k.
    to_stop: Vec<Vec<u32>>,
    /// `next_hop[k][u]`: successor of u on a shortest path to stop k.
    next_hop: Vec<Vec<u32>>,
    label_index: HashMap<u64, NodeId>,
}

impl RoadNetwork {
    /// Builds the network and precomputes all node-to-stop travel times.
    pub fn new(nodes: Vec<NodeRecord>, edges: Vec<EdgeRecord>) -> Result<Self, NetError> {
        let mut nodes = nodes;
        nodes.sort_by_key(|n| n.id);
        for w in nodes.windows(2) {
            if w[0].id == w[1].id {
                return Err(NetError::DuplicateNode(w[0].id));
            }
        }
        let n = nodes.len();
        let label_index: HashMap<u64, NodeId> =
            nodes.iter().enumerate().map(|(i, r)| (r.id, NodeId(i as u32))).collect();
        let labels: Vec<u64> = nodes.iter().map(|r| r.id).collect();
        let coords = nodes
            .iter()
            .map(|r| match (r.lat, r.lon) {
                (Some(a), Some(b)) => Some((a, b)),
                _ => None,
            })
            .collect();
        let zone_of: Vec<ZoneId> = nodes.iter().map(|r| r.zone).collect();
        let num_zones = zone_of.iter().max().map_or(0, |z| z + 1);

        let mut out_edges = vec![Vec::new(); n];
        let mut in_edges = vec![Vec::new(); n];
        for e in &edges {
            let (Some(&a), Some(&b)) = (label_index.get(&e.from), label_index.get(&e.to)) else {
                return Err(NetError::DanglingEdge { from: e.from, to: e.to });
            };
            if !(e.travel_time > 0.0) || !e.travel_time.is_finite() {
                return Err(NetError::BadWeight { from: e.from, to: e.to, time: e.travel_time });
            }
            let w = (e.travel_time.round() as u32).max(1);
            out_edges[a.index()].push((b.0, w));
            in_edges[b.index()].push((a.0, w));
        }
        for list in out_edges.iter_mut().chain(in_edges.iter_mut()) {
            list.sort_unstable();
        }

        let stops: Vec<NodeId> =
            nodes.iter().enumerate().filter(|(_, r)| r.is_stop).map(|(i, _)| NodeId(i as u32)).collect();
        if stops.is_empty() {
            return Err(NetError::NoStops);
        }
        let mut stop_slot = vec![u32::MAX; n];
        for (k, s) in stops.iter().enumerate() {
            stop_slot[s.index()] = k as u32;
        }
        let mut stops_by_zone = vec![Vec::new(); num_zones];
        for &s in &stops {
            stops_by_zone[zone_of[s.index()]].push(s);
        }

        let (to_stop, next_hop): (Vec<_>, Vec<_>) = stops.par_iter().map(|&s| reverse_dijkstra(&in_edges, s)).unzip();

        let net = RoadNetwork {
            labels,
            coords,
            zone_of,
            num_zones,
            out_edges,
            stops,
            stop_slot,
            stops_by_zone,
            to_stop,
            next_hop,
            label_index,
        };
        for (k, table) in net.to_stop.iter().enumerate() {
            for &s in &net.stops {
                if table[s.index()] == UNREACHABLE {
                    return Err(NetError::NotStronglyConnected { from: net.label(s), to: net.label(net.stops[k]) });
                }
            }
        }
        Ok(net)
    }

    /// Loads node and edge CSV files.
    pub fn load(nodes: &Path, edges: &Path) -> Result<Self, NetError> {
        let node_rows = read_nodes(open(nodes)?, &nodes.display().to_string())?;
        let edge_rows = read_edges(open(edges)?, &edges.display().to_string())?;
        Self::new(node_rows, edge_rows)
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn num_zones(&self) -> usize {
        self.num_zones
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.labels.len() as u32).map(NodeId)
    }

    /// Virtual stops, ascending.
    pub fn stops(&self) -> &[NodeId] {
        &self.stops
    }

    pub fn stops_in_zone(&self, zone: ZoneId) -> &[NodeId] {
        self.stops_by_zone.get(zone).map_or(&[], Vec::as_slice)
    }

    pub fn is_stop(&self, node: NodeId) -> bool {
        self.stop_slot[node.index()] != u32::MAX
    }

    pub fn zone_of(&self, node: NodeId) -> ZoneId {
        self.zone_of[node.index()]
    }

    /// External id as it appears in the node file.
    pub fn label(&self, node: NodeId) -> u64 {
        self.labels[node.index()]
    }

    pub fn coords(&self, node: NodeId) -> Option<(f64, f64)> {
        self.coords[node.index()]
    }

    pub fn node(&self, label: u64) -> Result<NodeId, NetError> {
        self.label_index.get(&label).copied().ok_or(NetError::UnknownNode(label))
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, Seconds)> + '_ {
        self.out_edges
            .iter()
            .enumerate()
            .flat_map(|(a, list)| list.iter().map(move |&(b, w)| (NodeId(a as u32), NodeId(b), w as Seconds)))
    }

    /// Minimal travel time from `from` to `to`.
    pub fn shortest_time(&self, from: NodeId, to: NodeId) -> Result<Seconds, NetError> {
        if from == to {
            return Ok(0);
        }
        let t = match self.stop_slot[to.index()] {
            u32::MAX => self.dijkstra_pair(from, to),
            k => self.to_stop[k as usize][from.index()],
        };
        if t == UNREACHABLE {
            Err(NetError::Unreachable { from: self.label(from), to: self.label(to) })
        } else {
            Ok(t as Seconds)
        }
    }

    /// Travel time to a virtual stop, `None` when unreachable.
    #[inline]
    pub(crate) fn time_to_stop(&self, from: NodeId, stop: NodeId) -> Option<Seconds> {
        let k = self.stop_slot[stop.index()];
        debug_assert!(k != u32::MAX, "{stop} is not a virtual stop");
        let t = self.to_stop[k as usize][from.index()];
        (t != UNREACHABLE).then_some(t as Seconds)
    }

    /// Next node and edge time on a shortest path from `from` towards the stop.
    pub fn next_hop(&self, from: NodeId, stop: NodeId) -> Option<(NodeId, Seconds)> {
        let k = self.stop_slot[stop.index()];
        if k == u32::MAX {
            return None;
        }
        let hop = self.next_hop[k as usize][from.index()];
        if hop == NO_HOP {
            return None;
        }
        let w = self.out_edges[from.index()].iter().filter(|&&(b, _)| b == hop).map(|&(_, w)| w).min()?;
        Some((NodeId(hop), w as Seconds))
    }

    /// Nearest virtual stop by travel time, lowest id on ties.
    pub fn snap_to_stop(&self, node: NodeId) -> Result<NodeId, NetError> {
        if self.is_stop(node) {
            return Ok(node);
        }
        self.stops
            .iter()
            .enumerate()
            .filter_map(|(k, &s)| {
                let t = self.to_stop[k][node.index()];
                (t != UNREACHABLE).then_some((t, s))
            })
            .min()
            .map(|(_, s)| s)
            .ok_or_else(|| NetError::Unreachable { from: self.label(node), to: self.label(self.stops[0]) })
    }

    fn dijkstra_pair(&self, from: NodeId, to: NodeId) -> u32 {
        let mut dist = vec![UNREACHABLE; self.num_nodes()];
        let mut heap = BinaryHeap::new();
        dist[from.index()] = 0;
        heap.push(Reverse((0u32, from.0)));
        while let Some(Reverse((d, u))) = heap.pop() {
            if u == to.0 {
                return d;
            }
            if d > dist[u as usize] {
                continue;
            }
            for &(v, w) in &self.out_edges[u as usize] {
                let nd = d.saturating_add(w);
                if nd < dist[v as usize] {
                    dist[v as usize] = nd;
                    heap.push(Reverse((nd, v)));
                }
            }
        }
        UNREACHABLE
    }

    /// Writes the node file in the format [`RoadNetwork::load`] reads.
    pub fn write_nodes<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["node_id", "lat", "lon", "zone_id", "is_stop"])?;
        for node in self.nodes() {
            let (lat, lon) = match self.coords(node) {
                Some((a, b)) => (a.to_string(), b.to_string()),
                None => (String::new(), String::new()),
            };
            out.write_record([
                self.label(node).to_string(),
                lat,
                lon,
                self.zone_of(node).to_string(),
                u8::from(self.is_stop(node)).to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_edges<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["from_node", "to_node", "travel_time_s"])?;
        for (a, b, t) in self.edges() {
            out.write_record([self.label(a).to_string(), self.label(b).to_string(), t.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Shortest times from every node to `target` plus the successor tree.
fn reverse_dijkstra(in_edges: &[Vec<(u32, u32)>], target: NodeId) -> (Vec<u32>, Vec<u32>) {
    let n = in_edges.len();
    let mut dist = vec![UNREACHABLE; n];
    let mut hop = vec![NO_HOP; n];
    let mut heap = BinaryHeap::new();
    dist[target.index()] = 0;
    heap.push(Reverse((0u32, target.0)));
    while let Some(Reverse((d, v))) = heap.pop() {
        if d > dist[v as usize] {
            continue;
        }
        for &(u, w) in &in_edges[v as usize] {
            let nd = d.saturating_add(w);
            let slot = u as usize;
            if nd < dist[slot] || (nd == dist[slot] && v < hop[slot]) {
                if nd < dist[slot] {
                    heap.push(Reverse((nd, u)));
                }
                dist[slot] = nd;
                hop[slot] = v;
            }
        }
    }
    (dist, hop)
}

fn open(path: &Path) -> Result<std::fs::File, NetError> {
    std::fs::File::open(path).map_err(|source| NetError::Io { path: path.display().to_string(), source })
}

#[derive(Deserialize)]
struct RawNode {
    node_id: u64,
    #[serde(default)]
    lat: Option<f64>,
    #[serde(default)]
    lon: Option<f64>,
    zone_id: usize,
    is_stop: String,
}

#[derive(Deserialize)]
struct RawEdge {
    from_node: u64,
    to_node: u64,
    travel_time_s: f64,
}

fn parse_flag(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "y" => Some(true),
        "0" | "false" | "no" | "n" | "" => Some(false),
        _ => None,
    }
}

fn csv_line(err: &csv::Error, fallback: u64) -> u64 {
    err.position().map_or(fallback, |p| p.line())
}

/// Parses a node CSV (`node_id,lat,lon,zone_id,is_stop`).
pub fn read_nodes<R: Read>(r: R, name: &str) -> Result<Vec<NodeRecord>, NetError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<RawNode>().enumerate() {
        let line = i as u64 + 2;
        let raw =
            row.map_err(|e| NetError::Parse { file: name.to_string(), line: csv_line(&e, line), msg: e.to_string() })?;
        let is_stop = parse_flag(&raw.is_stop).ok_or_else(|| NetError::Parse {
            file: name.to_string(),
            line,
            msg: format!("is_stop must be 0/1/true/false, got {:?}", raw.is_stop),
        })?;
        out.push(NodeRecord { id: raw.node_id, lat: raw.lat, lon: raw.lon, zone: raw.zone_id, is_stop });
    }
    Ok(out)
}

/// Parses an edge CSV (`from_node,to_node,travel_time_s`).
pub fn read_edges<R: Read>(r: R, name: &str) -> Result<Vec<EdgeRecord>, NetError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<RawEdge>().enumerate() {
        let line = i as u64 + 2;
        let raw =
            row.map_err(|e| NetError::Parse { file: name.to_string(), line: csv_line(&e, line), msg: e.to_string() })?;
        if !(raw.travel_time_s > 0.0) {
            return Err(NetError::Parse {
                file: name.to_string(),
                line,
                msg: format!("travel_time_s must be positive, got {}", raw.travel_time_s),
            });
        }
        out.push(EdgeRecord { from: raw.from_node, to: raw.to_node, travel_time: raw.travel_time_s });
    }
    Ok(out)
}

/// Spatiotemporal state index `(time period, zone)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct State {
    pub time: usize,
    pub zone: ZoneId,
}

impl State {
    pub fn new(time: usize, zone: ZoneId) -> Self {
        State { time, zone }
    }
}

/// Aggregation of the simulation clock into periods and of nodes into zones.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpaceTimeGrid {
    pub period_seconds: Seconds,
    pub num_periods: usize,
    pub num_zones: usize,
}

impl SpaceTimeGrid {
    pub fn new(period_seconds: Seconds, num_periods: usize, num_zones: usize) -> Self {
        assert!(period_seconds > 0, "period must be positive");
        assert!(num_periods > 0, "need at least one period");
        SpaceTimeGrid { period_seconds, num_periods, num_zones }
    }

    /// Default 5-minute periods over a 24 h day.
    pub fn daily(num_zones: usize) -> Self {
        Self::new(300, 288, num_zones)
    }

    pub fn day_length(&self) -> Seconds {
        self.period_seconds * self.num_periods as Seconds
    }

    pub fn num_states(&self) -> usize {
        self.num_periods * self.num_zones
    }

    pub fn time_index(&self, sim_time: Seconds) -> usize {
        debug_assert!(sim_time >= 0);
        ((sim_time.max(0) / self.period_seconds) as usize) % self.num_periods
    }

    pub fn state_of(&self, sim_time: Seconds, node: NodeId, net: &RoadNetwork) -> State {
        State { time: self.time_index(sim_time), zone: net.zone_of(node) }
    }

    /// Whole periods between `now` and `later`, floored, never negative.
    pub fn periods_between(&self, now: Seconds, later: Seconds) -> u32 {
        ((later - now).max(0) / self.period_seconds) as u32
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: u64, zone: usize, stop: bool) -> NodeRecord {
        NodeRecord { id, lat: None, lon: None, zone, is_stop: stop }
    }

    fn edge(from: u64, to: u64, t: f64) -> EdgeRecord {
        EdgeRecord { from, to, travel_time: t }
    }

    fn triangle() -> RoadNetwork {
        // A=1, B=2, C=3
        RoadNetwork::new(
            vec![node(1, 0, true), node(2, 0, true), node(3, 1, true)],
            vec![edge(1, 2, 60.0), edge(2, 3, 60.0), edge(1, 3, 150.0), edge(3, 1, 60.0)],
        )
        .unwrap()
    }

    #[test]
    fn single_edge_and_identity() {
        let net =
            RoadNetwork::new(vec![node(10, 0, true), node(20, 0, true)], vec![edge(10, 20, 60.0), edge(20, 10, 60.0)])
                .unwrap();
        let (a, b) = (net.node(10).unwrap(), net.node(20).unwrap());
        assert_eq!(net.shortest_time(a, b).unwrap(), 60);
        assert_eq!(net.shortest_time(a, a).unwrap(), 0);
    }

    #[test]
    fn triangle_prefers_two_hop_path() {
        let net = triangle();
        let (a, c) = (net.node(1).unwrap(), net.node(3).unwrap());
        assert_eq!(net.shortest_time(a, c).unwrap(), 120);
        assert_eq!(net.next_hop(a, c).unwrap(), (net.node(2).unwrap(), 60));
    }

    #[test]
    fn unreachable_non_stop_target() {
        let net = RoadNetwork::new(vec![node(1, 0, true), node(2, 0, false)], vec![edge(2, 1, 10.0)]).unwrap();
        let err = net.shortest_time(net.node(1).unwrap(), net.node(2).unwrap()).unwrap_err();
        assert!(matches!(err, NetError::Unreachable { from: 1, to: 2 }));
    }

    #[test]
    fn rejects_disconnected_stops() {
        let err = RoadNetwork::new(vec![node(1, 0, true), node(2, 0, true)], vec![edge(1, 2, 5.0)]).unwrap_err();
        assert!(matches!(err, NetError::NotStronglyConnected { .. }));
    }

    #[test]
    fn rejects_dangling_edge_and_bad_weight() {
        let err = RoadNetwork::new(vec![node(1, 0, true)], vec![edge(1, 9, 5.0)]).unwrap_err();
        assert!(matches!(err, NetError::DanglingEdge { from: 1, to: 9 }));
        let err = RoadNetwork::new(vec![node(1, 0, true), node(2, 0, true)], vec![edge(1, 2, 0.0)]).unwrap_err();
        assert!(matches!(err, NetError::BadWeight { .. }));
    }

    #[test]
    fn snap_prefers_nearest_then_lowest_id() {
        // hub 100 is not a stop; stops 3 and 7 both 120 s away; 5 at 60 s from node 200, 2 at 90 s.
        let nodes = vec![
            node(2, 0, true),
            node(3, 0, true),
            node(5, 0, true),
            node(7, 0, true),
            node(100, 0, false),
            node(200, 0, false),
        ];
        let mut edges = vec![edge(100, 7, 120.0), edge(100, 3, 120.0), edge(200, 5, 60.0), edge(200, 2, 90.0)];
        // ring over the stops so they are strongly connected
        for (a, b) in [(2, 3), (3, 5), (5, 7), (7, 2), (7, 100), (7, 200)] {
            edges.push(edge(a, b, 500.0));
        }
        let net = RoadNetwork::new(nodes, edges).unwrap();
        assert_eq!(net.label(net.snap_to_stop(net.node(100).unwrap()).unwrap()), 3);
        assert_eq!(net.label(net.snap_to_stop(net.node(200).unwrap()).unwrap()), 5);
        let s = net.node(7).unwrap();
        assert_eq!(net.snap_to_stop(s).unwrap(), s);
    }

    #[test]
    fn state_of_arithmetic() {
        let nodes = (0..13).map(|i| node(i, i as usize, i == 12)).collect::<Vec<_>>();
        let edges = (0..12).map(|i| edge(i, 12, 1.0)).collect::<Vec<_>>();
        let net = RoadNetwork::new(nodes, edges).unwrap();
        let grid = SpaceTimeGrid::daily(net.num_zones());
        let z12 = net.node(12).unwrap();
        assert_eq!(grid.state_of(330, z12, &net), State::new(1, 12));
        assert_eq!(grid.state_of(0, z12, &net).time, 0);
        assert_eq!(grid.state_of(86_399, z12, &net).time, 287);
        assert_eq!(grid.state_of(86_400, z12, &net).time, 0);
        assert_eq!(grid.periods_between(0, 660), 2);
        assert_eq!(grid.periods_between(500, 100), 0);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let data = "node_id,lat,lon,zone_id,is_stop\n1,,,0,1\n2,,,zero,1\n";
        let err = read_nodes(data.as_bytes(), "nodes.csv").unwrap_err();
        match err {
            NetError::Parse { file, line, .. } => {
                assert_eq!(file, "nodes.csv");
                assert_eq!(line, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
        let data = "from_node,to_node,travel_time_s\n1,2,10\n2,1,-4\n";
        let err = read_edges(data.as_bytes(), "edges.csv").unwrap_err();
        assert!(matches!(err, NetError::Parse { line: 3, .. }));
    }

    #[test]
    fn csv_roundtrip() {
        let net = triangle();
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        net.write_nodes(&mut nodes).unwrap();
        net.write_edges(&mut edges).unwrap();
        let back =
            RoadNetwork::new(read_nodes(nodes.as_slice(), "n").unwrap(), read_edges(edges.as_slice(), "e").unwrap())
                .unwrap();
        assert_eq!(back.num_nodes(), 3);
        let (a, c) = (back.node(1).unwrap(), back.node(3).unwrap());
        assert_eq!(back.shortest_time(a, c).unwrap(), 120);
    }
}
