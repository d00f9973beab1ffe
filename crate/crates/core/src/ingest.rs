//! Trip files, pulse-based synthetic demand and the run configuration file.

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fleetsim::{Request, SimConfig};
use crate::learner::LearnerConfig;
use crate::netgraph::{NetError, RoadNetwork, Seconds, SpaceTimeGrid, ZoneId};
use crate::planner::PlannerConfig;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{file}: {}", join_lines(.errors))]
    Parse { file: String, errors: Vec<(u64, String)> },
    #[error("{file} line {line}: {msg}")]
    Unknown { file: String, line: u64, msg: String },
    #[error("{file}: {msg}")]
    Config { file: String, msg: String },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn join_lines(errors: &[(u64, String)]) -> String {
    errors.iter().map(|(l, m)| format!("line {l}: {m}")).collect::<Vec<_>>().join("; ")
}

pub(crate) fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io { path: path.to_owned(), source })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Endpoint {
    Node(u64),
    Zone(ZoneId),
}

impl FromStr for Endpoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, id) =
            s.trim().split_once(':').ok_or_else(|| format!("expected node:<id> or zone:<id>, got {s:?}"))?;
        let bad = |_| format!("bad id in {s:?}");
        match kind {
            "node" => id.parse().map(Endpoint::Node).map_err(bad),
            "zone" => id.parse().map(Endpoint::Zone).map_err(bad),
            _ => Err(format!("unknown endpoint kind {kind:?}")),
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Node(id) => write!(f, "node:{id}"),
            Endpoint::Zone(z) => write!(f, "zone:{z}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TripRecord {
    pub submission: Seconds,
    pub origin: Endpoint,
    pub dest: Endpoint,
}

/// Parses a `submission_s,origin,dest` trip file. Malformed lines are
/// collected and reported together.
pub fn read_trip_records<R: Read>(
    r: R,
    file: &str,
    day_length: Seconds,
) -> Result<Vec<(u64, TripRecord)>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["submission_s", "origin", "dest"] {
        return Err(IngestError::Parse {
            file: file.into(),
            errors: vec![(1, "expected header submission_s,origin,dest".into())],
        });
    }
    let mut out = Vec::new();
    let mut errors = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let parsed = rec.map_err(|e| e.to_string()).and_then(|rec| {
            if rec.len() != 3 {
                return Err(format!("expected 3 fields, found {}", rec.len()));
            }
            let submission: Seconds = rec[0].parse().map_err(|_| format!("bad submission time {:?}", &rec[0]))?;
            if !(0..day_length).contains(&submission) {
                return Err(format!("submission time {submission} outside [0, {day_length})"));
            }
            Ok(TripRecord { submission, origin: rec[1].parse()?, dest: rec[2].parse()? })
        });
        match parsed {
            Ok(t) => out.push((line, t)),
            Err(msg) => errors.push((line, msg)),
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(IngestError::Parse { file: file.into(), errors })
    }
}

pub fn write_trip_records<W: Write>(trips: &[TripRecord], w: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["submission_s", "origin", "dest"])?;
    for t in trips {
        wtr.write_record([t.submission.to_string(), t.origin.to_string(), t.dest.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Resolves endpoints to virtual stops (nodes snapped, zones expanded to a
/// uniformly drawn stop), sorts by submission time and numbers the requests.
pub fn resolve_trips<G: Rng>(
    trips: &[(u64, TripRecord)],
    file: &str,
    net: &RoadNetwork,
    rng: &mut G,
) -> Result<Vec<Request>, IngestError> {
    let mut resolve = |line: u64, e: Endpoint| match e {
        Endpoint::Node(label) => {
            let node = net.node(label).map_err(|_| IngestError::Unknown {
                file: file.into(),
                line,
                msg: format!("unknown node {label}"),
            })?;
            Ok(net.snap_to_stop(node)?)
        }
        Endpoint::Zone(z) => {
            let stops = if z < net.num_zones() { net.stops_in_zone(z) } else { &[] };
            stops.choose(rng).copied().ok_or_else(|| IngestError::Unknown {
                file: file.into(),
                line,
                msg: format!("zone {z} has no virtual stops"),
            })
        }
    };
    let mut out = Vec::with_capacity(trips.len());
    for &(line, t) in trips {
        let origin = resolve(line, t.origin)?;
        let dest = resolve(line, t.dest)?;
        out.push(Request::new(0, t.submission, origin, dest));
    }
    out.sort_by_key(|r| r.submission_time);
    for (i, r) in out.iter_mut().enumerate() {
        r.id = i;
    }
    Ok(out)
}

pub fn load_trips<G: Rng>(
    path: &Path,
    net: &RoadNetwork,
    day_length: Seconds,
    rng: &mut G,
) -> Result<Vec<Request>, IngestError> {
    let name = path.display().to_string();
    let records = read_trip_records(open(path)?, &name, day_length)?;
    resolve_trips(&records, &name, net, rng)
}

/// Writes resolved requests back as node-form trips.
pub fn write_requests_as_trips<W: Write>(requests: &[Request], net: &RoadNetwork, w: W) -> csv::Result<()> {
    let trips: Vec<TripRecord> = requests
        .iter()
        .map(|r| TripRecord {
            submission: r.submission_time,
            origin: Endpoint::Node(net.label(r.origin)),
            dest: Endpoint::Node(net.label(r.dest)),
        })
        .collect();
    write_trip_records(&trips, w)
}

/// `count` trips from one zone to another submitted within `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pulse {
    pub start_s: Seconds,
    pub end_s: Seconds,
    pub origin_zone: ZoneId,
    pub dest_zone: ZoneId,
    pub count: usize,
}

pub fn read_pulses<R: Read>(r: R, file: &str) -> Result<Vec<Pulse>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let mut out = Vec::new();
    let mut errors = Vec::new();
    for (i, p) in rdr.deserialize::<Pulse>().enumerate() {
        let line = i as u64 + 2;
        match p {
            Ok(p) if p.start_s < 0 || p.end_s <= p.start_s => errors.push((line, "empty or negative window".into())),
            Ok(p) => out.push(p),
            Err(e) => errors.push((line, e.to_string())),
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(IngestError::Parse { file: file.into(), errors })
    }
}

pub fn write_pulses<W: Write>(pulses: &[Pulse], w: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for p in pulses {
        wtr.serialize(p)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Zone-form trips with submission times drawn uniformly inside each pulse
/// window (a Poisson process conditioned on the count), sorted by time.
pub fn synth_demand<G: Rng>(pulses: &[Pulse], rng: &mut G) -> Vec<TripRecord> {
    let mut trips = Vec::with_capacity(pulses.iter().map(|p| p.count).sum());
    for p in pulses {
        for _ in 0..p.count {
            trips.push(TripRecord {
                submission: rng.gen_range(p.start_s..p.end_s),
                origin: Endpoint::Zone(p.origin_zone),
                dest: Endpoint::Zone(p.dest_zone),
            });
        }
    }
    trips.sort_by_key(|t| t.submission);
    trips
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    #[default]
    Myopic,
    Nonmyopic,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RebalancerKind {
    #[default]
    None,
    Value,
    RejectedChase,
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "myopic" => Ok(Policy::Myopic),
            "nonmyopic" => Ok(Policy::Nonmyopic),
            _ => Err(format!("unknown policy {s:?} (myopic, nonmyopic)")),
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Myopic => "myopic",
            Policy::Nonmyopic => "nonmyopic",
        })
    }
}

impl FromStr for RebalancerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(RebalancerKind::None),
            "value" => Ok(RebalancerKind::Value),
            "rejected-chase" => Ok(RebalancerKind::RejectedChase),
            _ => Err(format!("unknown rebalancer {s:?} (none, value, rejected-chase)")),
        }
    }
}

impl fmt::Display for RebalancerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RebalancerKind::None => "none",
            RebalancerKind::Value => "value",
            RebalancerKind::RejectedChase => "rejected-chase",
        })
    }
}

/// Everything a run needs, read from a flat TOML file. Paths are relative to
/// the data directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub tick_seconds: Seconds,
    pub w_max: Seconds,
    pub capacity: u32,
    pub theta: f64,
    pub alpha: f64,
    pub dwell_seconds: Seconds,
    pub detour_factor: f64,
    pub fleet_size: usize,
    pub learn_fleet_size: usize,
    pub rng_seed: u64,
    pub day_length_seconds: Seconds,
    pub candidate_cap: usize,
    pub drain: bool,
    pub period_seconds: Seconds,
    pub n_steps: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub policy: Policy,
    pub rebalancer: RebalancerKind,
    pub tau: Seconds,
    pub nodes_file: PathBuf,
    pub edges_file: PathBuf,
    pub value_table: PathBuf,
    pub demand_files: Vec<PathBuf>,
    pub initial_zone: Option<ZoneId>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        let learn = LearnerConfig::default();
        let plan = PlannerConfig::default();
        RunConfig {
            tick_seconds: sim.tick_seconds,
            w_max: sim.w_max,
            capacity: sim.capacity,
            theta: sim.theta,
            alpha: sim.alpha,
            dwell_seconds: sim.dwell_seconds,
            detour_factor: sim.detour_factor,
            fleet_size: sim.fleet_size,
            learn_fleet_size: 7000,
            rng_seed: sim.rng_seed,
            day_length_seconds: sim.day_length_seconds,
            candidate_cap: sim.candidate_cap,
            drain: sim.drain,
            period_seconds: 300,
            n_steps: learn.n,
            gamma: learn.gamma,
            lambda: plan.lambda,
            policy: Policy::Myopic,
            rebalancer: RebalancerKind::None,
            tau: 30,
            nodes_file: "nodes.csv".into(),
            edges_file: "edges.csv".into(),
            value_table: "values.csv".into(),
            demand_files: Vec::new(),
            initial_zone: sim.initial_zone,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, file: &str) -> Result<Self, IngestError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| IngestError::Config { file: file.into(), msg: e.to_string() })?;
        cfg.validate().map_err(|msg| IngestError::Config { file: file.into(), msg })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let mut text = String::new();
        open(path)?.read_to_string(&mut text).map_err(|source| IngestError::Io { path: path.to_owned(), source })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Every key with its default value, in file syntax.
    pub fn default_toml() -> String {
        let mut s = toml::to_string(&RunConfig::default()).expect("defaults serialize");
        s.push_str("# initial_zone = <zone id>  (unset: vehicles start on uniformly random nodes)\n");
        s
    }

    pub fn validate(&self) -> Result<(), String> {
        self.sim().validate().map_err(|e| e.to_string())?;
        self.learner().validate()?;
        self.planner().validate()?;
        if self.tau <= 0 {
            return Err("tau must be positive".into());
        }
        if self.period_seconds <= 0 || self.day_length_seconds % self.period_seconds != 0 {
            return Err("period_seconds must divide day_length_seconds".into());
        }
        if self.period_seconds % self.tick_seconds != 0 {
            return Err("period_seconds must be a multiple of tick_seconds".into());
        }
        Ok(())
    }

    pub fn sim(&self) -> SimConfig {
        SimConfig {
            tick_seconds: self.tick_seconds,
            w_max: self.w_max,
            capacity: self.capacity,
            theta: self.theta,
            alpha: self.alpha,
            dwell_seconds: self.dwell_seconds,
            detour_factor: self.detour_factor,
            fleet_size: self.fleet_size,
            rng_seed: self.rng_seed,
            day_length_seconds: self.day_length_seconds,
            candidate_cap: self.candidate_cap,
            drain: self.drain,
            initial_zone: self.initial_zone,
        }
    }

    pub fn learner(&self) -> LearnerConfig {
        LearnerConfig { n: self.n_steps, gamma: self.gamma }
    }

    pub fn planner(&self) -> PlannerConfig {
        PlannerConfig { gamma: self.gamma, lambda: self.lambda }
    }

    pub fn grid(&self, num_zones: usize) -> SpaceTimeGrid {
        SpaceTimeGrid::new(self.period_seconds, (self.day_length_seconds / self.period_seconds) as usize, num_zones)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::{EdgeRecord, NodeRecord};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Ring of 6 nodes; zone = id / 2; odd ids are not stops except node 5.
    fn ring() -> RoadNetwork {
        let nodes = (0..6u64)
            .map(|id| NodeRecord {
                id: id * 10,
                lat: None,
                lon: None,
                zone: (id / 2) as usize,
                is_stop: id % 2 == 0 || id == 5,
            })
            .collect();
        let edges = (0..6u64).map(|i| EdgeRecord { from: i * 10, to: (i + 1) % 6 * 10, travel_time: 30.0 }).collect();
        RoadNetwork::new(nodes, edges).unwrap()
    }

    #[test]
    fn header_only_is_empty() {
        let recs = read_trip_records("submission_s,origin,dest\n".as_bytes(), "t", 86400).unwrap();
        assert!(recs.is_empty());
    }

    #[test]
    fn zone_endpoints_expand_into_the_zone() {
        let net = ring();
        let recs = read_trip_records("submission_s,origin,dest\n5,zone:1,zone:2\n".as_bytes(), "t", 86400).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let reqs = resolve_trips(&recs, "t", &net, &mut rng).unwrap();
        assert_eq!(reqs.len(), 1);
        assert!(net.stops_in_zone(1).contains(&reqs[0].origin));
        assert!(net.stops_in_zone(2).contains(&reqs[0].dest));
    }

    #[test]
    fn output_sorted_and_numbered() {
        let net = ring();
        let text = "submission_s,origin,dest\n90,node:0,node:20\n10,node:20,node:0\n50,node:40,node:40\n";
        let recs = read_trip_records(text.as_bytes(), "t", 86400).unwrap();
        let reqs = resolve_trips(&recs, "t", &net, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let times: Vec<_> = reqs.iter().map(|r| (r.id, r.submission_time)).collect();
        assert_eq!(times, vec![(0, 10), (1, 50), (2, 90)]);
        assert_eq!(reqs[1].origin, reqs[1].dest);
    }

    #[test]
    fn non_stop_node_is_snapped() {
        let net = ring();
        let recs = read_trip_records("submission_s,origin,dest\n0,node:10,node:0\n".as_bytes(), "t", 86400).unwrap();
        let reqs = resolve_trips(&recs, "t", &net, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(net.label(reqs[0].origin), 20);
    }

    #[test]
    fn parse_errors_collected_with_lines() {
        let text = "submission_s,origin,dest\nx,node:0,node:0\n5,node:0,node:0\n7,town:1,node:0\n99999,node:0,node:0\n";
        let err = read_trip_records(text.as_bytes(), "t.csv", 86400).unwrap_err();
        let IngestError::Parse { errors, .. } = &err else { panic!("{err}") };
        let lines: Vec<u64> = errors.iter().map(|e| e.0).collect();
        assert_eq!(lines, vec![2, 4, 5]);
        assert!(err.to_string().contains("line 4"));
    }

    #[test]
    fn unknown_zone_aborts() {
        let net = ring();
        let recs = read_trip_records("submission_s,origin,dest\n0,zone:9,node:0\n".as_bytes(), "t", 86400).unwrap();
        let err = resolve_trips(&recs, "t", &net, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(matches!(err, IngestError::Unknown { line: 2, .. }));
    }

    #[test]
    fn pulses_exact_counts_sorted_and_seeded() {
        let pulses = [
            Pulse { start_s: 3600, end_s: 7200, origin_zone: 1, dest_zone: 0, count: 40 },
            Pulse { start_s: 0, end_s: 3600, origin_zone: 0, dest_zone: 1, count: 100 },
        ];
        let a = synth_demand(&pulses, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a.len(), 140);
        assert!(a.windows(2).all(|w| w[0].submission <= w[1].submission));
        assert_eq!(a.iter().filter(|t| t.submission < 3600).count(), 100);
        assert_eq!(a, synth_demand(&pulses, &mut ChaCha8Rng::seed_from_u64(4)));
    }

    #[test]
    fn run_config_defaults_and_overrides() {
        let cfg = RunConfig::parse("fleet_size = 700\npolicy = \"nonmyopic\"\nrebalancer = \"rejected-chase\"\n", "c")
            .unwrap();
        assert_eq!(cfg.fleet_size, 700);
        assert_eq!(cfg.policy, Policy::Nonmyopic);
        assert_eq!(cfg.rebalancer, RebalancerKind::RejectedChase);
        assert_eq!((cfg.tau, cfg.lambda, cfg.n_steps), (30, 0.005, 12));
        assert!(RunConfig::parse("flet_size = 1\n", "c").is_err());
        assert!(RunConfig::parse("gamma = 0.0\n", "c").is_err());
        let back = RunConfig::parse(&RunConfig::default_toml(), "c").unwrap();
        assert_eq!(back, RunConfig::default());
    }

    #[test]
    fn endpoint_roundtrip() {
        for s in ["node:17", "zone:3"] {
            assert_eq!(s.parse::<Endpoint>().unwrap().to_string(), s);
        }
        assert!("node:".parse::<Endpoint>().is_err());
    }
}
