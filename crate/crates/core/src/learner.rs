//! Offline policy evaluation: per-vehicle (state, reward) episodes from a
//! simulated day, n-step returns and incremental-mean state values.
//!
//! Episode convention: `episode[t]` holds the state at the start of period
//! `t` together with the number of requests assigned to the vehicle during
//! that period. The n-step return from period `t` is
//!
//! ```text
//! G_t = sum_{i=1..m} gamma^(i-1) * episode[t+i-1].reward  +  gamma^n * V(episode[t+n].state)
//! ```
//!
//! with `m = min(n, len - t)`; the bootstrap term exists only while
//! `t + n < len`, so the return never wraps into the next day.

use std::io::{Read, Write};

use serde::Deserialize;
use thiserror::Error;

use crate::fleetsim::{self, Request, RequestStatus, SimConfig, SimError, SimOutcome};
use crate::myopic::MyopicMatcher;
use crate::netgraph::{RoadNetwork, SpaceTimeGrid, State};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("day {day}: {rejected} requests rejected while generating episodes; raise the fleet size")]
    RejectionDuringLearning { day: usize, rejected: usize },
    #[error("value table line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LearnerConfig {
    pub n: usize,
    pub gamma: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig { n: 12, gamma: 0.9 }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n == 0 {
            return Err("n must be at least 1".into());
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err("gamma must lie in (0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EpisodeStep {
    pub state: State,
    pub reward: u32,
}

/// One episode per vehicle.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EpisodeLog {
    pub episodes: Vec<Vec<EpisodeStep>>,
}

/// Learned V(t, z) with visit counts, row-major by time index.
#[derive(Clone, Debug, PartialEq)]
pub struct StateValueTable {
    num_periods: usize,
    num_zones: usize,
    values: Vec<f64>,
    counts: Vec<u64>,
}

impl StateValueTable {
    pub fn new(num_periods: usize, num_zones: usize) -> Self {
        StateValueTable {
            num_periods,
            num_zones,
            values: vec![0.0; num_periods * num_zones],
            counts: vec![0; num_periods * num_zones],
        }
    }

    pub fn for_grid(grid: &SpaceTimeGrid) -> Self {
        Self::new(grid.num_periods, grid.num_zones)
    }

    pub fn num_periods(&self) -> usize {
        self.num_periods
    }

    pub fn num_zones(&self) -> usize {
        self.num_zones
    }

    #[inline]
    fn slot(&self, s: State) -> usize {
        assert!(s.time < self.num_periods && s.zone < self.num_zones, "state {s:?} outside table");
        s.time * self.num_zones + s.zone
    }

    #[inline]
    pub fn value(&self, s: State) -> f64 {
        self.values[self.slot(s)]
    }

    pub fn count(&self, s: State) -> u64 {
        self.counts[self.slot(s)]
    }

    /// Values of every zone at one time index.
    pub fn row(&self, time: usize) -> &[f64] {
        &self.values[time * self.num_zones..(time + 1) * self.num_zones]
    }

    pub fn set(&mut self, s: State, value: f64, count: u64) {
        let i = self.slot(s);
        self.values[i] = value;
        self.counts[i] = count;
    }

    /// Adds `delta` to every value; for invariance checks.
    pub fn shift(&mut self, delta: f64) {
        self.values.iter_mut().for_each(|v| *v += delta);
    }

    pub fn states(&self) -> impl Iterator<Item = State> + '_ {
        (0..self.num_periods).flat_map(move |t| (0..self.num_zones).map(move |z| State::new(t, z)))
    }

    /// Incremental mean: `N += 1; V += (G - V) / N`.
    pub fn update(&mut self, s: State, ret: f64) {
        let i = self.slot(s);
        self.counts[i] += 1;
        self.values[i] += (ret - self.values[i]) / self.counts[i] as f64;
    }

    /// `time_index,zone_id,value,count`, one row per visited state.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["time_index", "zone_id", "value", "count"])?;
        for s in self.states() {
            let n = self.count(s);
            if n > 0 {
                wtr.write_record([s.time.to_string(), s.zone.to_string(), self.value(s).to_string(), n.to_string()])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads a table written by [`StateValueTable::write_csv`]; absent states are zero.
    pub fn read_csv<R: Read>(r: R, num_periods: usize, num_zones: usize) -> Result<Self, LearnError> {
        #[derive(Deserialize)]
        struct Row {
            time_index: usize,
            zone_id: usize,
            value: f64,
            count: u64,
        }
        let mut table = Self::new(num_periods, num_zones);
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let line = i as u64 + 2;
            let row = row.map_err(|e| LearnError::Parse { line, msg: e.to_string() })?;
            if row.time_index >= num_periods || row.zone_id >= num_zones {
                return Err(LearnError::Parse {
                    line,
                    msg: format!("state ({}, {}) outside {num_periods}x{num_zones}", row.time_index, row.zone_id),
                });
            }
            if !row.value.is_finite() {
                return Err(LearnError::Parse { line, msg: "value is not finite".into() });
            }
            table.set(State::new(row.time_index, row.zone_id), row.value, row.count);
        }
        Ok(table)
    }
}

/// Aggregates a run's tick-level trajectory into per-vehicle period episodes.
///
/// The state zone is the vehicle's zone at the first tick of the period and
/// the reward sums new passenger assignments over the period's ticks.
pub fn extract_episodes(outcome: &SimOutcome, grid: &SpaceTimeGrid, net: &RoadNetwork) -> EpisodeLog {
    let traj = &outcome.trajectory;
    assert!(grid.period_seconds % traj.tick_seconds == 0, "period must be a whole number of ticks");
    let per_period = (grid.period_seconds / traj.tick_seconds) as usize;
    let ticks = traj.num_ticks();
    let periods = grid.num_periods.min(ticks.div_ceil(per_period));
    let episodes = (0..traj.fleet_size)
        .map(|v| {
            (0..periods)
                .map(|t| {
                    let first = t * per_period;
                    let last = (first + per_period).min(ticks);
                    let reward = (first..last).map(|k| traj.assignments(k, v) as u32).sum();
                    EpisodeStep { state: State::new(t, net.zone_of(traj.node(first, v))), reward }
                })
                .collect()
        })
        .collect();
    EpisodeLog { episodes }
}

/// n-step return from position `t` of an episode.
pub fn nstep_return(episode: &[EpisodeStep], t: usize, table: &StateValueTable, cfg: &LearnerConfig) -> f64 {
    let len = episode.len();
    assert!(t < len, "t={t} outside episode of length {len}");
    let steps = cfg.n.min(len - t);
    let mut ret = 0.0;
    let mut discount = 1.0;
    for step in &episode[t..t + steps] {
        ret += discount * step.reward as f64;
        discount *= cfg.gamma;
    }
    if t + cfg.n < len {
        ret += cfg.gamma.powi(cfg.n as i32) * table.value(episode[t + cfg.n].state);
    }
    ret
}

/// Sweeps time indices in order, every vehicle at each index, updating the
/// table in place.
pub fn learn_from_episodes(table: &mut StateValueTable, log: &EpisodeLog, cfg: &LearnerConfig) {
    let horizon = log.episodes.iter().map(Vec::len).max().unwrap_or(0);
    for t in 0..horizon {
        for ep in &log.episodes {
            if t < ep.len() {
                let ret = nstep_return(ep, t, table, cfg);
                table.update(ep[t].state, ret);
            }
        }
    }
}

/// Per-day learning summary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DayReport {
    pub day: usize,
    pub requests: usize,
    pub rejected: usize,
    pub total_reward: u64,
}

/// Simulates one day under the myopic policy and folds its episodes into
/// `table`. Fails without touching the table if any request was rejected.
pub fn learn_day(
    table: &mut StateValueTable,
    day: usize,
    demand: Vec<Request>,
    net: &RoadNetwork,
    sim: &SimConfig,
    grid: &SpaceTimeGrid,
    cfg: &LearnerConfig,
) -> Result<DayReport, LearnError> {
    let requests = demand.len();
    let outcome = fleetsim::run(net, sim, demand, &mut MyopicMatcher, None)?;
    let rejected = outcome.count(RequestStatus::Rejected);
    if rejected > 0 {
        return Err(LearnError::RejectionDuringLearning { day, rejected });
    }
    let log = extract_episodes(&outcome, grid, net);
    let total_reward = log.episodes.iter().flatten().map(|s| s.reward as u64).sum();
    learn_from_episodes(table, &log, cfg);
    Ok(DayReport { day, requests, rejected, total_reward })
}

/// Learns over several days in order, values carrying over between days.
pub fn learn(
    days: Vec<Vec<Request>>,
    net: &RoadNetwork,
    sim: &SimConfig,
    grid: &SpaceTimeGrid,
    cfg: &LearnerConfig,
) -> Result<StateValueTable, LearnError> {
    let mut table = StateValueTable::for_grid(grid);
    for (day, demand) in days.into_iter().enumerate() {
        learn_day(&mut table, day, demand, net, sim, grid, cfg)?;
    }
    Ok(table)
}
