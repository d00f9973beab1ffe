use serde::{Deserialize, Serialize};

use super::SimError;
use crate::netgraph::{Seconds, ZoneId};

/// Engine parameters. Defaults describe a city-scale fleet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub tick_seconds: Seconds,
    pub w_max: Seconds,
    pub capacity: u32,
    /// Weight of operator time against passenger time in the route cost.
    pub theta: f64,
    /// Wait-time multiplier in the route cost.
    pub alpha: f64,
    pub dwell_seconds: Seconds,
    pub detour_factor: f64,
    pub fleet_size: usize,
    pub rng_seed: u64,
    pub day_length_seconds: Seconds,
    /// Maximum number of vehicles offered to the matcher per request.
    pub candidate_cap: usize,
    /// Keep ticking after the day ends until every accepted passenger is delivered.
    pub drain: bool,
    /// Place the whole fleet in one zone instead of uniformly over the network.
    pub initial_zone: Option<ZoneId>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            tick_seconds: 30,
            w_max: 600,
            capacity: 6,
            theta: 0.5,
            alpha: 1.4,
            dwell_seconds: 0,
            detour_factor: 2.0,
            fleet_size: 1500,
            rng_seed: 0,
            day_length_seconds: 86_400,
            candidate_cap: 30,
            drain: true,
            initial_zone: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: &str| Err(SimError::Config(msg.to_string()));
        if self.tick_seconds <= 0 || self.w_max <= 0 || self.day_length_seconds <= 0 {
            return bad("tick_seconds, w_max and day_length_seconds must be positive");
        }
        if self.dwell_seconds < 0 {
            return bad("dwell_seconds must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return bad("theta must lie in [0, 1]");
        }
        if !(self.alpha >= 1.0) {
            return bad("alpha must be >= 1");
        }
        if !(self.detour_factor >= 1.0) {
            return bad("detour_factor must be >= 1");
        }
        if self.capacity == 0 {
            return bad("capacity must be positive");
        }
        if self.candidate_cap == 0 {
            return bad("candidate_cap must be positive");
        }
        if self.day_length_seconds % self.tick_seconds != 0 {
            return bad("day_length_seconds must be a multiple of tick_seconds");
        }
        Ok(())
    }

    pub fn day_ticks(&self) -> usize {
        (self.day_length_seconds / self.tick_seconds) as usize
    }
}
