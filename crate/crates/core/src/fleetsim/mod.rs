//! Discrete-time ride-pooling simulation: request lifecycle, vehicle
//! movement along schedules, feasibility enforcement and policy hooks.
//!
//! Each tick the engine
//! 1. moves vehicles along their schedules, serving stops whose time has come,
//! 2. releases newly submitted requests into the pending queue,
//! 3. offers every pending request to the [`Matcher`] in submission order,
//!    rejecting those whose wait budget cannot survive another tick,
//! 4. runs the [`Rebalancer`] on its own cadence,
//! 5. records vehicle positions, new assignments and a status tally.

mod config;
mod engine;
pub mod log;
mod request;
mod schedule;

use thiserror::Error;

use crate::netgraph::{NetError, Seconds};

pub use config::SimConfig;
pub use engine::{
    run, seeded_rng, DispatchContext, Matcher, Rebalancer, Relocation, RelocationRecord, SimOutcome, SimRng,
    StatusTally, Trajectory, DEMAND_STREAM, PLACEMENT_STREAM, REBALANCE_STREAM,
};
pub use request::{latest_dropoff_of, Request, RequestId, RequestStatus, VehicleId};
pub use schedule::{
    candidate_vehicles, planning_base, replan, try_insert, Infeasible, Insertion, Stop, StopKind, VehicleSchedule,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid demand: {0}")]
    Demand(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("invariant violated at t={time}: {msg}")]
    Invariant { time: Seconds, msg: String },
}
