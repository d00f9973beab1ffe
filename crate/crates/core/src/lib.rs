//! Ride-pooling fleet simulation with learned spatiotemporal state values.
//!
//! * [`netgraph`] road network, travel times and the (period, zone) grid
//! * [`fleetsim`] the tick-driven simulator and its policy hooks
//! * [`myopic`] route cost and the cost-minimizing matcher
//! * [`learner`] n-step TD evaluation of vehicle states
//! * [`planner`] the value-aware matcher
//! * [`rebalance`] idle-vehicle repositioning
//! * [`ingest`] trip files, synthetic demand and run configuration
//! * [`report`] metrics and comparison tables

pub mod fleetsim;
pub mod ingest;
pub mod learner;
pub mod myopic;
pub mod netgraph;
pub mod planner;
pub mod rebalance;
pub mod report;
pub mod scenario;

pub use fleetsim::{
    run, seeded_rng, DispatchContext, Insertion, Matcher, Rebalancer, Relocation, Request, RequestId, RequestStatus,
    SimConfig, SimError, SimOutcome, SimRng, VehicleId, VehicleSchedule,
};
pub use ingest::{Policy, RebalancerKind, RunConfig};
pub use learner::{LearnerConfig, StateValueTable};
pub use myopic::MyopicMatcher;
pub use netgraph::{NodeId, RoadNetwork, Seconds, SpaceTimeGrid, State, ZoneId};
pub use planner::{NonMyopicMatcher, PlannerConfig};
pub use rebalance::{RejectedChase, ValueRebalancer};
pub use report::MetricsSummary;
