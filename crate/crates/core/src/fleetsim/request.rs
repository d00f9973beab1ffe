use std::fmt;

use super::SimConfig;
use crate::netgraph::{NetError, NodeId, RoadNetwork, Seconds};

pub type RequestId = usize;
pub type VehicleId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RequestStatus {
    Pending,
    Assigned,
    Onboard,
    Completed,
    Rejected,
}

impl RequestStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RequestStatus::Pending => "pending",
            RequestStatus::Assigned => "assigned",
            RequestStatus::Onboard => "onboard",
            RequestStatus::Completed => "completed",
            RequestStatus::Rejected => "rejected",
        }
    }

    /// Whether `self -> next` is a legal lifecycle step.
    pub fn can_become(self, next: RequestStatus) -> bool {
        use RequestStatus::*;
        matches!((self, next), (Pending, Assigned) | (Assigned, Onboard) | (Onboard, Completed) | (Pending, Rejected))
    }
}

impl fmt::Display for RequestStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A single-passenger trip, or a relocation order when `is_rebalancing` is set.
#[derive(Clone, Debug, PartialEq)]
pub struct Request {
    pub id: RequestId,
    pub submission_time: Seconds,
    pub origin: NodeId,
    pub dest: NodeId,
    pub status: RequestStatus,
    pub pickup_time: Option<Seconds>,
    pub dropoff_time: Option<Seconds>,
    pub latest_dropoff: Seconds,
    pub is_rebalancing: bool,
    pub vehicle: Option<VehicleId>,
}

impl Request {
    /// A fresh pending passenger request; `latest_dropoff` is filled in by the engine.
    pub fn new(id: RequestId, submission_time: Seconds, origin: NodeId, dest: NodeId) -> Self {
        Request {
            id,
            submission_time,
            origin,
            dest,
            status: RequestStatus::Pending,
            pickup_time: None,
            dropoff_time: None,
            latest_dropoff: Seconds::MAX,
            is_rebalancing: false,
            vehicle: None,
        }
    }

    pub fn relocation(submission_time: Seconds, origin: NodeId, dest: NodeId) -> Self {
        Request { is_rebalancing: true, ..Request::new(usize::MAX, submission_time, origin, dest) }
    }

    pub fn wait_time(&self) -> Option<Seconds> {
        self.pickup_time.map(|p| p - self.submission_time)
    }

    pub fn in_vehicle_time(&self) -> Option<Seconds> {
        Some(self.dropoff_time? - self.pickup_time?)
    }
}

/// Latest admissible drop-off: submission + max wait + detour factor x direct trip.
pub fn latest_dropoff_of(req: &Request, net: &RoadNetwork, cfg: &SimConfig) -> Result<Seconds, NetError> {
    let direct = net.shortest_time(req.origin, req.dest)?;
    Ok(req.submission_time + cfg.w_max + (cfg.detour_factor * direct as f64).floor() as Seconds)
}
