use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::schedule::replan;
use super::{Insertion, Request, RequestId, RequestStatus, SimConfig, SimError, StopKind, VehicleId, VehicleSchedule};
use crate::fleetsim::latest_dropoff_of;
use crate::netgraph::{NodeId, RoadNetwork, Seconds, ZoneId};

/// Random stream handed to policies.
pub type SimRng = ChaCha8Rng;

/// Seeded generator on one of several independent streams of `seed`.
pub fn seeded_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream used for initial vehicle placement.
pub const PLACEMENT_STREAM: u64 = 0;
/// Stream handed to the rebalancer.
pub const REBALANCE_STREAM: u64 = 1;
/// First stream used to expand demand files; day `i` uses this plus `i`.
pub const DEMAND_STREAM: u64 = 2;

/// How long past the end of the day the engine keeps delivering riders.
const DRAIN_LIMIT: Seconds = 12 * 3600;

/// Read-only view of the world handed to policy hooks.
#[derive(Clone, Copy)]
pub struct DispatchContext<'a> {
    pub net: &'a RoadNetwork,
    pub cfg: &'a SimConfig,
    pub fleet: &'a [VehicleSchedule],
    pub now: Seconds,
}

/// Chooses a vehicle and insertion for one pending request, or declines.
pub trait Matcher {
    fn name(&self) -> &str;
    fn select(&mut self, ctx: &DispatchContext<'_>, req: &Request) -> Option<Insertion>;
}

/// A planned move of an idle vehicle.
#[derive(Clone, Debug)]
pub struct Relocation {
    pub vehicle: VehicleId,
    pub request: Request,
    pub insertion: Insertion,
    pub from_zone: ZoneId,
    pub to_zone: ZoneId,
    pub delta_from: Option<f64>,
    pub delta_to: Option<f64>,
}

/// Idle-vehicle repositioning hook.
pub trait Rebalancer {
    fn name(&self) -> &str;

    /// Cadence of [`Rebalancer::plan`]; `None` disables periodic planning.
    fn interval(&self) -> Option<Seconds> {
        None
    }

    fn plan(&mut self, _ctx: &DispatchContext<'_>, _rng: &mut SimRng) -> Vec<Relocation> {
        Vec::new()
    }

    fn on_rejection(&mut self, _ctx: &DispatchContext<'_>, _req: &Request, _rng: &mut SimRng) -> Option<Relocation> {
        None
    }
}

/// Per-tick request counts (passengers only).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StatusTally {
    pub time: Seconds,
    pub submitted: usize,
    pub pending: usize,
    pub assigned: usize,
    pub onboard: usize,
    pub completed: usize,
    pub rejected: usize,
}

impl StatusTally {
    pub fn is_conserved(&self) -> bool {
        self.submitted == self.pending + self.assigned + self.onboard + self.completed + self.rejected
    }
}

/// Vehicle node and new assignment count at every tick of the day, tick-major.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub fleet_size: usize,
    pub tick_seconds: Seconds,
    pub nodes: Vec<NodeId>,
    pub new_assignments: Vec<u16>,
}

impl Trajectory {
    pub fn num_ticks(&self) -> usize {
        if self.fleet_size == 0 {
            0
        } else {
            self.nodes.len() / self.fleet_size
        }
    }

    pub fn node(&self, tick: usize, vehicle: VehicleId) -> NodeId {
        self.nodes[tick * self.fleet_size + vehicle]
    }

    pub fn assignments(&self, tick: usize, vehicle: VehicleId) -> u16 {
        self.new_assignments[tick * self.fleet_size + vehicle]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelocationRecord {
    pub time: Seconds,
    pub vehicle: VehicleId,
    pub origin: NodeId,
    pub dest: NodeId,
    pub from_zone: ZoneId,
    pub to_zone: ZoneId,
    pub delta_from: Option<f64>,
    pub delta_to: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOutcome {
    /// Final state of every passenger request, indexed by id.
    pub requests: Vec<Request>,
    pub trajectory: Trajectory,
    pub tallies: Vec<StatusTally>,
    /// Total driven time over the fleet, relocation legs included.
    pub vehicle_seconds: Seconds,
    /// Share of `vehicle_seconds` driven towards relocation stops.
    pub relocation_seconds: Seconds,
    pub relocations: Vec<RelocationRecord>,
    pub end_time: Seconds,
}

impl SimOutcome {
    pub fn count(&self, status: RequestStatus) -> usize {
        self.requests.iter().filter(|r| r.status == status).count()
    }
}

/// Runs one simulated day.
///
/// `demand` must be sorted by submission time with ids `0..n` in that order,
/// and every origin/destination must be a virtual stop.
pub fn run(
    net: &RoadNetwork,
    cfg: &SimConfig,
    demand: Vec<Request>,
    matcher: &mut dyn Matcher,
    mut rebalancer: Option<&mut dyn Rebalancer>,
) -> Result<SimOutcome, SimError> {
    cfg.validate()?;
    let mut engine = Engine::new(net, cfg, demand)?;
    let mut rebalance_rng = seeded_rng(cfg.rng_seed, REBALANCE_STREAM);

    let day_ticks = cfg.day_ticks();
    let interval = rebalancer.as_ref().and_then(|r| r.interval());
    if let Some(tau) = interval {
        if tau <= 0 {
            return Err(SimError::Config("rebalancing interval must be positive".into()));
        }
    }
    let mut tick = 0usize;
    loop {
        let now = tick as Seconds * cfg.tick_seconds;
        let in_day = tick < day_ticks;
        if !in_day && (!cfg.drain || engine.is_drained() || now > cfg.day_length_seconds + DRAIN_LIMIT) {
            break;
        }
        engine.tick_assignments.iter_mut().for_each(|a| *a = 0);
        engine.advance(now)?;
        engine.release(now);
        engine.match_pending(now, matcher, &mut rebalancer, &mut rebalance_rng)?;
        if in_day {
            if let (Some(tau), Some(r)) = (interval, rebalancer.as_deref_mut()) {
                if now % tau == 0 {
                    let plan = r.plan(&engine.context(now), &mut rebalance_rng);
                    for reloc in plan {
                        engine.commit_relocation(reloc, now)?;
                    }
                }
            }
            engine.record_trajectory();
        }
        engine.tally(now)?;
        tick += 1;
    }
    Ok(engine.finish(tick as Seconds * cfg.tick_seconds, day_ticks))
}

struct Engine<'a> {
    net: &'a RoadNetwork,
    cfg: &'a SimConfig,
    fleet: Vec<VehicleSchedule>,
    requests: Vec<Request>,
    num_passengers: usize,
    next_release: usize,
    pending: Vec<RequestId>,
    tick_assignments: Vec<u16>,
    traj_nodes: Vec<NodeId>,
    traj_assign: Vec<u16>,
    tallies: Vec<StatusTally>,
    vehicle_seconds: Seconds,
    relocation_seconds: Seconds,
    relocations: Vec<RelocationRecord>,
}

impl<'a> Engine<'a> {
    fn new(net: &'a RoadNetwork, cfg: &'a SimConfig, mut demand: Vec<Request>) -> Result<Self, SimError> {
        let bad = |msg: String| Err(SimError::Demand(msg));
        for (i, r) in demand.iter().enumerate() {
            if r.id != i {
                return bad(format!("request at position {i} has id {}", r.id));
            }
            if i > 0 && demand[i - 1].submission_time > r.submission_time {
                return bad(format!("request {i} submitted before its predecessor"));
            }
            if r.submission_time < 0 || r.submission_time >= cfg.day_length_seconds {
                return bad(format!("request {i} submitted outside the day"));
            }
            if r.is_rebalancing || r.status != RequestStatus::Pending {
                return bad(format!("request {i} is not a fresh passenger request"));
            }
            if !net.is_stop(r.origin) || !net.is_stop(r.dest) {
                return bad(format!("request {i} endpoints are not virtual stops"));
            }
        }
        for r in demand.iter_mut() {
            r.latest_dropoff = latest_dropoff_of(r, net, cfg)?;
        }

        let mut rng = seeded_rng(cfg.rng_seed, PLACEMENT_STREAM);
        let pool: Vec<NodeId> = match cfg.initial_zone {
            Some(z) => net.nodes().filter(|&n| net.zone_of(n) == z).collect(),
            None => net.nodes().collect(),
        };
        if pool.is_empty() && cfg.fleet_size > 0 {
            return Err(SimError::Config("no nodes available for initial vehicle placement".into()));
        }
        let fleet =
            (0..cfg.fleet_size).map(|v| VehicleSchedule::idle_at(v, pool[rng.gen_range(0..pool.len())], 0)).collect();

        Ok(Engine {
            net,
            cfg,
            fleet,
            num_passengers: demand.len(),
            requests: demand,
            next_release: 0,
            pending: Vec::new(),
            tick_assignments: vec![0; cfg.fleet_size],
            traj_nodes: Vec::with_capacity(cfg.fleet_size * cfg.day_ticks()),
            traj_assign: Vec::with_capacity(cfg.fleet_size * cfg.day_ticks()),
            tallies: Vec::new(),
            vehicle_seconds: 0,
            relocation_seconds: 0,
            relocations: Vec::new(),
        })
    }

    fn context(&self, now: Seconds) -> DispatchContext<'_> {
        DispatchContext { net: self.net, cfg: self.cfg, fleet: &self.fleet, now }
    }

    fn is_drained(&self) -> bool {
        self.next_release == self.num_passengers
            && self.pending.is_empty()
            && self.fleet.iter().all(|v| v.stops.iter().all(|s| s.rebalancing))
    }

    fn violation(now: Seconds, msg: String) -> SimError {
        SimError::Invariant { time: now, msg }
    }

    fn set_status(&mut self, id: RequestId, next: RequestStatus, now: Seconds) -> Result<(), SimError> {
        let r = &mut self.requests[id];
        if !r.status.can_become(next) {
            return Err(Self::violation(now, format!("request {id}: illegal transition {} -> {next}", r.status)));
        }
        r.status = next;
        Ok(())
    }

    /// Moves every vehicle along its schedule up to `now`, serving stops on the way.
    fn advance(&mut self, now: Seconds) -> Result<(), SimError> {
        for v in 0..self.fleet.len() {
            loop {
                let veh = &mut self.fleet[v];
                let Some(next) = veh.stops.first() else { break };
                if veh.current_time > now {
                    break;
                }
                if veh.current_node != next.node {
                    let (hop, w) = self
                        .net
                        .next_hop(veh.current_node, next.node)
                        .ok_or_else(|| Self::violation(now, format!("vehicle {v} has no path to {}", next.node)))?;
                    veh.current_node = hop;
                    veh.current_time += w;
                    self.vehicle_seconds += w;
                    if next.rebalancing {
                        self.relocation_seconds += w;
                    }
                    continue;
                }
                let stop = veh.stops.remove(0);
                let t = veh.current_time;
                if t != stop.planned_arrival {
                    return Err(Self::violation(
                        now,
                        format!("vehicle {v} reached {} at {t}, planned {}", stop.node, stop.planned_arrival),
                    ));
                }
                if stop.rebalancing {
                    if stop.kind == StopKind::RepositionEnd {
                        self.requests[stop.request].dropoff_time = Some(t);
                    }
                    continue;
                }
                veh.current_time += self.cfg.dwell_seconds;
                match stop.kind {
                    StopKind::Pickup => {
                        veh.onboard_count += 1;
                        veh.onboard.push((stop.request, t));
                        if veh.onboard_count > self.cfg.capacity {
                            return Err(Self::violation(now, format!("vehicle {v} over capacity")));
                        }
                        self.set_status(stop.request, RequestStatus::Onboard, now)?;
                        let r = &mut self.requests[stop.request];
                        r.pickup_time = Some(t);
                        if t - r.submission_time > self.cfg.w_max {
                            return Err(Self::violation(
                                now,
                                format!("request {} waited {} s", r.id, t - r.submission_time),
                            ));
                        }
                    }
                    StopKind::Dropoff => {
                        veh.onboard_count -= 1;
                        veh.onboard.retain(|(id, _)| *id != stop.request);
                        self.set_status(stop.request, RequestStatus::Completed, now)?;
                        let r = &mut self.requests[stop.request];
                        r.dropoff_time = Some(t);
                        if t > r.latest_dropoff {
                            return Err(Self::violation(now, format!("request {} delivered after its deadline", r.id)));
                        }
                    }
                    StopKind::RepositionEnd => {}
                }
            }
        }
        Ok(())
    }

    fn release(&mut self, now: Seconds) {
        while self.next_release < self.num_passengers && self.requests[self.next_release].submission_time <= now {
            self.pending.push(self.next_release);
            self.next_release += 1;
        }
    }

    fn match_pending(
        &mut self,
        now: Seconds,
        matcher: &mut dyn Matcher,
        rebalancer: &mut Option<&mut dyn Rebalancer>,
        rng: &mut SimRng,
    ) -> Result<(), SimError> {
        let queue = std::mem::take(&mut self.pending);
        let mut waiting = Vec::with_capacity(queue.len());
        for id in queue {
            let choice = matcher.select(&self.context(now), &self.requests[id]);
            match choice {
                Some(ins) => self.commit(id, ins, now)?,
                None if now + self.cfg.tick_seconds - self.requests[id].submission_time > self.cfg.w_max => {
                    self.set_status(id, RequestStatus::Rejected, now)?;
                    if let Some(r) = rebalancer.as_deref_mut() {
                        let reloc = r.on_rejection(&self.context(now), &self.requests[id], rng);
                        if let Some(reloc) = reloc {
                            self.commit_relocation(reloc, now)?;
                        }
                    }
                }
                None => waiting.push(id),
            }
        }
        self.pending = waiting;
        Ok(())
    }

    /// Checks a proposed schedule against the vehicle it replaces: same anchor,
    /// old passenger stops kept in order, all constraints satisfied.
    fn check_insertion(&self, ins: &Insertion, now: Seconds) -> Result<(), SimError> {
        let v = ins.vehicle;
        let Some(current) = self.fleet.get(v) else {
            return Err(Self::violation(now, format!("insertion names unknown vehicle {v}")));
        };
        if ins.schedule.vehicle_id != v || (ins.schedule.current_node, ins.schedule.current_time) != current.anchor(now)
        {
            return Err(Self::violation(now, format!("insertion for vehicle {v} starts from a stale position")));
        }
        let before: Vec<_> = current.stops.iter().filter(|s| !s.rebalancing).map(|s| (s.request, s.kind)).collect();
        let mut remaining = before.iter().peekable();
        for s in &ins.schedule.stops {
            if remaining.peek() == Some(&&(s.request, s.kind)) {
                remaining.next();
            }
        }
        if remaining.next().is_some() {
            return Err(Self::violation(now, format!("insertion reorders or drops stops of vehicle {v}")));
        }
        let mut check = ins.schedule.clone();
        check.onboard_count = current.onboard_count;
        check.onboard = current.onboard.clone();
        if !replan(&mut check, self.net, self.cfg) || check.stops != ins.schedule.stops {
            return Err(Self::violation(now, format!("insertion for vehicle {v} is infeasible")));
        }
        Ok(())
    }

    fn commit(&mut self, id: RequestId, ins: Insertion, now: Seconds) -> Result<(), SimError> {
        self.check_insertion(&ins, now)?;
        let kinds: Vec<_> = ins.schedule.stops.iter().filter(|s| s.request == id).map(|s| s.kind).collect();
        if kinds != [StopKind::Pickup, StopKind::Dropoff] {
            return Err(Self::violation(now, format!("insertion does not serve request {id}")));
        }
        let v = ins.vehicle;
        let veh = &mut self.fleet[v];
        veh.current_time = ins.schedule.current_time;
        veh.stops = ins.schedule.stops;
        self.set_status(id, RequestStatus::Assigned, now)?;
        self.requests[id].vehicle = Some(v);
        self.tick_assignments[v] = self.tick_assignments[v].saturating_add(1);
        Ok(())
    }

    fn commit_relocation(&mut self, reloc: Relocation, now: Seconds) -> Result<(), SimError> {
        let v = reloc.vehicle;
        if !self.fleet.get(v).is_some_and(|veh| veh.is_idle()) {
            return Err(Self::violation(now, format!("relocation assigned to busy vehicle {v}")));
        }
        self.check_insertion(&reloc.insertion, now)?;
        let id = self.requests.len();
        let mut request = reloc.request;
        request.id = id;
        request.is_rebalancing = true;
        request.status = RequestStatus::Assigned;
        request.vehicle = Some(v);
        let (origin, dest) = (request.origin, request.dest);
        self.requests.push(request);

        let veh = &mut self.fleet[v];
        veh.current_time = reloc.insertion.schedule.current_time;
        veh.stops = reloc.insertion.schedule.stops;
        for s in veh.stops.iter_mut() {
            if !s.rebalancing {
                return Err(Self::violation(now, format!("relocation of vehicle {v} carries passenger stops")));
            }
            s.request = id;
        }
        self.relocations.push(RelocationRecord {
            time: now,
            vehicle: v,
            origin,
            dest,
            from_zone: reloc.from_zone,
            to_zone: reloc.to_zone,
            delta_from: reloc.delta_from,
            delta_to: reloc.delta_to,
        });
        Ok(())
    }

    fn record_trajectory(&mut self) {
        self.traj_nodes.extend(self.fleet.iter().map(|v| v.current_node));
        self.traj_assign.extend_from_slice(&self.tick_assignments);
    }

    /// Recounts every passenger request and checks the conservation identity.
    fn tally(&mut self, now: Seconds) -> Result<(), SimError> {
        let mut t = StatusTally { time: now, submitted: self.next_release, ..StatusTally::default() };
        let mut unreleased_pending = 0;
        for (i, r) in self.requests[..self.num_passengers].iter().enumerate() {
            match r.status {
                RequestStatus::Pending if i >= self.next_release => unreleased_pending += 1,
                RequestStatus::Pending => t.pending += 1,
                RequestStatus::Assigned => t.assigned += 1,
                RequestStatus::Onboard => t.onboard += 1,
                RequestStatus::Completed => t.completed += 1,
                RequestStatus::Rejected => t.rejected += 1,
            }
        }
        if !t.is_conserved()
            || unreleased_pending != self.num_passengers - self.next_release
            || t.pending != self.pending.len()
        {
            return Err(Self::violation(now, format!("request conservation broken: {t:?}")));
        }
        self.tallies.push(t);
        Ok(())
    }

    fn finish(mut self, end_time: Seconds, day_ticks: usize) -> SimOutcome {
        debug_assert_eq!(self.traj_nodes.len(), day_ticks * self.fleet.len());
        self.requests.truncate(self.num_passengers);
        SimOutcome {
            requests: self.requests,
            trajectory: Trajectory {
                fleet_size: self.fleet.len(),
                tick_seconds: self.cfg.tick_seconds,
                nodes: self.traj_nodes,
                new_assignments: self.traj_assign,
            },
            tallies: self.tallies,
            vehicle_seconds: self.vehicle_seconds,
            relocation_seconds: self.relocation_seconds,
            relocations: self.relocations,
            end_time,
        }
    }
}
