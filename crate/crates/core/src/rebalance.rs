//! Idle-vehicle repositioning from surplus to deficit zones, with relative
//! demand read off the learned value table. Also the rejected-request chasing
//! comparator.

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::fleetsim::{
    try_insert, DispatchContext, Rebalancer, Relocation, Request, SimRng, VehicleId, VehicleSchedule,
};
use crate::learner::StateValueTable;
use crate::netgraph::{NodeId, RoadNetwork, Seconds, SpaceTimeGrid, ZoneId};
use crate::planner::{marginal_gain, GainBreakdown, PlannerConfig};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZoneBalance {
    pub zone: ZoneId,
    pub demand: f64,
    pub supply: f64,
    /// supply - demand
    pub delta: f64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RebalanceError {
    #[error("all zone values are zero at time index {0}")]
    ZeroValueRow(usize),
}

/// Relative demand from the value row at `now`, relative supply from the
/// vehicles' current nodes.
pub fn zone_balances(
    table: &StateValueTable,
    grid: &SpaceTimeGrid,
    fleet: &[VehicleSchedule],
    net: &RoadNetwork,
    now: Seconds,
) -> Result<Vec<ZoneBalance>, RebalanceError> {
    let t = grid.time_index(now);
    let row = table.row(t);
    let total: f64 = row.iter().sum();
    if total <= 0.0 {
        return Err(RebalanceError::ZeroValueRow(t));
    }
    let mut counts = vec![0usize; row.len()];
    for v in fleet {
        counts[net.zone_of(v.current_node)] += 1;
    }
    let n = fleet.len().max(1) as f64;
    Ok(row
        .iter()
        .zip(&counts)
        .enumerate()
        .map(|(zone, (&value, &count))| {
            let demand = value / total;
            let supply = count as f64 / n;
            ZoneBalance { zone, demand, supply, delta: supply - demand }
        })
        .collect())
}

/// One planning round: each deficit zone, most starved first, receives at
/// most one idle vehicle from a surplus zone.
pub fn rebalance_step(
    balances: &[ZoneBalance],
    ctx: &DispatchContext<'_>,
    table: &StateValueTable,
    pcfg: &PlannerConfig,
    grid: &SpaceTimeGrid,
    rng: &mut SimRng,
) -> Vec<Relocation> {
    let net = ctx.net;
    let mut deficit: Vec<&ZoneBalance> =
        balances.iter().filter(|b| b.delta < 0.0 && !net.stops_in_zone(b.zone).is_empty()).collect();
    deficit.sort_by(|a, b| a.delta.total_cmp(&b.delta).then(a.zone.cmp(&b.zone)));

    let mut pool: Vec<VehicleId> = ctx
        .fleet
        .iter()
        .filter(|v| v.is_idle() && balances[net.zone_of(v.current_node)].delta >= 0.0)
        .map(|v| v.vehicle_id)
        .collect();

    let mut plan = Vec::new();
    for d in deficit {
        if pool.is_empty() {
            break;
        }
        let Some(surplus) = draw_surplus_zone(balances, &pool, ctx.fleet, net, rng) else {
            break;
        };
        let origin = *net.stops_in_zone(surplus).choose(rng).expect("surplus zone has stops");
        let dest = *net.stops_in_zone(d.zone).choose(rng).expect("deficit zone has stops");
        let request = Request::relocation(ctx.now, origin, dest);

        let mut reach: Vec<(Seconds, VehicleId)> = pool
            .iter()
            .filter(|&&v| net.zone_of(ctx.fleet[v].current_node) == surplus)
            .filter_map(|&v| {
                let (node, t0) = ctx.fleet[v].anchor(ctx.now);
                Some((t0 - ctx.now + net.time_to_stop(node, origin)?, v))
            })
            .collect();
        reach.sort_unstable();
        reach.truncate(ctx.cfg.candidate_cap);

        let mut best: Option<(GainBreakdown, crate::fleetsim::Insertion)> = None;
        for (_, v) in reach {
            let Ok(ins) = try_insert(&ctx.fleet[v], &request, net, ctx.cfg, ctx.now) else {
                continue;
            };
            let gain = marginal_gain(&ctx.fleet[v], &ins, table, pcfg, grid, net, ctx.now);
            let better =
                best.as_ref().map_or(true, |(g, b)| gain.total > g.total || (gain.total == g.total && v < b.vehicle));
            if better {
                best = Some((gain, ins));
            }
        }
        let Some((_, ins)) = best else { continue };
        pool.retain(|&v| v != ins.vehicle);
        plan.push(Relocation {
            vehicle: ins.vehicle,
            request,
            insertion: ins,
            from_zone: surplus,
            to_zone: d.zone,
            delta_from: Some(balances[surplus].delta),
            delta_to: Some(d.delta),
        });
    }
    plan
}

/// Surplus zone holding idle pool vehicles, drawn with probability
/// proportional to its positive imbalance (uniformly if none is positive).
fn draw_surplus_zone(
    balances: &[ZoneBalance],
    pool: &[VehicleId],
    fleet: &[VehicleSchedule],
    net: &RoadNetwork,
    rng: &mut SimRng,
) -> Option<ZoneId> {
    let mut zones: Vec<ZoneId> = pool
        .iter()
        .map(|&v| net.zone_of(fleet[v].current_node))
        .filter(|&z| !net.stops_in_zone(z).is_empty())
        .collect();
    zones.sort_unstable();
    zones.dedup();
    if zones.is_empty() {
        return None;
    }
    let weights: Vec<f64> = zones.iter().map(|&z| balances[z].delta.max(0.0)).collect();
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return zones.choose(rng).copied();
    }
    let mut x = rng.gen::<f64>() * total;
    for (&z, &w) in zones.iter().zip(&weights) {
        if x < w {
            return Some(z);
        }
        x -= w;
    }
    zones.iter().zip(&weights).rev().find(|(_, &w)| w > 0.0).map(|(&z, _)| z)
}

/// Value-driven repositioning every `tau` seconds.
pub struct ValueRebalancer<'t> {
    pub table: &'t StateValueTable,
    pub pcfg: PlannerConfig,
    pub grid: SpaceTimeGrid,
    pub tau: Seconds,
    /// Rounds skipped because the value row was all zero.
    pub skipped: usize,
}

impl<'t> ValueRebalancer<'t> {
    pub fn new(table: &'t StateValueTable, pcfg: PlannerConfig, grid: SpaceTimeGrid, tau: Seconds) -> Self {
        ValueRebalancer { table, pcfg, grid, tau, skipped: 0 }
    }
}

impl Rebalancer for ValueRebalancer<'_> {
    fn name(&self) -> &str {
        "value"
    }

    fn interval(&self) -> Option<Seconds> {
        Some(self.tau)
    }

    fn plan(&mut self, ctx: &DispatchContext<'_>, rng: &mut SimRng) -> Vec<Relocation> {
        match zone_balances(self.table, &self.grid, ctx.fleet, ctx.net, ctx.now) {
            Ok(b) => rebalance_step(&b, ctx, self.table, &self.pcfg, &self.grid, rng),
            Err(RebalanceError::ZeroValueRow(_)) => {
                self.skipped += 1;
                Vec::new()
            }
        }
    }
}

/// Sends the nearest idle vehicle to the origin of every rejected request.
#[derive(Clone, Copy, Debug, Default)]
pub struct RejectedChase;

impl Rebalancer for RejectedChase {
    fn name(&self) -> &str {
        "rejected-chase"
    }

    fn on_rejection(&mut self, ctx: &DispatchContext<'_>, req: &Request, _rng: &mut SimRng) -> Option<Relocation> {
        let net = ctx.net;
        let target: NodeId = req.origin;
        let (_, v) = ctx
            .fleet
            .iter()
            .filter(|v| v.is_idle())
            .filter_map(|v| {
                let (node, t0) = v.anchor(ctx.now);
                Some((t0 - ctx.now + net.time_to_stop(node, target)?, v.vehicle_id))
            })
            .min()?;
        let request = Request::relocation(ctx.now, target, target);
        let ins = try_insert(&ctx.fleet[v], &request, net, ctx.cfg, ctx.now).ok()?;
        let from_zone = net.zone_of(ctx.fleet[v].current_node);
        Some(Relocation {
            vehicle: v,
            request,
            insertion: ins,
            from_zone,
            to_zone: net.zone_of(target),
            delta_from: None,
            delta_to: None,
        })
    }
}
