//! Non-myopic matching: pick the vehicle with the highest marginal expected
//! gain, a scaled cost saving plus the discounted change in the value of the
//! vehicle's final scheduled stop.

use std::io::Write;

use thiserror::Error;

use crate::fleetsim::{
    candidate_vehicles, try_insert, DispatchContext, Insertion, Matcher, Request, RequestId, VehicleId, VehicleSchedule,
};
use crate::learner::StateValueTable;
use crate::myopic::match_myopic;
use crate::netgraph::{RoadNetwork, Seconds, SpaceTimeGrid, State};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlannerConfig {
    pub gamma: f64,
    pub lambda: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig { gamma: 0.9, lambda: 0.005 }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err("lambda must be positive".into());
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err("gamma must lie in (0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GainBreakdown {
    pub immediate: f64,
    pub v_before: f64,
    pub v_after: f64,
    pub dt_before: u32,
    pub dt_after: u32,
    pub total: f64,
}

impl GainBreakdown {
    pub fn new(immediate: f64, v_before: f64, dt_before: u32, v_after: f64, dt_after: u32, gamma: f64) -> Self {
        let total = immediate + gamma.powi(dt_after as i32) * v_after - gamma.powi(dt_before as i32) * v_before;
        GainBreakdown { immediate, v_before, v_after, dt_before, dt_after, total }
    }

    /// Discounted value change alone.
    pub fn future(&self, gamma: f64) -> f64 {
        gamma.powi(self.dt_after as i32) * self.v_after - gamma.powi(self.dt_before as i32) * self.v_before
    }
}

/// State of the vehicle's last passenger stop and whole periods until it is
/// reached; a vehicle with nothing to do is in its current zone now.
pub fn vehicle_state(sched: &VehicleSchedule, grid: &SpaceTimeGrid, net: &RoadNetwork, now: Seconds) -> (State, u32) {
    match sched.stops.iter().rev().find(|s| !s.rebalancing) {
        Some(last) => {
            (grid.state_of(last.planned_arrival, last.node, net), grid.periods_between(now, last.planned_arrival))
        }
        None => (grid.state_of(now, sched.anchor(now).0, net), 0),
    }
}

pub fn marginal_gain(
    sched: &VehicleSchedule,
    ins: &Insertion,
    table: &StateValueTable,
    pcfg: &PlannerConfig,
    grid: &SpaceTimeGrid,
    net: &RoadNetwork,
    now: Seconds,
) -> GainBreakdown {
    let (before, dt_before) = vehicle_state(sched, grid, net, now);
    let (node, at) = ins.final_stop;
    let after = grid.state_of(at, node, net);
    let dt_after = grid.periods_between(now, at);
    let immediate = pcfg.lambda * (ins.old_cost.total - ins.new_cost.total);
    GainBreakdown::new(immediate, table.value(before), dt_before, table.value(after), dt_after, pcfg.gamma)
}

/// Feasible candidates with their insertions and gains, in candidate order.
pub fn evaluate_candidates(
    ctx: &DispatchContext<'_>,
    req: &Request,
    table: &StateValueTable,
    pcfg: &PlannerConfig,
    grid: &SpaceTimeGrid,
) -> Vec<(Insertion, GainBreakdown)> {
    candidate_vehicles(req, ctx.fleet, ctx.net, ctx.cfg, ctx.now)
        .into_iter()
        .filter_map(|v| {
            let sched = &ctx.fleet[v];
            let ins = try_insert(sched, req, ctx.net, ctx.cfg, ctx.now).ok()?;
            let gain = marginal_gain(sched, &ins, table, pcfg, grid, ctx.net, ctx.now);
            Some((ins, gain))
        })
        .collect()
}

fn argmax(evaluated: &[(Insertion, GainBreakdown)]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (ins, gain)) in evaluated.iter().enumerate() {
        let better = match best {
            None => true,
            Some(b) => {
                let (bi, bg) = &evaluated[b];
                gain.total > bg.total || (gain.total == bg.total && ins.vehicle < bi.vehicle)
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

/// Highest-gain feasible insertion, lowest vehicle id on ties. A feasible
/// match is returned even when every gain is negative.
pub fn match_nonmyopic(
    ctx: &DispatchContext<'_>,
    req: &Request,
    table: &StateValueTable,
    pcfg: &PlannerConfig,
    grid: &SpaceTimeGrid,
) -> Option<(Insertion, GainBreakdown)> {
    let mut evaluated = evaluate_candidates(ctx, req, table, pcfg, grid);
    let i = argmax(&evaluated)?;
    Some(evaluated.swap_remove(i))
}

/// One evaluated candidate of one matching decision.
#[derive(Clone, Debug, PartialEq)]
pub struct AuditRow {
    pub request: RequestId,
    pub vehicle: VehicleId,
    pub gain: GainBreakdown,
    pub chosen: bool,
}

/// `request_id,vehicle_id,R_v,v_before,v_after,dt_before,dt_after,total_gain,chosen`
pub fn write_audit<W: Write>(rows: &[AuditRow], w: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "request_id",
        "vehicle_id",
        "R_v",
        "v_before",
        "v_after",
        "dt_before",
        "dt_after",
        "total_gain",
        "chosen",
    ])?;
    for r in rows {
        let g = &r.gain;
        wtr.write_record([
            r.request.to_string(),
            r.vehicle.to_string(),
            g.immediate.to_string(),
            g.v_before.to_string(),
            g.v_after.to_string(),
            g.dt_before.to_string(),
            g.dt_after.to_string(),
            g.total.to_string(),
            (r.chosen as u8).to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// The learned-value policy.
pub struct NonMyopicMatcher<'t> {
    pub table: &'t StateValueTable,
    pub pcfg: PlannerConfig,
    pub grid: SpaceTimeGrid,
    audit: Option<Vec<AuditRow>>,
}

impl<'t> NonMyopicMatcher<'t> {
    pub fn new(table: &'t StateValueTable, pcfg: PlannerConfig, grid: SpaceTimeGrid) -> Self {
        assert_eq!(
            (table.num_periods(), table.num_zones()),
            (grid.num_periods, grid.num_zones),
            "value table does not match the state grid"
        );
        NonMyopicMatcher { table, pcfg, grid, audit: None }
    }

    /// Also keep every evaluated candidate for the audit log.
    pub fn with_audit(mut self) -> Self {
        self.audit = Some(Vec::new());
        self
    }

    pub fn take_audit(&mut self) -> Vec<AuditRow> {
        self.audit.as_mut().map(std::mem::take).unwrap_or_default()
    }
}

impl Matcher for NonMyopicMatcher<'_> {
    fn name(&self) -> &str {
        "nonmyopic"
    }

    fn select(&mut self, ctx: &DispatchContext<'_>, req: &Request) -> Option<Insertion> {
        let mut evaluated = evaluate_candidates(ctx, req, self.table, &self.pcfg, &self.grid);
        let best = argmax(&evaluated);
        if let Some(rows) = self.audit.as_mut() {
            rows.extend(evaluated.iter().enumerate().map(|(i, (ins, gain))| AuditRow {
                request: req.id,
                vehicle: ins.vehicle,
                gain: *gain,
                chosen: Some(i) == best,
            }));
        }
        best.map(|i| evaluated.swap_remove(i).0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("mean cost change is zero; lambda is undefined")]
    DegenerateDenominator,
    #[error("no decisions recorded")]
    NoSamples,
}

/// Ratio of the mean discounted value change to the mean cost saving
/// (old minus new route cost).
pub fn calibrate_lambda(pairs: &[(f64, f64)]) -> Result<f64, CalibrationError> {
    if pairs.is_empty() {
        return Err(CalibrationError::NoSamples);
    }
    let n = pairs.len() as f64;
    let dv = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let dc = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    if dc == 0.0 {
        return Err(CalibrationError::DegenerateDenominator);
    }
    Ok(dv / dc)
}

/// Dispatches myopically while recording (value change, cost saving) of
/// every decision, for [`calibrate_lambda`].
pub struct CalibrationRecorder<'t> {
    pub table: &'t StateValueTable,
    pub gamma: f64,
    pub grid: SpaceTimeGrid,
    pub pairs: Vec<(f64, f64)>,
}

impl<'t> CalibrationRecorder<'t> {
    pub fn new(table: &'t StateValueTable, gamma: f64, grid: SpaceTimeGrid) -> Self {
        CalibrationRecorder { table, gamma, grid, pairs: Vec::new() }
    }
}

impl Matcher for CalibrationRecorder<'_> {
    fn name(&self) -> &str {
        "myopic"
    }

    fn select(&mut self, ctx: &DispatchContext<'_>, req: &Request) -> Option<Insertion> {
        let ins = match_myopic(ctx, req)?;
        let pcfg = PlannerConfig { gamma: self.gamma, lambda: 1.0 };
        let gain = marginal_gain(&ctx.fleet[ins.vehicle], &ins, self.table, &pcfg, &self.grid, ctx.net, ctx.now);
        self.pairs.push((gain.future(self.gamma), -ins.marginal_cost()));
        Some(ins)
    }
}
