//! Evaluation metrics, run comparisons and value heatmap export.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fleetsim::{RequestStatus, SimOutcome};
use crate::learner::StateValueTable;
use crate::netgraph::State;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReportError {
    #[error("run has no submitted requests")]
    EmptyRun,
    #[error("baseline {0:?} not among the runs")]
    MissingBaseline(String),
    #[error("need at least two runs to compare")]
    TooFewRuns,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsSummary {
    pub submitted: usize,
    pub served: usize,
    pub rejected: usize,
    pub service_rate: f64,
    /// Minutes, over served passengers.
    pub mean_wait: f64,
    pub mean_in_vehicle: f64,
    pub vehicle_minutes: f64,
    pub relocation_minutes: f64,
    /// Absent when nobody was served.
    pub vmt_per_passenger: Option<f64>,
    pub hourly_submissions: [usize; 24],
    pub hourly_rejections: [usize; 24],
    pub relocations: usize,
}

pub fn summarize(outcome: &SimOutcome) -> Result<MetricsSummary, ReportError> {
    let submitted = outcome.requests.len();
    if submitted == 0 {
        return Err(ReportError::EmptyRun);
    }
    let mut hourly_submissions = [0; 24];
    let mut hourly_rejections = [0; 24];
    let (mut served, mut rejected, mut wait, mut ride) = (0usize, 0usize, 0i64, 0i64);
    for r in &outcome.requests {
        let hour = ((r.submission_time / 3600) as usize).min(23);
        hourly_submissions[hour] += 1;
        match r.status {
            RequestStatus::Completed => {
                served += 1;
                wait += r.wait_time().expect("completed rider was picked up");
                ride += r.in_vehicle_time().expect("completed rider was dropped off");
            }
            RequestStatus::Rejected => {
                rejected += 1;
                hourly_rejections[hour] += 1;
            }
            _ => {}
        }
    }
    let per_served = |x: f64| if served == 0 { 0.0 } else { x / served as f64 };
    let vehicle_minutes = outcome.vehicle_seconds as f64 / 60.0;
    Ok(MetricsSummary {
        submitted,
        served,
        rejected,
        service_rate: (submitted - rejected) as f64 / submitted as f64,
        mean_wait: per_served(wait as f64 / 60.0),
        mean_in_vehicle: per_served(ride as f64 / 60.0),
        vehicle_minutes,
        relocation_minutes: outcome.relocation_seconds as f64 / 60.0,
        vmt_per_passenger: (served > 0).then(|| vehicle_minutes / served as f64),
        hourly_submissions,
        hourly_rejections,
        relocations: outcome.relocations.len(),
    })
}

/// Pools several days as if they were one run: every mean is weighted by
/// requests, not by days.
pub fn aggregate(days: &[MetricsSummary]) -> Result<MetricsSummary, ReportError> {
    let submitted: usize = days.iter().map(|d| d.submitted).sum();
    if submitted == 0 {
        return Err(ReportError::EmptyRun);
    }
    let served: usize = days.iter().map(|d| d.served).sum();
    let rejected: usize = days.iter().map(|d| d.rejected).sum();
    let weighted = |f: fn(&MetricsSummary) -> f64| {
        if served == 0 {
            0.0
        } else {
            days.iter().map(|d| f(d) * d.served as f64).sum::<f64>() / served as f64
        }
    };
    let vehicle_minutes: f64 = days.iter().map(|d| d.vehicle_minutes).sum();
    let mut hourly_submissions = [0; 24];
    let mut hourly_rejections = [0; 24];
    for d in days {
        for h in 0..24 {
            hourly_submissions[h] += d.hourly_submissions[h];
            hourly_rejections[h] += d.hourly_rejections[h];
        }
    }
    Ok(MetricsSummary {
        submitted,
        served,
        rejected,
        service_rate: (submitted - rejected) as f64 / submitted as f64,
        mean_wait: weighted(|d| d.mean_wait),
        mean_in_vehicle: weighted(|d| d.mean_in_vehicle),
        vehicle_minutes,
        relocation_minutes: days.iter().map(|d| d.relocation_minutes).sum(),
        vmt_per_passenger: (served > 0).then(|| vehicle_minutes / served as f64),
        hourly_submissions,
        hourly_rejections,
        relocations: days.iter().map(|d| d.relocations).sum(),
    })
}

/// One line of a metrics file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub policy: String,
    pub fleet_size: usize,
    pub day: String,
    pub submitted: usize,
    pub served: usize,
    pub rejected: usize,
    pub service_rate: f64,
    pub mean_wait_min: f64,
    pub mean_in_vehicle_min: f64,
    pub vehicle_minutes: f64,
    pub relocation_minutes: f64,
    pub vmt_per_passenger: Option<f64>,
    pub relocations: usize,
}

/// Label of the pooled row in a metrics file.
pub const POOLED: &str = "all";

impl MetricsRow {
    pub fn new(policy: &str, fleet_size: usize, day: &str, m: &MetricsSummary) -> Self {
        MetricsRow {
            policy: policy.into(),
            fleet_size,
            day: day.into(),
            submitted: m.submitted,
            served: m.served,
            rejected: m.rejected,
            service_rate: m.service_rate,
            mean_wait_min: m.mean_wait,
            mean_in_vehicle_min: m.mean_in_vehicle,
            vehicle_minutes: m.vehicle_minutes,
            relocation_minutes: m.relocation_minutes,
            vmt_per_passenger: m.vmt_per_passenger,
            relocations: m.relocations,
        }
    }

    /// Headline figures only; hourly counts are not stored in the file.
    pub fn to_run(&self) -> RunSummary {
        RunSummary {
            policy: self.policy.clone(),
            fleet_size: self.fleet_size,
            metrics: MetricsSummary {
                submitted: self.submitted,
                served: self.served,
                rejected: self.rejected,
                service_rate: self.service_rate,
                mean_wait: self.mean_wait_min,
                mean_in_vehicle: self.mean_in_vehicle_min,
                vehicle_minutes: self.vehicle_minutes,
                relocation_minutes: self.relocation_minutes,
                vmt_per_passenger: self.vmt_per_passenger,
                hourly_submissions: [0; 24],
                hourly_rejections: [0; 24],
                relocations: self.relocations,
            },
        }
    }
}

/// Per-day rows followed by the request-weighted pooled row.
pub fn write_metrics<W: Write>(
    policy: &str,
    fleet_size: usize,
    days: &[MetricsSummary],
    w: W,
) -> Result<MetricsSummary, MetricsWriteError> {
    let pooled = aggregate(days)?;
    let mut wtr = csv::Writer::from_writer(w);
    for (i, d) in days.iter().enumerate() {
        wtr.serialize(MetricsRow::new(policy, fleet_size, &i.to_string(), d))?;
    }
    wtr.serialize(MetricsRow::new(policy, fleet_size, POOLED, &pooled))?;
    wtr.flush().map_err(csv::Error::from)?;
    Ok(pooled)
}

#[derive(Debug, Error)]
pub enum MetricsWriteError {
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Pooled rows of a metrics file.
pub fn read_pooled<R: Read>(r: R) -> csv::Result<Vec<RunSummary>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for row in rdr.deserialize::<MetricsRow>() {
        let row = row?;
        if row.day == POOLED {
            out.push(row.to_run());
        }
    }
    Ok(out)
}

/// `hour,submissions,rejections`
pub fn write_hourly<W: Write>(m: &MetricsSummary, w: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["hour", "submissions", "rejections"])?;
    for h in 0..24 {
        wtr.write_record([h.to_string(), m.hourly_submissions[h].to_string(), m.hourly_rejections[h].to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// `time_index,zone_id,value` for every zone at each requested time index.
pub fn heatmap_export<W: Write>(table: &StateValueTable, time_indices: &[usize], w: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["time_index", "zone_id", "value"])?;
    for &t in time_indices {
        for z in 0..table.num_zones() {
            wtr.write_record([t.to_string(), z.to_string(), table.value(State::new(t, z)).to_string()])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// One evaluated configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub policy: String,
    pub fleet_size: usize,
    pub metrics: MetricsSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub policy: String,
    pub fleet_size: usize,
    pub service_rate: f64,
    pub mean_wait_min: f64,
    pub mean_in_vehicle_min: f64,
    pub vmt_per_passenger: Option<f64>,
    pub service_rate_delta_pct: Option<f64>,
    pub mean_wait_delta_pct: Option<f64>,
    pub mean_in_vehicle_delta_pct: Option<f64>,
    pub vmt_per_passenger_delta_pct: Option<f64>,
}

pub fn percent_delta(value: f64, base: f64) -> Option<f64> {
    (base != 0.0).then(|| (value - base) / base * 100.0)
}

/// Headline metrics per run with percent changes against the baseline policy
/// at the same fleet size (absent when that fleet has no baseline run).
pub fn compare(runs: &[RunSummary], baseline: &str) -> Result<Vec<ComparisonRow>, ReportError> {
    if runs.len() < 2 {
        return Err(if runs.iter().any(|r| r.policy == baseline) {
            ReportError::TooFewRuns
        } else {
            ReportError::MissingBaseline(baseline.into())
        });
    }
    if !runs.iter().any(|r| r.policy == baseline) {
        return Err(ReportError::MissingBaseline(baseline.into()));
    }
    Ok(runs
        .iter()
        .map(|r| {
            let m = &r.metrics;
            let base = runs.iter().find(|b| b.policy == baseline && b.fleet_size == r.fleet_size).map(|b| &b.metrics);
            let opt_delta = |x: Option<f64>, y: Option<f64>| percent_delta(x?, y?);
            ComparisonRow {
                policy: r.policy.clone(),
                fleet_size: r.fleet_size,
                service_rate: m.service_rate,
                mean_wait_min: m.mean_wait,
                mean_in_vehicle_min: m.mean_in_vehicle,
                vmt_per_passenger: m.vmt_per_passenger,
                service_rate_delta_pct: base.and_then(|b| percent_delta(m.service_rate, b.service_rate)),
                mean_wait_delta_pct: base.and_then(|b| percent_delta(m.mean_wait, b.mean_wait)),
                mean_in_vehicle_delta_pct: base.and_then(|b| percent_delta(m.mean_in_vehicle, b.mean_in_vehicle)),
                vmt_per_passenger_delta_pct: base.and_then(|b| opt_delta(m.vmt_per_passenger, b.vmt_per_passenger)),
            }
        })
        .collect())
}

pub fn write_comparison<W: Write>(rows: &[ComparisonRow], w: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}
