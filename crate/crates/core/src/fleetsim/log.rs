//! CSV logs written from a finished run.

use std::io::Write;

use super::SimOutcome;
use crate::netgraph::RoadNetwork;

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `tick,vehicle_id,node_id,new_assignments`
pub fn write_trajectory<W: Write>(out: &SimOutcome, net: &RoadNetwork, w: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["tick", "vehicle_id", "node_id", "new_assignments"])?;
    let traj = &out.trajectory;
    for tick in 0..traj.num_ticks() {
        for v in 0..traj.fleet_size {
            wtr.write_record([
                tick.to_string(),
                v.to_string(),
                net.label(traj.node(tick, v)).to_string(),
                traj.assignments(tick, v).to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// `request_id,submission,pickup,dropoff,status,vehicle_id`
pub fn write_requests<W: Write>(out: &SimOutcome, w: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["request_id", "submission", "pickup", "dropoff", "status", "vehicle_id"])?;
    for r in &out.requests {
        wtr.write_record([
            r.id.to_string(),
            r.submission_time.to_string(),
            opt(r.pickup_time),
            opt(r.dropoff_time),
            r.status.to_string(),
            opt(r.vehicle),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// `time,vehicle_id,from_zone,to_zone,delta_from,delta_to`
pub fn write_relocations<W: Write>(out: &SimOutcome, w: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["time", "vehicle_id", "from_zone", "to_zone", "delta_from", "delta_to"])?;
    for r in &out.relocations {
        wtr.write_record([
            r.time.to_string(),
            r.vehicle.to_string(),
            r.from_zone.to_string(),
            r.to_zone.to_string(),
            opt(r.delta_from),
            opt(r.delta_to),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
