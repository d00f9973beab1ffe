use std::io::Write;

use proptest::prelude::*;
use ridepool::ingest::{
    load_trips, read_pulses, read_trip_records, resolve_trips, synth_demand, write_pulses, write_requests_as_trips,
    write_trip_records, Endpoint, IngestError, Pulse, TripRecord,
};
use ridepool::report::{compare, read_pooled, summarize, write_hourly, write_metrics, ReportError, RunSummary};
use ridepool::scenario::{grid_network, uniform_demand};
use ridepool::{run, seeded_rng, MyopicMatcher, RejectedChase, RunConfig, SimConfig};

#[test]
fn resolved_requests_roundtrip_through_node_form() {
    let net = grid_network(6, 4, 60.0, 3);
    let reqs = uniform_demand(&net, 200, 86_400, &mut seeded_rng(1, 0));
    let mut buf = Vec::new();
    write_requests_as_trips(&reqs, &net, &mut buf).unwrap();
    let records = read_trip_records(&buf[..], "mem", 86_400).unwrap();
    let back = resolve_trips(&records, "mem", &net, &mut seeded_rng(2, 0)).unwrap();
    let key = |r: &ridepool::Request| (r.id, r.submission_time, r.origin, r.dest);
    assert_eq!(back.iter().map(key).collect::<Vec<_>>(), reqs.iter().map(key).collect::<Vec<_>>());
}

#[test]
fn zone_endpoints_spread_evenly_over_the_zone() {
    let net = grid_network(4, 4, 60.0, 2);
    let zone0 = net.stops_in_zone(0).to_vec();
    let trips: Vec<_> = (0..8000)
        .map(|i| (i + 2, TripRecord { submission: 0, origin: Endpoint::Zone(0), dest: Endpoint::Zone(1) }))
        .collect();
    let reqs = resolve_trips(&trips, "mem", &net, &mut seeded_rng(3, 2)).unwrap();
    let expected = 8000.0 / zone0.len() as f64;
    for s in &zone0 {
        let k = reqs.iter().filter(|r| r.origin == *s).count() as f64;
        assert!((k - expected).abs() < 5.0 * expected.sqrt(), "stop {s}: {k} draws, expected {expected}");
    }
    assert!(reqs.iter().all(|r| net.zone_of(r.dest) == 1));
}

#[test]
fn every_bad_line_is_reported() {
    let text = "submission_s,origin,dest\n10,node:1,node:2\nx,node:1,node:2\n20,node:1,place:2\n90000,zone:0,zone:1\n";
    match read_trip_records(text.as_bytes(), "trips.csv", 86_400) {
        Err(IngestError::Parse { file, errors }) => {
            assert_eq!(file, "trips.csv");
            assert_eq!(errors.iter().map(|e| e.0).collect::<Vec<_>>(), vec![3, 4, 5]);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn unknown_zone_names_its_line() {
    let net = grid_network(4, 2, 60.0, 2);
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(f, "submission_s,origin,dest\n0,zone:0,zone:1\n5,zone:7,zone:1").unwrap();
    let err = load_trips(f.path(), &net, 86_400, &mut seeded_rng(0, 2)).unwrap_err();
    assert!(matches!(err, IngestError::Unknown { line: 3, .. }), "{err}");
}

#[test]
fn pulses_roundtrip_and_expand_inside_their_windows() {
    let pulses = vec![
        Pulse { start_s: 0, end_s: 3600, origin_zone: 0, dest_zone: 1, count: 50 },
        Pulse { start_s: 7200, end_s: 7300, origin_zone: 1, dest_zone: 1, count: 20 },
    ];
    let mut buf = Vec::new();
    write_pulses(&pulses, &mut buf).unwrap();
    assert_eq!(read_pulses(&buf[..], "p").unwrap(), pulses);
    let trips = synth_demand(&pulses, &mut seeded_rng(4, 2));
    assert_eq!(trips.len(), 70);
    assert!(trips.windows(2).all(|w| w[0].submission <= w[1].submission));
    let late: Vec<_> = trips.iter().filter(|t| t.origin == Endpoint::Zone(1)).collect();
    assert_eq!(late.len(), 20);
    assert!(late.iter().all(|t| (7200..7300).contains(&t.submission)));

    let mut out = Vec::new();
    write_trip_records(&trips, &mut out).unwrap();
    let back: Vec<_> = read_trip_records(&out[..], "t", 86_400).unwrap().into_iter().map(|(_, t)| t).collect();
    assert_eq!(back, trips);
}

#[test]
fn config_rejects_unknown_keys_and_bad_periods() {
    assert!(matches!(RunConfig::parse("fleet_sise = 3", "c.toml"), Err(IngestError::Config { .. })));
    assert!(matches!(RunConfig::parse("period_seconds = 280", "c.toml"), Err(IngestError::Config { .. })));
    let cfg = RunConfig::parse(&RunConfig::default_toml(), "c.toml").unwrap();
    assert_eq!(cfg, RunConfig::default());
}

fn busy_outcome(seed: u64) -> ridepool::SimOutcome {
    let net = grid_network(8, 8, 60.0, 2);
    let sim = SimConfig { fleet_size: 4, rng_seed: seed, ..SimConfig::default() };
    let demand = uniform_demand(&net, 1500, sim.day_length_seconds, &mut seeded_rng(seed, 2));
    run(&net, &sim, demand, &mut MyopicMatcher, Some(&mut RejectedChase)).unwrap()
}

#[test]
fn summary_counts_add_up_and_are_pure() {
    let out = busy_outcome(1);
    let before = out.clone();
    let m = summarize(&out).unwrap();
    assert_eq!(out, before);
    assert_eq!(summarize(&out).unwrap(), m);
    assert_eq!(m.submitted, out.requests.len());
    assert_eq!(m.served + m.rejected, m.submitted);
    assert!(m.rejected > 0 && m.relocations > 0);
    assert_eq!(m.hourly_submissions.iter().sum::<usize>(), m.submitted);
    assert_eq!(m.hourly_rejections.iter().sum::<usize>(), m.rejected);
    assert!((m.service_rate - m.served as f64 / m.submitted as f64).abs() < 1e-12);
    let waits: Vec<f64> = out.requests.iter().filter_map(|r| r.wait_time()).map(|w| w as f64 / 60.0).collect();
    assert!((m.mean_wait - waits.iter().sum::<f64>() / waits.len() as f64).abs() < 1e-9);
    let vmt = m.vmt_per_passenger.unwrap();
    assert!((vmt - out.vehicle_seconds as f64 / 60.0 / m.served as f64).abs() < 1e-9);

    let mut hourly = Vec::new();
    write_hourly(&m, &mut hourly).unwrap();
    assert_eq!(String::from_utf8(hourly).unwrap().lines().count(), 25);
}

#[test]
fn pooled_rows_weight_days_by_requests_and_feed_comparisons() {
    let days = [summarize(&busy_outcome(1)).unwrap(), summarize(&busy_outcome(2)).unwrap()];
    let mut buf = Vec::new();
    let pooled = write_metrics("myopic", 4, &days, &mut buf).unwrap();
    assert_eq!(pooled.submitted, days[0].submitted + days[1].submitted);
    let served = days[0].served + days[1].served;
    assert!((pooled.service_rate - served as f64 / pooled.submitted as f64).abs() < 1e-12);
    let wait = (days[0].mean_wait * days[0].served as f64 + days[1].mean_wait * days[1].served as f64) / served as f64;
    assert!((pooled.mean_wait - wait).abs() < 1e-9);

    let runs = read_pooled(&buf[..]).unwrap();
    assert_eq!(runs.len(), 1);
    assert_eq!(runs[0].metrics.service_rate, pooled.service_rate);

    let mut better = runs[0].clone();
    better.policy = "nonmyopic".into();
    better.metrics.service_rate *= 1.1;
    let rows = compare(&[runs[0].clone(), better], "myopic").unwrap();
    assert_eq!(rows[0].service_rate_delta_pct, Some(0.0));
    assert!((rows[1].service_rate_delta_pct.unwrap() - 10.0).abs() < 1e-9);
    assert!(matches!(compare(&runs, "nonmyopic"), Err(ReportError::MissingBaseline(_))));
}

#[test]
fn empty_runs_cannot_be_summarized() {
    let net = grid_network(2, 2, 60.0, 1);
    let sim = SimConfig { fleet_size: 1, day_length_seconds: 600, ..SimConfig::default() };
    let out = run(&net, &sim, Vec::new(), &mut MyopicMatcher, None).unwrap();
    assert_eq!(summarize(&out), Err(ReportError::EmptyRun));
    let lonely = RunSummary { policy: "myopic".into(), fleet_size: 1, metrics: summarize(&busy_outcome(3)).unwrap() };
    assert!(matches!(compare(&[lonely], "myopic"), Err(ReportError::TooFewRuns)));
}

proptest! {
    #[test]
    fn endpoints_print_and_parse_back(node in any::<u64>(), zone in 0usize..10_000) {
        for e in [Endpoint::Node(node), Endpoint::Zone(zone)] {
            prop_assert_eq!(e.to_string().parse::<Endpoint>().unwrap(), e);
        }
    }
}
