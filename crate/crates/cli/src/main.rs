use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use ridepool::fleetsim::{log, DEMAND_STREAM};
use ridepool::ingest::{self, Pulse};
use ridepool::learner::{learn_day, LearnError};
use ridepool::planner::{calibrate_lambda, write_audit, AuditRow, CalibrationRecorder};
use ridepool::report::{self, RunSummary};
use ridepool::{
    run, scenario, seeded_rng, Matcher, MyopicMatcher, NonMyopicMatcher, Policy, Rebalancer, RebalancerKind,
    RejectedChase, Request, RoadNetwork, RunConfig, Seconds, SimConfig, SimError, SimOutcome, SpaceTimeGrid,
    StateValueTable, ValueRebalancer,
};

const EXIT_USAGE: u8 = 2;
const EXIT_INVARIANT: u8 = 3;

#[derive(Parser)]
#[command(name = "ridepool", version, about = "Ride-pooling fleet simulation with learned spatiotemporal state values")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Run configuration file (TOML); every key is optional
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root for input files named in the configuration
    #[arg(long, global = true, default_value = ".")]
    data_dir: PathBuf,
    /// Directory receiving all outputs
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Sets rng_seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Sets both fleet_size and learn_fleet_size
    #[arg(long, global = true)]
    fleet: Option<usize>,
    /// myopic | nonmyopic
    #[arg(long, global = true)]
    policy: Option<Policy>,
    /// none | value | rejected-chase
    #[arg(long, global = true)]
    rebalancer: Option<RebalancerKind>,
    /// Rebalancing interval in seconds
    #[arg(long, global = true)]
    tau: Option<Seconds>,
    /// Value table to read, relative to the data directory
    #[arg(long, global = true)]
    value_table: Option<PathBuf>,
    /// Demand files, one per day, comma separated
    #[arg(long, global = true, value_delimiter = ',')]
    days: Vec<PathBuf>,
    /// Override any configuration key
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Learn state values from myopic runs with a large fleet
    Learn {
        /// Continue from the existing value table instead of an empty one
        #[arg(long)]
        resume: bool,
        /// Skip the demand files before this index (for continuing an
        /// interrupted run with --resume)
        #[arg(long, default_value_t = 0)]
        start_day: usize,
    },
    /// Simulate each demand day and write logs and metrics
    Simulate {
        /// Also write per-tick vehicle positions
        #[arg(long)]
        trajectory: bool,
        /// Also write every evaluated non-myopic candidate
        #[arg(long)]
        audit: bool,
    },
    /// Estimate the cost scale factor from a myopic run
    CalibrateLambda,
    /// Run every fleet size against every policy and compare
    Sweep {
        #[arg(long, value_delimiter = ',', required = true)]
        fleets: Vec<usize>,
        /// Policies, optionally with a rebalancer: myopic,nonmyopic+value,...
        #[arg(long, value_delimiter = ',', required = true)]
        policies: Vec<String>,
        #[arg(long, default_value = "myopic")]
        baseline: String,
    },
    /// Compare metrics files written by `simulate`
    Compare {
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
        #[arg(long, default_value = "myopic")]
        baseline: String,
    },
    /// Export value table rows for selected time indices
    ExportHeatmap {
        #[arg(long, value_delimiter = ',', default_value = "96,156,216")]
        times: Vec<usize>,
    },
    /// Generate zone-form trip files from demand pulses
    SynthDemand {
        /// CSV with start_s,end_s,origin_zone,dest_zone,count
        #[arg(long, conflicts_with = "alternating")]
        pulses: Option<PathBuf>,
        /// HOURS,PER_HOUR,CROSS_SHARE: hot spot alternating between zones 0 and 1
        #[arg(long, value_delimiter = ',')]
        alternating: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        copies: usize,
        #[arg(long, default_value = "trips")]
        name: String,
    },
    /// Write a grid road network split into vertical zone bands
    SynthNetwork {
        #[arg(long, default_value_t = 16)]
        width: usize,
        #[arg(long, default_value_t = 8)]
        height: usize,
        #[arg(long, default_value_t = 2)]
        zones: usize,
        #[arg(long, default_value_t = 60.0)]
        edge_seconds: f64,
    },
}

fn main() -> ExitCode {
    let help = format!("Configuration keys and defaults:\n\n{}", RunConfig::default_toml());
    let matches = Cli::command().after_long_help(help).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(SimError::Invariant { .. }) = cause.downcast_ref::<SimError>() {
            return EXIT_INVARIANT;
        }
        match cause.downcast_ref::<LearnError>() {
            Some(LearnError::RejectionDuringLearning { .. }) | Some(LearnError::Sim(SimError::Invariant { .. })) => {
                return EXIT_INVARIANT
            }
            _ => {}
        }
    }
    EXIT_USAGE
}

struct Ctx {
    cfg: RunConfig,
    data_dir: PathBuf,
    out_dir: PathBuf,
    days: Vec<PathBuf>,
}

impl Ctx {
    fn new(common: Common) -> Result<Self> {
        let text = match &common.config {
            Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
            None => String::new(),
        };
        let name = common.config.as_ref().map_or("<defaults>".into(), |p| p.display().to_string());
        let mut table: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {name}"))?;
        for kv in &common.set {
            let (key, raw) = kv.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
            let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.into()));
            table.insert(key.trim().into(), value);
        }
        if let Some(s) = common.seed {
            table.insert("rng_seed".into(), toml::Value::Integer(s as i64));
        }
        let mut cfg: RunConfig = table.try_into().with_context(|| format!("invalid configuration in {name}"))?;
        if let Some(f) = common.fleet {
            cfg.fleet_size = f;
            cfg.learn_fleet_size = f;
        }
        if let Some(p) = common.policy {
            cfg.policy = p;
        }
        if let Some(r) = common.rebalancer {
            cfg.rebalancer = r;
        }
        if let Some(t) = common.tau {
            cfg.tau = t;
        }
        if let Some(v) = common.value_table {
            cfg.value_table = v;
        }
        if !common.days.is_empty() {
            cfg.demand_files = common.days;
        }
        cfg.validate().map_err(anyhow::Error::msg).context("invalid configuration")?;
        let days = cfg.demand_files.iter().map(|d| common.data_dir.join(d)).collect();
        Ok(Ctx { cfg, data_dir: common.data_dir, out_dir: common.out_dir, days })
    }

    fn data(&self, p: &Path) -> PathBuf {
        self.data_dir.join(p)
    }

    fn out(&self, name: impl AsRef<Path>) -> Result<BufWriter<File>> {
        fs::create_dir_all(&self.out_dir).with_context(|| format!("creating {}", self.out_dir.display()))?;
        let path = self.out_dir.join(name);
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(BufWriter::new(f))
    }

    fn network(&self) -> Result<RoadNetwork> {
        let (n, e) = (self.data(&self.cfg.nodes_file), self.data(&self.cfg.edges_file));
        RoadNetwork::load(&n, &e).with_context(|| format!("loading network {} / {}", n.display(), e.display()))
    }

    fn grid(&self, net: &RoadNetwork) -> SpaceTimeGrid {
        self.cfg.grid(net.num_zones())
    }

    fn require_days(&self) -> Result<()> {
        if self.days.is_empty() {
            bail!("no demand files given (use --days or demand_files in the configuration)");
        }
        Ok(())
    }

    fn demand(&self, net: &RoadNetwork, day: usize) -> Result<Vec<Request>> {
        let path = &self.days[day];
        let mut rng = seeded_rng(self.cfg.rng_seed, DEMAND_STREAM + day as u64);
        ingest::load_trips(path, net, self.cfg.day_length_seconds, &mut rng)
            .with_context(|| format!("loading demand {}", path.display()))
    }

    fn table(&self, grid: &SpaceTimeGrid) -> Result<StateValueTable> {
        let path = self.data(&self.cfg.value_table);
        let f = File::open(&path).with_context(|| format!("opening value table {}", path.display()))?;
        StateValueTable::read_csv(f, grid.num_periods, grid.num_zones)
            .with_context(|| format!("reading value table {}", path.display()))
    }

    fn table_out_name(&self) -> PathBuf {
        self.cfg.value_table.file_name().map_or_else(|| "values.csv".into(), PathBuf::from)
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let ctx = Ctx::new(cli.common)?;
    match cli.command {
        Command::Learn { resume, start_day } => learn(&ctx, resume, start_day),
        Command::Simulate { trajectory, audit } => simulate(&ctx, trajectory, audit),
        Command::CalibrateLambda => calibrate(&ctx),
        Command::Sweep { fleets, policies, baseline } => sweep(&ctx, &fleets, &policies, &baseline),
        Command::Compare { metrics, baseline } => compare(&ctx, &metrics, &baseline),
        Command::ExportHeatmap { times } => export_heatmap(&ctx, &times),
        Command::SynthDemand { pulses, alternating, copies, name } => {
            synth_demand(&ctx, pulses.as_deref(), &alternating, copies, &name)
        }
        Command::SynthNetwork { width, height, zones, edge_seconds } => {
            if zones == 0 || width < zones || height == 0 || !(edge_seconds > 0.0) {
                bail!("need height >= 1, 1 <= zones <= width and a positive edge time");
            }
            let net = scenario::grid_network(width, height, edge_seconds, zones);
            net.write_nodes(ctx.out("nodes.csv")?)?;
            net.write_edges(ctx.out("edges.csv")?)?;
            println!("wrote {} nodes in {} zones to {}", net.num_nodes(), zones, ctx.out_dir.display());
            Ok(())
        }
    }
}

fn learn(ctx: &Ctx, resume: bool, start_day: usize) -> Result<()> {
    ctx.require_days()?;
    if start_day >= ctx.days.len() {
        bail!("--start-day {start_day} but only {} demand files", ctx.days.len());
    }
    let net = ctx.network()?;
    let grid = ctx.grid(&net);
    let mut table = if resume { ctx.table(&grid)? } else { StateValueTable::for_grid(&grid) };
    let sim = SimConfig { fleet_size: ctx.cfg.learn_fleet_size, ..ctx.cfg.sim() };
    let lcfg = ctx.cfg.learner();
    let out = ctx.table_out_name();
    for day in start_day..ctx.days.len() {
        let demand = ctx.demand(&net, day)?;
        match learn_day(&mut table, day, demand, &net, &sim, &grid, &lcfg) {
            Ok(r) => {
                table.write_csv(ctx.out(&out)?)?;
                println!(
                    "day {day} ({}): {} requests, 0 rejected, {} assignments learned",
                    ctx.days[day].display(),
                    r.requests,
                    r.total_reward
                );
            }
            Err(e @ LearnError::RejectionDuringLearning { .. }) => {
                println!("day {day} ({}): zero-rejection check failed", ctx.days[day].display());
                return Err(e.into());
            }
            Err(e) => return Err(e).with_context(|| format!("learning day {day}")),
        }
    }
    println!("value table written to {}", ctx.out_dir.join(out).display());
    Ok(())
}

fn label(policy: Policy, rebalancer: RebalancerKind) -> String {
    match rebalancer {
        RebalancerKind::None => policy.to_string(),
        r => format!("{policy}+{r}"),
    }
}

fn parse_label(s: &str) -> Result<(Policy, RebalancerKind)> {
    let (p, r) = s.split_once('+').unwrap_or((s, "none"));
    Ok((p.parse().map_err(anyhow::Error::msg)?, r.parse().map_err(anyhow::Error::msg)?))
}

fn needs_table(policy: Policy, rebalancer: RebalancerKind) -> bool {
    policy == Policy::Nonmyopic || rebalancer == RebalancerKind::Value
}

/// Runs one day under the chosen policy pair.
fn run_day(
    ctx: &Ctx,
    net: &RoadNetwork,
    grid: &SpaceTimeGrid,
    sim: &SimConfig,
    (policy, rebalancer): (Policy, RebalancerKind),
    table: Option<&StateValueTable>,
    demand: Vec<Request>,
    audit: bool,
) -> Result<(SimOutcome, Vec<AuditRow>)> {
    let pcfg = ctx.cfg.planner();
    let value = || table.context("the selected policy needs a value table");
    let mut myopic = MyopicMatcher;
    let mut nonmyopic = match policy {
        Policy::Myopic => None,
        Policy::Nonmyopic => {
            let m = NonMyopicMatcher::new(value()?, pcfg, *grid);
            Some(if audit { m.with_audit() } else { m })
        }
    };
    let matcher: &mut dyn Matcher = match nonmyopic.as_mut() {
        Some(m) => m,
        None => &mut myopic,
    };
    let mut value_rb;
    let mut chase = RejectedChase;
    let rb: Option<&mut dyn Rebalancer> = match rebalancer {
        RebalancerKind::None => None,
        RebalancerKind::Value => {
            value_rb = ValueRebalancer::new(value()?, pcfg, *grid, ctx.cfg.tau);
            Some(&mut value_rb)
        }
        RebalancerKind::RejectedChase => Some(&mut chase),
    };
    let outcome = run(net, sim, demand, matcher, rb)?;
    let rows = nonmyopic.as_mut().map(NonMyopicMatcher::take_audit).unwrap_or_default();
    Ok((outcome, rows))
}

fn simulate(ctx: &Ctx, trajectory: bool, audit: bool) -> Result<()> {
    ctx.require_days()?;
    let net = ctx.network()?;
    let grid = ctx.grid(&net);
    let pair = (ctx.cfg.policy, ctx.cfg.rebalancer);
    let table = if needs_table(pair.0, pair.1) { Some(ctx.table(&grid)?) } else { None };
    let sim = ctx.cfg.sim();
    let mut summaries = Vec::new();
    for day in 0..ctx.days.len() {
        let demand = ctx.demand(&net, day)?;
        let (outcome, rows) = run_day(ctx, &net, &grid, &sim, pair, table.as_ref(), demand, audit)
            .with_context(|| format!("simulating {}", ctx.days[day].display()))?;
        log::write_requests(&outcome, ctx.out(format!("requests_d{day}.csv"))?)?;
        log::write_relocations(&outcome, ctx.out(format!("relocations_d{day}.csv"))?)?;
        if trajectory {
            log::write_trajectory(&outcome, &net, ctx.out(format!("trajectory_d{day}.csv"))?)?;
        }
        if audit && pair.0 == Policy::Nonmyopic {
            write_audit(&rows, ctx.out(format!("audit_d{day}.csv"))?)?;
        }
        let m = report::summarize(&outcome).with_context(|| format!("summarizing {}", ctx.days[day].display()))?;
        println!(
            "day {day}: service rate {:.4}, wait {:.2} min, in-vehicle {:.2} min, {} relocations",
            m.service_rate, m.mean_wait, m.mean_in_vehicle, m.relocations
        );
        summaries.push(m);
    }
    let pooled = report::write_metrics(&label(pair.0, pair.1), sim.fleet_size, &summaries, ctx.out("metrics.csv")?)?;
    report::write_hourly(&pooled, ctx.out("hourly.csv")?)?;
    println!("outputs written to {}", ctx.out_dir.display());
    Ok(())
}

fn calibrate(ctx: &Ctx) -> Result<()> {
    ctx.require_days()?;
    let net = ctx.network()?;
    let grid = ctx.grid(&net);
    let table = ctx.table(&grid)?;
    let sim = ctx.cfg.sim();
    let mut rec = CalibrationRecorder::new(&table, ctx.cfg.gamma, grid);
    for day in 0..ctx.days.len() {
        run(&net, &sim, ctx.demand(&net, day)?, &mut rec, None)?;
    }
    let lambda = calibrate_lambda(&rec.pairs)?;
    let mut w = ctx.out("lambda.csv")?;
    writeln!(w, "lambda,samples,configured")?;
    writeln!(w, "{lambda},{},{}", rec.pairs.len(), ctx.cfg.lambda)?;
    println!("calibrated lambda {lambda} from {} decisions (configured {})", rec.pairs.len(), ctx.cfg.lambda);
    Ok(())
}

fn sweep(ctx: &Ctx, fleets: &[usize], policies: &[String], baseline: &str) -> Result<()> {
    ctx.require_days()?;
    let pairs = policies.iter().map(|p| parse_label(p)).collect::<Result<Vec<_>>>()?;
    let net = ctx.network()?;
    let grid = ctx.grid(&net);
    let table = if pairs.iter().any(|&(p, r)| needs_table(p, r)) { Some(ctx.table(&grid)?) } else { None };
    let demands = (0..ctx.days.len()).map(|d| ctx.demand(&net, d)).collect::<Result<Vec<_>>>()?;
    let mut runs = Vec::new();
    for &fleet in fleets {
        let sim = SimConfig { fleet_size: fleet, ..ctx.cfg.sim() };
        for &pair in &pairs {
            let mut days = Vec::new();
            for demand in &demands {
                let (outcome, _) = run_day(ctx, &net, &grid, &sim, pair, table.as_ref(), demand.clone(), false)
                    .with_context(|| format!("fleet {fleet}, policy {}", label(pair.0, pair.1)))?;
                days.push(report::summarize(&outcome)?);
            }
            let metrics = report::aggregate(&days)?;
            println!("fleet {fleet} {}: service rate {:.4}", label(pair.0, pair.1), metrics.service_rate);
            runs.push(RunSummary { policy: label(pair.0, pair.1), fleet_size: fleet, metrics });
        }
    }
    let rows = report::compare(&runs, baseline)?;
    report::write_comparison(&rows, ctx.out("sweep.csv")?)?;
    println!("{} rows written to {}", rows.len(), ctx.out_dir.join("sweep.csv").display());
    Ok(())
}

fn compare(ctx: &Ctx, files: &[PathBuf], baseline: &str) -> Result<()> {
    let mut runs = Vec::new();
    for f in files {
        let f = ctx.data(f);
        let file = File::open(&f).with_context(|| format!("opening {}", f.display()))?;
        runs.extend(report::read_pooled(file).with_context(|| format!("reading {}", f.display()))?);
    }
    let rows = report::compare(&runs, baseline)?;
    report::write_comparison(&rows, ctx.out("comparison.csv")?)?;
    println!("{} rows written to {}", rows.len(), ctx.out_dir.join("comparison.csv").display());
    Ok(())
}

fn export_heatmap(ctx: &Ctx, times: &[usize]) -> Result<()> {
    let net = ctx.network()?;
    let grid = ctx.grid(&net);
    if let Some(t) = times.iter().find(|&&t| t >= grid.num_periods) {
        bail!("time index {t} outside 0..{}", grid.num_periods);
    }
    let table = ctx.table(&grid)?;
    report::heatmap_export(&table, times, ctx.out("heatmap.csv")?)?;
    println!("{} rows written to {}", times.len() * grid.num_zones, ctx.out_dir.join("heatmap.csv").display());
    Ok(())
}

fn synth_demand(ctx: &Ctx, pulses: Option<&Path>, alternating: &[f64], copies: usize, name: &str) -> Result<()> {
    let pulses: Vec<Pulse> = match (pulses, alternating) {
        (Some(p), _) => {
            let path = ctx.data(p);
            let f = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
            ingest::read_pulses(f, &path.display().to_string())?
        }
        (None, [hours, per_hour, cross]) => {
            if *hours < 1.0 || *hours > 24.0 || *per_hour < 0.0 || !(0.0..=1.0).contains(cross) {
                bail!("--alternating expects 1..=24 hours, a non-negative count and a share in [0, 1]");
            }
            scenario::alternating_pulses(*hours as usize, *per_hour as usize, *cross)
        }
        _ => bail!("give either --pulses or --alternating"),
    };
    if let Some(p) = pulses.iter().find(|p| p.end_s > ctx.cfg.day_length_seconds) {
        bail!("pulse window ending at {} s extends past the day", p.end_s);
    }
    for i in 0..copies {
        let trips = ingest::synth_demand(&pulses, &mut seeded_rng(ctx.cfg.rng_seed, i as u64));
        let file = if copies == 1 { format!("{name}.csv") } else { format!("{name}_{i}.csv") };
        ingest::write_trip_records(&trips, ctx.out(&file)?)?;
        println!("{} trips written to {}", trips.len(), ctx.out_dir.join(file).display());
    }
    Ok(())
}
