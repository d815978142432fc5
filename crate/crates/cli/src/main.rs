//! `replicaplan`: generate scenarios, run placement solvers and sweeps,
//! inspect placements.
//!
//! Exit codes: 0 success, 1 validation failure, 2 usage error, 3 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use replicaplan::costs::AvailabilitySemantics;
use replicaplan::experiment::{
    self, AvailabilitySource, CapacityPolicy, ExperimentConfig, RunOptions, Scenario, COSTS_FILE, SCENARIO_FILE,
    TOPOLOGY_FILE,
};
use replicaplan::model::{self, PlacementDocument, ReplicationMatrix};
use replicaplan::workload::{AvailabilityDistribution, TrafficKind, DEFAULT_F_MAX};
use replicaplan::{Algorithm, AvailabilityScope, Error};

#[derive(Parser)]
#[command(
    name = "replicaplan",
    version,
    about = "Availability-aware continuous replica placement"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a topology and scenario.
    Gen(GenArgs),
    /// Run one solver from a starting placement.
    Solve(SolveArgs),
    /// Run every (algorithm, cap) pair from the primary-only placement.
    Sweep(SweepArgs),
    /// Validate a placement and report its cost and availability.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 50)]
    nodes: usize,
    #[arg(long, default_value_t = 1)]
    m_links: usize,
    #[arg(long, default_value_t = 1)]
    cost_lo: u64,
    #[arg(long, default_value_t = 10)]
    cost_hi: u64,
    #[arg(long, default_value_t = 1000)]
    objects: usize,
    #[arg(long, default_value_t = 1000)]
    size_lo: u64,
    #[arg(long, default_value_t = 5000)]
    size_hi: u64,
    #[arg(long, default_value = "zipf")]
    traffic: TrafficKind,
    #[arg(long, default_value_t = 0.8)]
    zipf_skew: f64,
    /// Total bytes of client traffic across all servers and objects.
    #[arg(long, default_value_t = 1_000_000_000)]
    total_volume: u64,
    /// Failure trace CSV (node_id,start,end,state).
    #[arg(long, conflicts_with = "synthetic_availability")]
    trace: Option<PathBuf>,
    /// Ceiling for failure probabilities estimated from a trace.
    #[arg(long, default_value_t = DEFAULT_F_MAX)]
    f_max: f64,
    /// uniform:LO:HI or constant:F (failure probabilities).
    #[arg(long, default_value = "uniform:0:0.3")]
    synthetic_availability: AvailabilityDistribution,
    /// slack[:FACTOR] or unbounded.
    #[arg(long, default_value = "slack:1.5")]
    capacity_policy: CapacityPolicy,
    /// Replica cap the generated capacities are sized for.
    #[arg(long, default_value = "5", value_parser = parse_cap)]
    cap: Cap,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long, default_value = TOPOLOGY_FILE)]
    topology: PathBuf,
    #[arg(long, default_value = SCENARIO_FILE)]
    scenario: PathBuf,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, default_value = "focal-object")]
    availability_scope: AvailabilityScope,
    #[arg(long, default_value = "corrected")]
    availability_semantics: AvailabilitySemantics,
    /// Master seed; the AAGRO/GRO object order is derived from it.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Write runtime_ms as 0 so output is byte-stable.
    #[arg(long)]
    no_timing: bool,
}

impl SolverArgs {
    fn options(&self) -> RunOptions {
        RunOptions {
            scope: self.availability_scope,
            semantics: self.availability_semantics,
            master_seed: self.seed,
            timing: !self.no_timing,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Starting placement (default: primary copies only).
    #[arg(long)]
    x_old: Option<PathBuf>,
    #[arg(long)]
    alg: Algorithm,
    /// Maximum replicas per object, or `unlimited`.
    #[arg(long, default_value = "unlimited", value_parser = parse_cap)]
    cap: Cap,
    /// file, unbounded or slack[:FACTOR].
    #[arg(long, default_value = "file")]
    capacity_policy: CapacityPolicy,
    #[command(flatten)]
    solver: SolverArgs,
    /// Directory for placement.json, result.json and results.csv.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, value_delimiter = ',', default_value = "aagg,aagro,gg,gro")]
    alg: Vec<Algorithm>,
    /// 1..K or a comma list starting at 1.
    #[arg(long, default_value = "1..5", value_parser = parse_caps)]
    caps: Caps,
    #[arg(long, default_value = "slack:1.5")]
    capacity_policy: CapacityPolicy,
    #[command(flatten)]
    solver: SolverArgs,
    /// Directory for results.csv and sweep.gp; CSV goes to stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long)]
    placement: PathBuf,
    #[arg(long, default_value = "corrected")]
    availability_semantics: AvailabilitySemantics,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

/// `K` or `unlimited`.
#[derive(Clone, Copy, Debug)]
struct Cap(Option<usize>);

fn parse_cap(s: &str) -> Result<Cap, Error> {
    experiment::parse_cap(s).map(Cap)
}

#[derive(Clone, Debug)]
struct Caps(Vec<usize>);

fn parse_caps(s: &str) -> Result<Caps, Error> {
    experiment::parse_caps(s).map(Caps)
}

enum Failure {
    Validation(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_io() {
            Failure::Io(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Inspect(args) => cmd_inspect(args),
    };
    match outcome {
        Ok(code) => code,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn cmd_gen(args: GenArgs) -> Result<ExitCode, Failure> {
    let availability = match args.trace {
        Some(path) => AvailabilitySource::Trace {
            path,
            f_max: args.f_max,
        },
        None => AvailabilitySource::Synthetic(args.synthetic_availability),
    };
    let config = ExperimentConfig {
        nodes: args.nodes,
        m_links: args.m_links,
        cost_lo: args.cost_lo,
        cost_hi: args.cost_hi,
        objects: args.objects,
        size_lo: args.size_lo,
        size_hi: args.size_hi,
        traffic: args.traffic,
        zipf_skew: args.zipf_skew,
        total_volume: args.total_volume,
        availability,
        capacity_policy: args.capacity_policy,
        capacity_cap: args.cap.0,
        seed: args.seed,
    };
    let scenario = Scenario::generate(&config)?;
    scenario.save(&args.out)?;
    println!(
        "wrote {}, {}, {} to {} ({} servers, {} edges, {} objects)",
        TOPOLOGY_FILE,
        SCENARIO_FILE,
        COSTS_FILE,
        args.out.display(),
        scenario.graph.node_count(),
        scenario.graph.edges().len(),
        scenario.instance.objects_len()
    );
    Ok(ExitCode::SUCCESS)
}

fn load_placement(path: &Path, inst: &model::Instance) -> Result<ReplicationMatrix, Failure> {
    let doc = PlacementDocument::load(path)?;
    Ok(ReplicationMatrix::from_document(
        &doc,
        inst.servers_len(),
        inst.objects_len(),
    )?)
}

fn cmd_solve(args: SolveArgs) -> Result<ExitCode, Failure> {
    let scenario = Scenario::load(&args.scenario.topology, &args.scenario.scenario)?;
    let inst = scenario.instance_for(args.capacity_policy, args.cap.0)?;
    let x_old = match &args.x_old {
        Some(path) => load_placement(path, &inst)?,
        None => model::primary_only_placement(&inst.servers, &inst.objects)?,
    };
    let opts = args.solver.options();
    let config = opts.solver_config(args.alg, args.cap.0);
    let (result, row) = experiment::run_solve(&inst, &x_old, &config, &opts)?;

    std::fs::create_dir_all(&args.out).map_err(|e| io_failure(&args.out, e))?;
    result.x_new.to_document().save(args.out.join("placement.json"))?;
    let result_path = args.out.join("result.json");
    let mut json = serde_json::to_string_pretty(&result).expect("result serializes");
    json.push('\n');
    std::fs::write(&result_path, json).map_err(|e| io_failure(&result_path, e))?;
    experiment::write_results_csv(args.out.join("results.csv"), std::slice::from_ref(&row))?;

    println!("{}", experiment::RESULTS_HEADER);
    println!("{}", row.to_csv_line());
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode, Failure> {
    let scenario = Scenario::load(&args.scenario.topology, &args.scenario.scenario)?;
    let opts = args.solver.options();
    let rows = experiment::run_sweep(&scenario, &args.alg, &args.caps.0, args.capacity_policy, &opts)?;
    match &args.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
            experiment::write_results_csv(dir.join("results.csv"), &rows)?;
            let gp = dir.join("sweep.gp");
            std::fs::write(&gp, experiment::gnuplot_script("results.csv", &args.alg))
                .map_err(|e| io_failure(&gp, e))?;
            println!("wrote {} rows to {}", rows.len(), dir.join("results.csv").display());
        }
        None => print!("{}", experiment::results_csv(&rows)),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_inspect(args: InspectArgs) -> Result<ExitCode, Failure> {
    let scenario = Scenario::load(&args.scenario.topology, &args.scenario.scenario)?;
    let inst = &scenario.instance;
    let x = load_placement(&args.placement, inst)?;
    let report = experiment::inspect(inst, &x, args.availability_semantics)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        print!("{report}");
    }
    Ok(if report.valid {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
