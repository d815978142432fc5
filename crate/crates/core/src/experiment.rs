//! Deterministic experiment harness: scenario generation, single solves,
//! replica-cap sweeps and placement inspection.
//!
//! One master seed drives every random choice. Each consumer gets its own
//! sub-seed, the first `u64` of a ChaCha8 generator seeded with the master
//! seed and switched to the consumer's stream id (see [`SeedStream`]).

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::costs::{self, AvailabilitySemantics};
use crate::error::{Error, Result};
use crate::heuristics::{self, Algorithm, AvailabilityScope, PlacementResult, SolverConfig};
use crate::model::{
    self, Instance, ObjectCatalog, Placement, ReplicationMatrix, ScenarioDocument, ServerCatalog, Violation,
};
use crate::topology::{self, Graph};
use crate::workload::{self, AvailabilityDistribution, TrafficKind, TrafficModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum SeedStream {
    Topology = 1,
    LinkCosts = 2,
    Catalog = 3,
    Traffic = 4,
    Availability = 5,
    ObjectOrder = 6,
}

pub fn derive_seed(master: u64, stream: SeedStream) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream as u64);
    rng.next_u64()
}

/// How server capacities are set for a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CapacityPolicy {
    /// Keep the capacities stored in the scenario.
    File,
    /// Primary load plus `factor` times an even share of the bytes needed
    /// to give every object `cap - 1` extra copies.
    Slack {
        factor: f64,
    },
    Unbounded,
}

impl CapacityPolicy {
    /// Capacities for a run with replica cap `cap` (`None` = unlimited,
    /// which sizes the slack as if every server held a copy).
    pub fn capacities(&self, current: &[u64], objects: &ObjectCatalog, cap: Option<usize>) -> Vec<u64> {
        let m = current.len();
        match *self {
            CapacityPolicy::File => current.to_vec(),
            CapacityPolicy::Unbounded => vec![u64::MAX; m],
            CapacityPolicy::Slack { factor } => {
                let mut primary_load = vec![0u64; m];
                for k in 0..objects.len() {
                    primary_load[objects.primary(k)] += objects.size(k);
                }
                let total: u64 = objects.sizes().iter().sum();
                let extra_copies = cap.unwrap_or(m).saturating_sub(1) as f64;
                let share = (factor * total as f64 * extra_copies / m as f64).floor() as u64;
                primary_load.iter().map(|&p| (p + share).max(1)).collect()
            }
        }
    }
}

impl FromStr for CapacityPolicy {
    type Err = Error;

    /// `file`, `unbounded`, `slack` (factor 1.5) or `slack:FACTOR`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "file" => Ok(CapacityPolicy::File),
            None if s == "unbounded" => Ok(CapacityPolicy::Unbounded),
            None if s == "slack" => Ok(CapacityPolicy::Slack { factor: 1.5 }),
            Some(("slack", f)) => {
                let factor: f64 = f
                    .parse()
                    .map_err(|e| Error::Parameter(format!("slack factor {f:?}: {e}")))?;
                if !(factor >= 0.0 && factor.is_finite()) {
                    return Err(Error::Parameter(format!("slack factor {factor} must be >= 0")));
                }
                Ok(CapacityPolicy::Slack { factor })
            }
            _ => Err(Error::Parameter(format!(
                "capacity policy {s:?} must be file, unbounded or slack[:FACTOR]"
            ))),
        }
    }
}

impl fmt::Display for CapacityPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CapacityPolicy::File => f.write_str("file"),
            CapacityPolicy::Unbounded => f.write_str("unbounded"),
            CapacityPolicy::Slack { factor } => write!(f, "slack:{factor}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum AvailabilitySource {
    Trace { path: PathBuf, f_max: f64 },
    Synthetic(AvailabilityDistribution),
}

/// Parameters of a generated scenario. Defaults reproduce the reference
/// setup: 50-node BA tree, link costs 1..=10, 1000 objects of 1000..=5000
/// bytes with random primaries.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub nodes: usize,
    pub m_links: usize,
    pub cost_lo: u64,
    pub cost_hi: u64,
    pub objects: usize,
    pub size_lo: u64,
    pub size_hi: u64,
    pub traffic: TrafficKind,
    pub zipf_skew: f64,
    pub total_volume: u64,
    pub availability: AvailabilitySource,
    pub capacity_policy: CapacityPolicy,
    /// Replica cap the stored capacities are sized for.
    pub capacity_cap: Option<usize>,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            nodes: 50,
            m_links: 1,
            cost_lo: 1,
            cost_hi: 10,
            objects: 1000,
            size_lo: 1000,
            size_hi: 5000,
            traffic: TrafficKind::Zipf,
            zipf_skew: 0.8,
            total_volume: 1_000_000_000,
            availability: AvailabilitySource::Synthetic(AvailabilityDistribution::Uniform { lo: 0.0, hi: 0.3 }),
            capacity_policy: CapacityPolicy::Slack { factor: 1.5 },
            capacity_cap: Some(5),
            seed: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes == 0 {
            return Err(Error::Parameter("--nodes must be at least 1".into()));
        }
        if self.objects == 0 {
            return Err(Error::Parameter("--objects must be at least 1".into()));
        }
        if self.capacity_cap == Some(0) {
            return Err(Error::Parameter("replica cap must be at least 1".into()));
        }
        Ok(())
    }
}

/// A generated or loaded scenario: the link graph plus the instance built
/// from it.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub graph: Graph,
    pub instance: Instance,
}

pub const TOPOLOGY_FILE: &str = "topology.json";
pub const SCENARIO_FILE: &str = "scenario.json";
pub const COSTS_FILE: &str = "costs.csv";

impl Scenario {
    pub fn generate(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let seed = |s| derive_seed(config.seed, s);
        let graph = topology::generate_ba_topology(config.nodes, config.m_links, seed(SeedStream::Topology))?;
        let graph = topology::assign_link_costs(&graph, config.cost_lo, config.cost_hi, seed(SeedStream::LinkCosts))?;
        let costs = topology::all_pairs_shortest_paths(&graph)?;

        let objects = workload::generate_object_catalog(
            config.objects,
            config.size_lo,
            config.size_hi,
            config.nodes,
            seed(SeedStream::Catalog),
        )?;
        let traffic = workload::generate_traffic(
            &TrafficModel {
                kind: config.traffic,
                zipf_skew: config.zipf_skew,
                total_volume: config.total_volume,
                seed: seed(SeedStream::Traffic),
            },
            config.nodes,
            config.objects,
        )?;
        let failure_probs = match &config.availability {
            AvailabilitySource::Synthetic(dist) => {
                workload::synthetic_availability(config.nodes, *dist, seed(SeedStream::Availability))?
            }
            AvailabilitySource::Trace { path, f_max } => {
                let trace = workload::load_failure_trace(path)?;
                workload::estimate_availability(&trace, config.nodes, *f_max)?
            }
        };
        let policy = match config.capacity_policy {
            CapacityPolicy::File => CapacityPolicy::Unbounded,
            other => other,
        };
        let capacities = policy.capacities(&vec![0; config.nodes], &objects, config.capacity_cap);
        let servers = ServerCatalog::new(capacities, failure_probs)?;
        let instance = Instance::new(costs, servers, objects, traffic)?;
        Ok(Scenario { graph, instance })
    }

    pub fn load(topology_path: impl AsRef<Path>, scenario_path: impl AsRef<Path>) -> Result<Self> {
        let graph = Graph::load(topology_path)?;
        let costs = topology::all_pairs_shortest_paths(&graph)?;
        let doc = ScenarioDocument::load(scenario_path)?;
        let instance = Instance::from_scenario(&doc, costs)?;
        Ok(Scenario { graph, instance })
    }

    /// Writes `topology.json`, `scenario.json` and `costs.csv` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.graph.save(dir.join(TOPOLOGY_FILE))?;
        self.instance.to_scenario().save(dir.join(SCENARIO_FILE))?;
        let costs_path = dir.join(COSTS_FILE);
        std::fs::write(&costs_path, self.instance.costs.to_csv()).map_err(|e| Error::io(&costs_path, e))
    }

    /// Same scenario with capacities replaced according to `policy`.
    pub fn instance_for(&self, policy: CapacityPolicy, cap: Option<usize>) -> Result<Instance> {
        let inst = &self.instance;
        let capacities = policy.capacities(inst.servers.capacities(), &inst.objects, cap);
        let servers = ServerCatalog::new(capacities, inst.servers.failure_probs().to_vec())?;
        Instance::new(inst.costs.clone(), servers, inst.objects.clone(), inst.traffic.clone())
    }
}

pub const RESULTS_HEADER: &str =
    "algorithm,cap,seed,c_old,c_new,impl_cost,benefit_total,flips,evictions,min_avail_old,min_avail_new,runtime_ms";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub algorithm: Algorithm,
    pub cap: Option<usize>,
    pub seed: u64,
    pub c_old: u64,
    pub c_new: u64,
    pub impl_cost: u64,
    pub benefit_total: f64,
    pub flips: usize,
    pub evictions: usize,
    pub min_avail_old: f64,
    pub min_avail_new: f64,
    pub runtime_ms: u64,
}

impl ResultRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.algorithm,
            format_cap(self.cap),
            self.seed,
            self.c_old,
            self.c_new,
            self.impl_cost,
            self.benefit_total,
            self.flips,
            self.evictions,
            self.min_avail_old,
            self.min_avail_new,
            self.runtime_ms
        )
    }
}

pub fn format_cap(cap: Option<usize>) -> String {
    cap.map_or_else(|| "unlimited".to_string(), |c| c.to_string())
}

pub fn parse_cap(s: &str) -> Result<Option<usize>> {
    if s == "unlimited" {
        return Ok(None);
    }
    match s.parse::<usize>() {
        Ok(0) => Err(Error::Parameter("replica cap must be at least 1".into())),
        Ok(c) => Ok(Some(c)),
        Err(e) => Err(Error::Parameter(format!("replica cap {s:?}: {e}"))),
    }
}

/// `1..K`, `1..=K` (both inclusive) or a comma list `1,2,4`. Must start at 1
/// and increase strictly.
pub fn parse_caps(s: &str) -> Result<Vec<usize>> {
    let caps: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let lo: usize = a
            .trim()
            .parse()
            .map_err(|e| Error::Parameter(format!("caps {s:?}: {e}")))?;
        let hi: usize = b
            .trim_start_matches('=')
            .trim()
            .parse()
            .map_err(|e| Error::Parameter(format!("caps {s:?}: {e}")))?;
        (lo..=hi).collect()
    } else {
        s.split(',')
            .map(|c| {
                c.trim()
                    .parse()
                    .map_err(|e| Error::Parameter(format!("caps {s:?}: {e}")))
            })
            .collect::<Result<_>>()?
    };
    validate_caps(&caps)?;
    Ok(caps)
}

pub fn validate_caps(caps: &[usize]) -> Result<()> {
    if caps.first() != Some(&1) {
        return Err(Error::Parameter("cap list must start at 1".into()));
    }
    if caps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter("cap list must be strictly increasing".into()));
    }
    Ok(())
}

fn min_availability(x: &ReplicationMatrix, inst: &Instance, semantics: AvailabilitySemantics) -> f64 {
    let f = inst.servers.failure_probs();
    (0..x.objects())
        .map(|k| costs::availability_of(x.replicators(k), f, semantics))
        .fold(1.0, f64::min)
}

/// Options shared by single solves and sweeps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions {
    pub scope: AvailabilityScope,
    pub semantics: AvailabilitySemantics,
    pub master_seed: u64,
    /// When false, `runtime_ms` is written as 0 so output is byte-stable.
    pub timing: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            scope: AvailabilityScope::default(),
            semantics: AvailabilitySemantics::default(),
            master_seed: 1,
            timing: true,
        }
    }
}

impl RunOptions {
    pub fn solver_config(&self, algorithm: Algorithm, cap: Option<usize>) -> SolverConfig {
        SolverConfig::new(algorithm)
            .with_cap(cap)
            .with_scope(self.scope)
            .with_semantics(self.semantics)
            .with_seed(derive_seed(self.master_seed, SeedStream::ObjectOrder))
    }
}

pub fn run_solve(
    inst: &Instance,
    x_old: &ReplicationMatrix,
    config: &SolverConfig,
    opts: &RunOptions,
) -> Result<(PlacementResult, ResultRow)> {
    let started = Instant::now();
    let result = heuristics::solve(inst, x_old, config)?;
    let runtime_ms = if opts.timing {
        started.elapsed().as_millis() as u64
    } else {
        0
    };
    let row = ResultRow {
        algorithm: config.algorithm,
        cap: config.max_replicas_per_object,
        seed: opts.master_seed,
        c_old: result.c_old,
        c_new: result.c_new,
        impl_cost: result.impl_cost_total,
        benefit_total: result.benefit_total,
        flips: result.flips(),
        evictions: result.evictions(),
        min_avail_old: min_availability(x_old, inst, config.availability_semantics),
        min_avail_new: min_availability(&result.x_new, inst, config.availability_semantics),
        runtime_ms,
    };
    Ok((result, row))
}

/// One row per `(algorithm, cap)`, each solved from the primary-only
/// placement, sorted by algorithm then cap.
pub fn run_sweep(
    scenario: &Scenario,
    algorithms: &[Algorithm],
    caps: &[usize],
    policy: CapacityPolicy,
    opts: &RunOptions,
) -> Result<Vec<ResultRow>> {
    validate_caps(caps)?;
    let mut algorithms = algorithms.to_vec();
    algorithms.sort();
    algorithms.dedup();
    let cells: Vec<(Algorithm, usize)> = algorithms
        .iter()
        .flat_map(|&a| caps.iter().map(move |&c| (a, c)))
        .collect();
    cells
        .par_iter()
        .map(|&(algorithm, cap)| {
            let inst = scenario.instance_for(policy, Some(cap))?;
            let x_old = model::primary_only_placement(&inst.servers, &inst.objects)?;
            let cfg = opts.solver_config(algorithm, Some(cap));
            run_solve(&inst, &x_old, &cfg, opts).map(|(_, row)| row)
        })
        .collect()
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv_line());
        out.push('\n');
    }
    out
}

pub fn write_results_csv(path: impl AsRef<Path>, rows: &[ResultRow]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, results_csv(rows)).map_err(|e| Error::io(path, e))
}

/// gnuplot script plotting implementation cost against the replica cap,
/// one line per algorithm.
pub fn gnuplot_script(csv_file: &str, algorithms: &[Algorithm]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set key autotitle columnhead");
    let _ = writeln!(s, "set xlabel 'replicas per object'");
    let _ = writeln!(s, "set ylabel 'implementation cost'");
    let plots: Vec<String> = algorithms
        .iter()
        .map(|a| {
            format!(
                "'{csv_file}' using (strcol(1) eq '{a}' ? $2 : 1/0):6 with linespoints title '{}'",
                a.name().to_uppercase()
            )
        })
        .collect();
    let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
    s
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InspectReport {
    pub valid: bool,
    pub violations: Vec<Violation>,
    pub access_cost: u64,
    pub per_object_availability: Vec<f64>,
    pub min_availability: f64,
    /// replicas per object -> number of objects
    pub replica_histogram: BTreeMap<usize, usize>,
}

pub fn inspect(inst: &Instance, x: &ReplicationMatrix, semantics: AvailabilitySemantics) -> Result<InspectReport> {
    let violations = model::validate_placement(x, &inst.servers, &inst.objects)?;
    let placement = Placement::new(inst, x.clone())?;
    let access_cost = costs::total_access_cost(inst, placement.nearest()).total;
    let f = inst.servers.failure_probs();
    let per_object_availability: Vec<f64> = (0..x.objects())
        .map(|k| costs::availability_of(x.replicators(k), f, semantics))
        .collect();
    let mut replica_histogram = BTreeMap::new();
    for k in 0..x.objects() {
        *replica_histogram.entry(x.replica_count(k)).or_insert(0) += 1;
    }
    Ok(InspectReport {
        valid: violations.is_empty(),
        min_availability: per_object_availability.iter().copied().fold(1.0, f64::min),
        violations,
        access_cost,
        per_object_availability,
        replica_histogram,
    })
}

impl fmt::Display for InspectReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "valid: {}", if self.valid { "yes" } else { "NO" })?;
        for v in &self.violations {
            writeln!(f, "  violation: {v}")?;
        }
        writeln!(f, "access cost: {}", self.access_cost)?;
        writeln!(f, "min object availability: {}", self.min_availability)?;
        writeln!(f, "replica histogram (replicas: objects):")?;
        for (replicas, objects) in &self.replica_histogram {
            writeln!(f, "  {replicas}: {objects}")?;
        }
        Ok(())
    }
}
