//! Test-only oracles, independent of the library's incremental paths.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use replicaplan::costs::AvailabilitySemantics;
use replicaplan::heuristics::{random_object_order, Action};
use replicaplan::model::{ObjectCatalog, ServerCatalog, TrafficMatrix};
use replicaplan::topology::{CostMatrix, Graph};
use replicaplan::{Algorithm, AvailabilityScope, Instance, ReplicationMatrix, SolverConfig};

pub const S1: usize = 0;
pub const S2: usize = 1;
pub const S3: usize = 2;
pub const O1: usize = 0;
pub const O2: usize = 1;

pub fn t1_with_capacities(capacities: [u64; 3]) -> Instance {
    let costs = CostMatrix::from_rows(&[vec![0, 2, 5], vec![2, 0, 3], vec![5, 3, 0]]).unwrap();
    let servers = ServerCatalog::new(capacities.to_vec(), vec![0.1, 0.2, 0.01]).unwrap();
    let objects = ObjectCatalog::new(vec![10, 20], vec![0, 2], 3).unwrap();
    let traffic = TrafficMatrix::from_rows(&[vec![0, 60], vec![40, 20], vec![10, 0]]).unwrap();
    Instance::new(costs, servers, objects, traffic).unwrap()
}

pub fn t1() -> Instance {
    t1_with_capacities([30, 30, 30])
}

/// Textbook O(V^2) Dijkstra from every source.
pub fn dijkstra_all_pairs(g: &Graph) -> Vec<Vec<u64>> {
    let n = g.node_count();
    let mut adj = vec![Vec::new(); n];
    for e in g.edges() {
        adj[e.u].push((e.v, e.cost));
        adj[e.v].push((e.u, e.cost));
    }
    (0..n)
        .map(|src| {
            let mut dist = vec![u64::MAX; n];
            let mut done = vec![false; n];
            dist[src] = 0;
            for _ in 0..n {
                let Some(u) = (0..n)
                    .filter(|&v| !done[v] && dist[v] != u64::MAX)
                    .min_by_key(|&v| dist[v])
                else {
                    break;
                };
                done[u] = true;
                for &(v, c) in &adj[u] {
                    dist[v] = dist[v].min(dist[u] + c);
                }
            }
            dist
        })
        .collect()
}

/// Direct access cost: every server pays its cheapest replicator, scanning the
/// matrix each time.
pub fn object_cost(inst: &Instance, x: &ReplicationMatrix, k: usize) -> u64 {
    (0..x.servers())
        .map(|i| {
            let best = (0..x.servers())
                .filter(|&j| x.get(j, k))
                .map(|j| inst.costs.get(i, j))
                .min()
                .expect("column has a replicator");
            best * inst.traffic.get(i, k)
        })
        .sum()
}

pub fn full_cost(inst: &Instance, x: &ReplicationMatrix) -> u64 {
    (0..x.objects()).map(|k| object_cost(inst, x, k)).sum()
}

pub fn nearest(inst: &Instance, x: &ReplicationMatrix, i: usize, k: usize) -> usize {
    (0..x.servers())
        .filter(|&j| x.get(j, k))
        .min_by_key(|&j| (inst.costs.get(i, j), j))
        .unwrap()
}

pub fn used(inst: &Instance, x: &ReplicationMatrix, i: usize) -> u64 {
    (0..x.objects())
        .filter(|&k| x.get(i, k))
        .map(|k| inst.objects.size(k))
        .sum()
}

pub fn availability(inst: &Instance, x: &ReplicationMatrix, k: usize, sem: AvailabilitySemantics) -> f64 {
    let f = inst.servers.failure_probs();
    let mut acc = 1.0;
    for (i, &fi) in f.iter().enumerate() {
        if x.get(i, k) {
            acc *= match sem {
                AvailabilitySemantics::Corrected => fi,
                AvailabilitySemantics::Literal => 1.0 - fi,
            };
        }
    }
    match sem {
        AvailabilitySemantics::Corrected => 1.0 - acc,
        AvailabilitySemantics::Literal => acc,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleCommit {
    pub server: usize,
    pub object: usize,
    pub source: usize,
    pub transfer_cost: u64,
    pub evicted: Vec<usize>,
    pub benefit: f64,
    pub cost_after: u64,
}

impl OracleCommit {
    pub fn actions(&self) -> Vec<Action> {
        let mut out: Vec<Action> = self
            .evicted
            .iter()
            .map(|&o| Action::Evict {
                server: self.server,
                object: o,
            })
            .collect();
        out.push(Action::Add {
            server: self.server,
            object: self.object,
            source: self.source,
            transfer_cost: self.transfer_cost,
        });
        out
    }
}

/// One step of the greedy loop, written as plainly as possible with full
/// cost recomputation everywhere. `only` restricts the flip to one object.
pub fn oracle_step(
    inst: &Instance,
    x: &ReplicationMatrix,
    cfg: &SolverConfig,
    only: Option<usize>,
) -> Option<(OracleCommit, ReplicationMatrix)> {
    let aware = cfg.algorithm.availability_aware();
    let factor = |i: usize| if aware { 1.0 - inst.servers.failure_prob(i) } else { 1.0 };
    let c = full_cost(inst, x) as i64;
    let mut best: Option<(OracleCommit, ReplicationMatrix)> = None;
    let mut b = 0.0;
    for i in 0..x.servers() {
        for k in 0..x.objects() {
            if only.is_some_and(|o| o != k) || x.get(i, k) {
                continue;
            }
            if let Some(cap) = cfg.max_replicas_per_object {
                if x.replica_count(k) >= cap {
                    continue;
                }
            }
            let src = nearest(inst, x, i, k);
            let transfer = inst.objects.size(k) * inst.costs.get(i, src);
            let mut with = x.clone();
            with.set(i, k, true);
            let pre = (c - full_cost(inst, &with) as i64 - transfer as i64) as f64 * factor(i);
            if pre <= 0.0 {
                continue;
            }

            let mut xp = x.clone();
            let mut evicted = Vec::new();
            while used(inst, &xp, i) + inst.objects.size(k) > inst.servers.capacity(i) {
                let mut pick = None;
                let mut bp = f64::NEG_INFINITY;
                for k2 in 0..x.objects() {
                    if xp.get(i, k2) && inst.objects.primary(k2) != i {
                        xp.set(i, k2, false);
                        let b2 = (c - full_cost(inst, &xp) as i64) as f64 * factor(i);
                        if b2 > bp {
                            pick = Some(k2);
                            bp = b2;
                        }
                        xp.set(i, k2, true);
                    }
                }
                let Some(k2) = pick else { break };
                xp.set(i, k2, false);
                evicted.push(k2);
            }
            if used(inst, &xp, i) + inst.objects.size(k) > inst.servers.capacity(i) {
                continue;
            }

            let mut after = xp.clone();
            after.set(i, k, true);
            if aware {
                let sem = cfg.availability_semantics;
                let ok_focal = availability(inst, &after, k, sem) >= availability(inst, x, k, sem) - 1e-12;
                let ok_rest = cfg.availability_scope == AvailabilityScope::FocalObject
                    || evicted
                        .iter()
                        .all(|&e| availability(inst, &after, e, sem) >= availability(inst, x, e, sem) - 1e-12);
                if !(ok_focal && ok_rest) {
                    continue;
                }
            }
            let cost_after = full_cost(inst, &after);
            let benefit = (c - cost_after as i64 - transfer as i64) as f64 * factor(i);
            if benefit > b {
                b = benefit;
                best = Some((
                    OracleCommit {
                        server: i,
                        object: k,
                        source: src,
                        transfer_cost: transfer,
                        evicted,
                        benefit,
                        cost_after,
                    },
                    after,
                ));
            }
        }
    }
    best
}

/// Full greedy run by the oracle: global for AAGG/GG, per-object in the
/// solver's seeded order for AAGRO/GRO.
pub fn oracle_solve(
    inst: &Instance,
    x_old: &ReplicationMatrix,
    cfg: &SolverConfig,
) -> (Vec<OracleCommit>, ReplicationMatrix) {
    let mut x = x_old.clone();
    let mut commits = Vec::new();
    let objects: Vec<Option<usize>> = if cfg.algorithm.random_object() {
        random_object_order(x.objects(), cfg.seed)
            .into_iter()
            .map(Some)
            .collect()
    } else {
        vec![None]
    };
    for only in objects {
        while let Some((commit, next)) = oracle_step(inst, &x, cfg, only) {
            commits.push(commit);
            x = next;
        }
    }
    (commits, x)
}

pub fn oracle_schedule(commits: &[OracleCommit]) -> Vec<Action> {
    commits.iter().flat_map(OracleCommit::actions).collect()
}

pub struct RandomSpec {
    pub max_servers: usize,
    pub max_objects: usize,
    pub failure_choices: &'static [f64],
}

pub const TINY: RandomSpec = RandomSpec {
    max_servers: 4,
    max_objects: 3,
    failure_choices: &[0.0, 0.05, 0.1, 0.3, 0.6, 0.9],
};

/// Random connected instance; capacities leave each server a little room
/// beyond its primaries so evictions happen.
pub fn random_instance(seed: u64, spec: &RandomSpec) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.gen_range(2..=spec.max_servers);
    let n = rng.gen_range(1..=spec.max_objects);
    let mut edges = Vec::new();
    for v in 1..m {
        edges.push((rng.gen_range(0..v), v, rng.gen_range(1..=6)));
    }
    for u in 0..m {
        for v in u + 1..m {
            if rng.gen_bool(0.25) && !edges.iter().any(|&(a, b, _)| (a, b) == (u, v)) {
                edges.push((u, v, rng.gen_range(1..=6)));
            }
        }
    }
    let graph = Graph::new(m, edges).unwrap();
    let costs = replicaplan::topology::all_pairs_shortest_paths(&graph).unwrap();
    let sizes: Vec<u64> = (0..n).map(|_| rng.gen_range(1..=6)).collect();
    let primaries: Vec<usize> = (0..n).map(|_| rng.gen_range(0..m)).collect();
    let mut capacities = vec![0u64; m];
    for k in 0..n {
        capacities[primaries[k]] += sizes[k];
    }
    for c in &mut capacities {
        *c += rng.gen_range(0..=8);
        *c = (*c).max(1);
    }
    let failure: Vec<f64> = (0..m)
        .map(|_| spec.failure_choices[rng.gen_range(0..spec.failure_choices.len())])
        .collect();
    let traffic: Vec<Vec<u64>> = (0..m)
        .map(|_| {
            (0..n)
                .map(|_| if rng.gen_bool(0.2) { 0 } else { rng.gen_range(0..60) })
                .collect()
        })
        .collect();
    Instance::new(
        costs,
        ServerCatalog::new(capacities, failure).unwrap(),
        ObjectCatalog::new(sizes, primaries, m).unwrap(),
        TrafficMatrix::from_rows(&traffic).unwrap(),
    )
    .unwrap()
}

/// Random starting placement: primaries plus whatever extra replicas fit.
pub fn random_start(inst: &Instance, seed: u64) -> ReplicationMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut x = replicaplan::model::primary_only_placement(&inst.servers, &inst.objects).unwrap();
    for i in 0..x.servers() {
        for k in 0..x.objects() {
            if !x.get(i, k) && rng.gen_bool(0.3) && used(inst, &x, i) + inst.objects.size(k) <= inst.servers.capacity(i)
            {
                x.set(i, k, true);
            }
        }
    }
    x
}

pub fn config(alg: Algorithm, cap: Option<usize>, seed: u64) -> SolverConfig {
    SolverConfig::new(alg).with_cap(cap).with_seed(seed)
}
