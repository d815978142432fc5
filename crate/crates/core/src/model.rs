//! Domain state: catalogs, traffic, the replication matrix and the
//! nearest-replicator index that the solvers keep up to date as they flip
//! cells.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::CostMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct ServerCatalog {
    capacities: Vec<u64>,
    failure_probs: Vec<f64>,
}

impl ServerCatalog {
    pub fn new(capacities: Vec<u64>, failure_probs: Vec<f64>) -> Result<Self> {
        if capacities.len() != failure_probs.len() {
            return Err(Error::Structural(format!(
                "{} capacities but {} failure probabilities",
                capacities.len(),
                failure_probs.len()
            )));
        }
        if capacities.is_empty() {
            return Err(Error::Structural("no servers".into()));
        }
        if let Some(i) = capacities.iter().position(|&c| c == 0) {
            return Err(Error::Parameter(format!("server {i} has zero capacity")));
        }
        if let Some(i) = failure_probs.iter().position(|f| !(0.0..1.0).contains(f)) {
            return Err(Error::Parameter(format!(
                "server {i} failure probability {} is outside [0, 1)",
                failure_probs[i]
            )));
        }
        Ok(ServerCatalog {
            capacities,
            failure_probs,
        })
    }

    pub fn len(&self) -> usize {
        self.capacities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.capacities.is_empty()
    }

    pub fn capacities(&self) -> &[u64] {
        &self.capacities
    }

    pub fn capacity(&self, i: usize) -> u64 {
        self.capacities[i]
    }

    pub fn failure_probs(&self) -> &[f64] {
        &self.failure_probs
    }

    pub fn failure_prob(&self, i: usize) -> f64 {
        self.failure_probs[i]
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObjectCatalog {
    sizes: Vec<u64>,
    primaries: Vec<usize>,
}

impl ObjectCatalog {
    /// `server_count` bounds the primary ids.
    pub fn new(sizes: Vec<u64>, primaries: Vec<usize>, server_count: usize) -> Result<Self> {
        if sizes.len() != primaries.len() {
            return Err(Error::Structural(format!(
                "{} sizes but {} primaries",
                sizes.len(),
                primaries.len()
            )));
        }
        if let Some(k) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::Parameter(format!("object {k} has zero size")));
        }
        if let Some(k) = primaries.iter().position(|&p| p >= server_count) {
            return Err(Error::Structural(format!(
                "object {k} has primary {} outside 0..{server_count}",
                primaries[k]
            )));
        }
        Ok(ObjectCatalog { sizes, primaries })
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn sizes(&self) -> &[u64] {
        &self.sizes
    }

    pub fn size(&self, k: usize) -> u64 {
        self.sizes[k]
    }

    pub fn primaries(&self) -> &[usize] {
        &self.primaries
    }

    pub fn primary(&self, k: usize) -> usize {
        self.primaries[k]
    }
}

/// Bytes of client traffic for object `k` arriving at server `i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrafficMatrix {
    m: usize,
    n: usize,
    cells: Vec<u64>,
}

impl TrafficMatrix {
    pub fn zeros(m: usize, n: usize) -> Self {
        TrafficMatrix {
            m,
            n,
            cells: vec![0; m * n],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        let mut cells = Vec::with_capacity(m * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Structural(format!(
                    "traffic row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            cells.extend_from_slice(row);
        }
        Ok(TrafficMatrix { m, n, cells })
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        if self.n == 0 {
            return vec![Vec::new(); self.m];
        }
        self.cells.chunks(self.n).map(<[u64]>::to_vec).collect()
    }

    pub fn servers(&self) -> usize {
        self.m
    }

    pub fn objects(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> u64 {
        self.cells[i * self.n + k]
    }

    pub fn set(&mut self, i: usize, k: usize, value: u64) {
        self.cells[i * self.n + k] = value;
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().sum()
    }

    pub fn column_total(&self, k: usize) -> u64 {
        (0..self.m).map(|i| self.get(i, k)).sum()
    }
}

/// Everything a solver reads but never changes.
#[derive(Clone, Debug)]
pub struct Instance {
    pub costs: CostMatrix,
    pub servers: ServerCatalog,
    pub objects: ObjectCatalog,
    pub traffic: TrafficMatrix,
}

impl Instance {
    pub fn new(
        costs: CostMatrix,
        servers: ServerCatalog,
        objects: ObjectCatalog,
        traffic: TrafficMatrix,
    ) -> Result<Self> {
        let m = costs.len();
        if servers.len() != m {
            return Err(Error::Structural(format!(
                "{} servers in the catalog but the cost matrix covers {m}",
                servers.len()
            )));
        }
        if traffic.servers() != m || traffic.objects() != objects.len() {
            return Err(Error::Structural(format!(
                "traffic is {}x{}, expected {m}x{}",
                traffic.servers(),
                traffic.objects(),
                objects.len()
            )));
        }
        if let Some(k) = objects.primaries().iter().position(|&p| p >= m) {
            return Err(Error::Structural(format!("object {k} has an out-of-range primary")));
        }
        Ok(Instance {
            costs,
            servers,
            objects,
            traffic,
        })
    }

    pub fn servers_len(&self) -> usize {
        self.servers.len()
    }

    pub fn objects_len(&self) -> usize {
        self.objects.len()
    }

    pub fn from_scenario(doc: &ScenarioDocument, costs: CostMatrix) -> Result<Self> {
        let servers = ServerCatalog::new(doc.capacities.clone(), doc.failure_probs.clone())?;
        let objects = ObjectCatalog::new(doc.sizes.clone(), doc.primaries.clone(), servers.len())?;
        let traffic = if doc.traffic.is_empty() {
            TrafficMatrix::zeros(servers.len(), objects.len())
        } else {
            TrafficMatrix::from_rows(&doc.traffic)?
        };
        Instance::new(costs, servers, objects, traffic)
    }

    pub fn to_scenario(&self) -> ScenarioDocument {
        ScenarioDocument {
            capacities: self.servers.capacities().to_vec(),
            failure_probs: self.servers.failure_probs().to_vec(),
            sizes: self.objects.sizes().to_vec(),
            primaries: self.objects.primaries().to_vec(),
            traffic: self.traffic.rows(),
        }
    }
}

/// JSON scenario file: catalogs plus the traffic matrix (rows are servers).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDocument {
    pub capacities: Vec<u64>,
    pub failure_probs: Vec<f64>,
    pub sizes: Vec<u64>,
    pub primaries: Vec<usize>,
    pub traffic: Vec<Vec<u64>>,
}

impl ScenarioDocument {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }
}

/// Binary M x N placement; `get(i, k)` is true when server `i` hosts object `k`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ReplicationMatrix {
    m: usize,
    n: usize,
    bits: Vec<bool>,
}

impl ReplicationMatrix {
    pub fn empty(m: usize, n: usize) -> Self {
        ReplicationMatrix {
            m,
            n,
            bits: vec![false; m * n],
        }
    }

    pub fn servers(&self) -> usize {
        self.m
    }

    pub fn objects(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> bool {
        self.bits[i * self.n + k]
    }

    pub fn set(&mut self, i: usize, k: usize, value: bool) {
        self.bits[i * self.n + k] = value;
    }

    /// Replicators of `k` in ascending server order.
    pub fn replicators(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.m).filter(move |&i| self.get(i, k))
    }

    pub fn replica_count(&self, k: usize) -> usize {
        self.replicators(k).count()
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn to_document(&self) -> PlacementDocument {
        PlacementDocument {
            objects: (0..self.n)
                .map(|k| PlacementEntry {
                    id: k,
                    replicators: self.replicators(k).collect(),
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &PlacementDocument, m: usize, n: usize) -> Result<Self> {
        let mut x = ReplicationMatrix::empty(m, n);
        for entry in &doc.objects {
            if entry.id >= n {
                return Err(Error::Structural(format!("placement names object {} of {n}", entry.id)));
            }
            for &i in &entry.replicators {
                if i >= m {
                    return Err(Error::Structural(format!(
                        "object {} placed on server {i} of {m}",
                        entry.id
                    )));
                }
                x.set(i, entry.id, true);
            }
        }
        Ok(x)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementEntry {
    pub id: usize,
    pub replicators: Vec<usize>,
}

/// JSON placement export; replicator lists are sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementDocument {
    pub objects: Vec<PlacementEntry>,
}

impl PlacementDocument {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "constraint", rename_all = "snake_case")]
pub enum Violation {
    /// Storage: hosted bytes exceed the server's capacity.
    Storage { server: usize, used: u64, capacity: u64 },
    /// Primary: the primary copy is missing.
    Primary { object: usize, server: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::Storage { server, used, capacity } => write!(
                f,
                "storage constraint: server {server} holds {used} > capacity {capacity}"
            ),
            Violation::Primary { object, server } => {
                write!(
                    f,
                    "primary replica constraint: object {object} missing on primary server {server}"
                )
            }
        }
    }
}

/// Lists every storage and primary-replica violation; empty means valid.
pub fn validate_placement(
    x: &ReplicationMatrix,
    servers: &ServerCatalog,
    objects: &ObjectCatalog,
) -> Result<Vec<Violation>> {
    if x.servers() != servers.len() || x.objects() != objects.len() {
        return Err(Error::Structural(format!(
            "placement is {}x{}, catalogs are {}x{}",
            x.servers(),
            x.objects(),
            servers.len(),
            objects.len()
        )));
    }
    let mut violations = Vec::new();
    for i in 0..x.servers() {
        let used: u64 = (0..x.objects()).filter(|&k| x.get(i, k)).map(|k| objects.size(k)).sum();
        if used > servers.capacity(i) {
            violations.push(Violation::Storage {
                server: i,
                used,
                capacity: servers.capacity(i),
            });
        }
    }
    for k in 0..objects.len() {
        let p = objects.primary(k);
        if !x.get(p, k) {
            violations.push(Violation::Primary { object: k, server: p });
        }
    }
    Ok(violations)
}

/// The matrix holding only primary copies.
pub fn primary_only_placement(servers: &ServerCatalog, objects: &ObjectCatalog) -> Result<ReplicationMatrix> {
    let mut x = ReplicationMatrix::empty(servers.len(), objects.len());
    let mut used = vec![0u64; servers.len()];
    for k in 0..objects.len() {
        let p = objects.primary(k);
        if p >= servers.len() {
            return Err(Error::Structural(format!("object {k} has primary {p} out of range")));
        }
        used[p] += objects.size(k);
        if used[p] > servers.capacity(p) {
            return Err(Error::Capacity {
                server: p,
                object: k,
                size: objects.size(k),
                capacity: servers.capacity(p),
            });
        }
        x.set(p, k, true);
    }
    Ok(x)
}

/// Cheapest replicator of `k` as seen from `i`; ties go to the lowest id.
pub fn nearest_replicator(x: &ReplicationMatrix, l: &CostMatrix, i: usize, k: usize) -> Result<usize> {
    x.replicators(k)
        .min_by_key(|&j| (l.get(i, j), j))
        .ok_or_else(|| Error::Structural(format!("object {k} has no replicator")))
}

/// `get(i, k)` is the replicator serving requests for `k` that arrive at `i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NearestIndex {
    n: usize,
    cells: Vec<usize>,
}

impl NearestIndex {
    /// Full rebuild; fails if some column is empty.
    pub fn build(x: &ReplicationMatrix, l: &CostMatrix) -> Result<Self> {
        let (m, n) = (x.servers(), x.objects());
        let mut cells = vec![0; m * n];
        for k in 0..n {
            let reps: Vec<usize> = x.replicators(k).collect();
            if reps.is_empty() {
                return Err(Error::Structural(format!("object {k} has no replicator")));
            }
            for i in 0..m {
                cells[i * n + k] = nearest_among(&reps, l, i);
            }
        }
        Ok(NearestIndex { n, cells })
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> usize {
        self.cells[i * self.n + k]
    }

    fn set(&mut self, i: usize, k: usize, j: usize) {
        self.cells[i * self.n + k] = j;
    }
}

fn nearest_among(reps: &[usize], l: &CostMatrix, i: usize) -> usize {
    *reps
        .iter()
        .min_by_key(|&&j| (l.get(i, j), j))
        .expect("replicator list is non-empty")
}

/// Per-server changes to one column of the [`NearestIndex`]: `(server, old, new)`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NearestDelta {
    pub object: usize,
    pub changes: Vec<(usize, usize, usize)>,
}

/// A replication matrix together with its nearest-replicator index and
/// per-server storage use, kept consistent under [`add_replica`] and
/// [`remove_replica`].
///
/// [`add_replica`]: Placement::add_replica
/// [`remove_replica`]: Placement::remove_replica
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Placement {
    x: ReplicationMatrix,
    nearest: NearestIndex,
    used: Vec<u64>,
    counts: Vec<usize>,
}

impl Placement {
    /// Wraps a matrix. Every column must have a replicator; storage and
    /// primary constraints are not checked here (see [`validate_placement`]).
    pub fn new(inst: &Instance, x: ReplicationMatrix) -> Result<Self> {
        if x.servers() != inst.servers_len() || x.objects() != inst.objects_len() {
            return Err(Error::Structural(format!(
                "placement is {}x{}, instance is {}x{}",
                x.servers(),
                x.objects(),
                inst.servers_len(),
                inst.objects_len()
            )));
        }
        let nearest = NearestIndex::build(&x, &inst.costs)?;
        let used = (0..x.servers())
            .map(|i| {
                (0..x.objects())
                    .filter(|&k| x.get(i, k))
                    .map(|k| inst.objects.size(k))
                    .sum()
            })
            .collect();
        let counts = (0..x.objects()).map(|k| x.replica_count(k)).collect();
        Ok(Placement {
            x,
            nearest,
            used,
            counts,
        })
    }

    pub fn primary_only(inst: &Instance) -> Result<Self> {
        let x = primary_only_placement(&inst.servers, &inst.objects)?;
        Placement::new(inst, x)
    }

    pub fn matrix(&self) -> &ReplicationMatrix {
        &self.x
    }

    pub fn nearest(&self) -> &NearestIndex {
        &self.nearest
    }

    pub fn into_matrix(self) -> ReplicationMatrix {
        self.x
    }

    #[inline]
    pub fn hosts(&self, i: usize, k: usize) -> bool {
        self.x.get(i, k)
    }

    pub fn used(&self, i: usize) -> u64 {
        self.used[i]
    }

    pub fn replica_count(&self, k: usize) -> usize {
        self.counts[k]
    }

    pub fn violations(&self, inst: &Instance) -> Result<Vec<Violation>> {
        validate_placement(&self.x, &inst.servers, &inst.objects)
    }

    pub fn add_replica(&mut self, inst: &Instance, i: usize, k: usize) -> Result<NearestDelta> {
        self.check_cell(i, k)?;
        if self.x.get(i, k) {
            return Err(Error::Precondition(format!("server {i} already replicates object {k}")));
        }
        self.x.set(i, k, true);
        self.used[i] += inst.objects.size(k);
        self.counts[k] += 1;

        let l = &inst.costs;
        let mut delta = NearestDelta {
            object: k,
            changes: Vec::new(),
        };
        for j in 0..self.x.servers() {
            let cur = self.nearest.get(j, k);
            let (new_cost, cur_cost) = (l.get(j, i), l.get(j, cur));
            if new_cost < cur_cost || (new_cost == cur_cost && i < cur) {
                self.nearest.set(j, k, i);
                delta.changes.push((j, cur, i));
            }
        }
        Ok(delta)
    }

    pub fn remove_replica(&mut self, inst: &Instance, i: usize, k: usize) -> Result<NearestDelta> {
        self.check_cell(i, k)?;
        if !self.x.get(i, k) {
            return Err(Error::Precondition(format!("server {i} does not replicate object {k}")));
        }
        if inst.objects.primary(k) == i {
            return Err(Error::Constraint(format!(
                "server {i} holds the primary copy of object {k}"
            )));
        }
        self.x.set(i, k, false);
        self.used[i] -= inst.objects.size(k);
        self.counts[k] -= 1;

        let reps: Vec<usize> = self.x.replicators(k).collect();
        let mut delta = NearestDelta {
            object: k,
            changes: Vec::new(),
        };
        for j in 0..self.x.servers() {
            if self.nearest.get(j, k) == i {
                let next = nearest_among(&reps, &inst.costs, j);
                self.nearest.set(j, k, next);
                delta.changes.push((j, i, next));
            }
        }
        Ok(delta)
    }

    fn check_cell(&self, i: usize, k: usize) -> Result<()> {
        if i >= self.x.servers() || k >= self.x.objects() {
            return Err(Error::Structural(format!("cell ({i}, {k}) is out of range")));
        }
        Ok(())
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
