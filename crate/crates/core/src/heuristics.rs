//! Greedy continuous replica placement.
//!
//! Four solvers share one engine:
//!
//! * `AAGG`: every iteration scans all positive flips `x[i][k]: 0 -> 1`,
//!   frees space on `i` by evicting its least valuable non-primary replicas
//!   when needed, scores the result with the availability-weighted benefit
//!   and commits the best admissible flip.
//! * `AAGRO`: same move, but objects are visited once each in a seeded
//!   random order and only flips of the current object are considered.
//! * `GG` / `GRO`: the availability-unaware originals. The benefit carries
//!   no server factor and the object-availability constraint is not checked.
//!
//! The engine caches, per cell, the access-cost gain of adding a replica and
//! the loss of removing one. Both depend only on their own column, so a
//! commit invalidates just the columns it touched. For the same reason the
//! order in which a server gives up replicas does not depend on which object
//! is incoming. It is kept as a sorted profile with prefix sums.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::costs::{self, availability_not_lowered, AvailabilitySemantics};
use crate::error::{Error, Result};
use crate::model::{Instance, Placement, ReplicationMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Aagg,
    Aagro,
    Gg,
    Gro,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Aagg, Algorithm::Aagro, Algorithm::Gg, Algorithm::Gro];

    pub fn availability_aware(self) -> bool {
        matches!(self, Algorithm::Aagg | Algorithm::Aagro)
    }

    pub fn random_object(self) -> bool {
        matches!(self, Algorithm::Aagro | Algorithm::Gro)
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Aagg => "aagg",
            Algorithm::Aagro => "aagro",
            Algorithm::Gg => "gg",
            Algorithm::Gro => "gro",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Parameter(format!("unknown algorithm {s:?}")))
    }
}

/// Which objects must keep their availability when a flip is committed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AvailabilityScope {
    /// Only the object being replicated.
    #[default]
    FocalObject,
    /// The replicated object and every object evicted to make room.
    AllChangedObjects,
}

impl fmt::Display for AvailabilityScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AvailabilityScope::FocalObject => "focal_object",
            AvailabilityScope::AllChangedObjects => "all_changed_objects",
        })
    }
}

impl FromStr for AvailabilityScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "focal_object" | "focal" => Ok(AvailabilityScope::FocalObject),
            "all_changed_objects" | "all" => Ok(AvailabilityScope::AllChangedObjects),
            other => Err(Error::Parameter(format!("unknown availability scope {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    /// `None` means unlimited. Primary copies count towards the cap.
    pub max_replicas_per_object: Option<usize>,
    pub availability_scope: AvailabilityScope,
    pub availability_semantics: AvailabilitySemantics,
    /// Drives the object order of AAGRO and GRO.
    pub seed: u64,
}

impl SolverConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        SolverConfig {
            algorithm,
            max_replicas_per_object: None,
            availability_scope: AvailabilityScope::default(),
            availability_semantics: AvailabilitySemantics::default(),
            seed: 0,
        }
    }

    pub fn with_cap(mut self, cap: Option<usize>) -> Self {
        self.max_replicas_per_object = cap;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_scope(mut self, scope: AvailabilityScope) -> Self {
        self.availability_scope = scope;
        self
    }

    pub fn with_semantics(mut self, semantics: AvailabilitySemantics) -> Self {
        self.availability_semantics = semantics;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_replicas_per_object == Some(0) {
            return Err(Error::Parameter("max_replicas_per_object must be at least 1".into()));
        }
        Ok(())
    }

    fn cap_allows(&self, count: usize) -> bool {
        self.max_replicas_per_object.is_none_or(|cap| count < cap)
    }

    /// Multiplier applied to the net saving of a flip onto server `i`.
    fn factor(&self, inst: &Instance, i: usize) -> f64 {
        if self.algorithm.availability_aware() {
            costs::server_factor(inst.servers.failure_prob(i))
        } else {
            1.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "lowercase")]
pub enum Action {
    Add {
        server: usize,
        object: usize,
        source: usize,
        transfer_cost: u64,
    },
    Evict {
        server: usize,
        object: usize,
    },
}

/// One committed flip together with the evictions it needed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Commit {
    pub server: usize,
    pub object: usize,
    pub evicted: Vec<usize>,
    pub benefit: f64,
    pub access_cost_after: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlacementResult {
    #[serde(rename = "placement", serialize_with = "serialize_matrix")]
    pub x_new: ReplicationMatrix,
    pub schedule: Vec<Action>,
    pub impl_cost_total: u64,
    pub c_old: u64,
    pub c_new: u64,
    pub benefit_total: f64,
    /// Candidate sweeps performed, including the final unproductive one(s).
    pub iterations: usize,
    pub commits: Vec<Commit>,
}

impl PlacementResult {
    pub fn flips(&self) -> usize {
        self.schedule.iter().filter(|a| matches!(a, Action::Add { .. })).count()
    }

    pub fn evictions(&self) -> usize {
        self.schedule.len() - self.flips()
    }
}

fn serialize_matrix<S: Serializer>(x: &ReplicationMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
    x.to_document().serialize(s)
}

/// Replays a schedule on top of `x_old`, checking each action against the
/// state it is applied to.
pub fn replay_schedule(x_old: &ReplicationMatrix, schedule: &[Action]) -> Result<ReplicationMatrix> {
    let mut x = x_old.clone();
    for (step, action) in schedule.iter().enumerate() {
        match *action {
            Action::Add {
                server, object, source, ..
            } => {
                if x.get(server, object) {
                    return Err(Error::Precondition(format!(
                        "step {step}: {server} already hosts {object}"
                    )));
                }
                if !x.get(source, object) {
                    return Err(Error::Precondition(format!(
                        "step {step}: source {source} does not host {object}"
                    )));
                }
                x.set(server, object, true);
            }
            Action::Evict { server, object } => {
                if !x.get(server, object) {
                    return Err(Error::Precondition(format!(
                        "step {step}: {server} does not host {object}"
                    )));
                }
                x.set(server, object, false);
            }
        }
    }
    Ok(x)
}

/// A candidate flip with its single-flip benefit before any eviction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Flip {
    pub server: usize,
    pub object: usize,
    pub pre_benefit: f64,
}

/// Flips already evaluated during the current outer iteration.
#[derive(Clone, Debug, Default)]
pub struct FlipMarks(BTreeSet<(usize, usize)>);

impl FlipMarks {
    pub fn mark(&mut self, server: usize, object: usize) {
        self.0.insert((server, object));
    }

    pub fn is_marked(&self, server: usize, object: usize) -> bool {
        self.0.contains(&(server, object))
    }

    pub fn clear(&mut self) {
        self.0.clear();
    }
}

/// Unmarked flips whose single-flip benefit is strictly positive and that
/// respect the replica cap, in ascending `(server, object)` order.
///
/// Evaluated directly from the cost functions; the solvers use a cached
/// equivalent.
pub fn enumerate_positive_flips(
    inst: &Instance,
    placement: &Placement,
    config: &SolverConfig,
    marks: &FlipMarks,
) -> Vec<Flip> {
    let mut out = Vec::new();
    for i in 0..inst.servers_len() {
        for k in 0..inst.objects_len() {
            if placement.hosts(i, k) || marks.is_marked(i, k) || !config.cap_allows(placement.replica_count(k)) {
                continue;
            }
            let gain = costs::delta_cost_of_add(inst, placement, i, k).expect("cell is empty");
            let transfer = inst.objects.size(k) * inst.costs.get(i, placement.nearest().get(i, k));
            let pre_benefit = (gain as i64 - transfer as i64) as f64 * config.factor(inst, i);
            if pre_benefit > 0.0 {
                out.push(Flip {
                    server: i,
                    object: k,
                    pre_benefit,
                });
            }
        }
    }
    out
}

pub fn solve(inst: &Instance, x_old: &ReplicationMatrix, config: &SolverConfig) -> Result<PlacementResult> {
    config.validate()?;
    let placement = Placement::new(inst, x_old.clone())?;
    let violations = placement.violations(inst)?;
    if let Some(v) = violations.first() {
        return Err(Error::InvalidPlacement(format!(
            "starting placement has {} violation(s), first: {v}",
            violations.len()
        )));
    }
    let mut engine = Engine::new(inst, config, placement);
    if config.algorithm.random_object() {
        engine.run_random_object();
    } else {
        engine.run_global();
    }
    Ok(engine.finish())
}

pub fn solve_aagg(inst: &Instance, x_old: &ReplicationMatrix, config: &SolverConfig) -> Result<PlacementResult> {
    expect_algorithm(config, &[Algorithm::Aagg])?;
    solve(inst, x_old, config)
}

pub fn solve_aagro(inst: &Instance, x_old: &ReplicationMatrix, config: &SolverConfig) -> Result<PlacementResult> {
    expect_algorithm(config, &[Algorithm::Aagro])?;
    solve(inst, x_old, config)
}

/// GG or GRO.
pub fn solve_baseline(inst: &Instance, x_old: &ReplicationMatrix, config: &SolverConfig) -> Result<PlacementResult> {
    expect_algorithm(config, &[Algorithm::Gg, Algorithm::Gro])?;
    solve(inst, x_old, config)
}

fn expect_algorithm(config: &SolverConfig, allowed: &[Algorithm]) -> Result<()> {
    if allowed.contains(&config.algorithm) {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "solver called with algorithm {}",
            config.algorithm
        )))
    }
}

/// Non-primary replicas of one server, cheapest to lose first
/// (ties: lowest object id), with running totals.
#[derive(Clone, Debug, Default)]
struct EvictionProfile {
    order: Vec<usize>,
    freed: Vec<u64>,
    loss: Vec<u64>,
}

#[derive(Clone, Debug)]
struct Evaluation {
    server: usize,
    object: usize,
    source: usize,
    transfer_cost: u64,
    gain: u64,
    loss: u64,
    evicted: Vec<usize>,
    benefit: f64,
}

impl Evaluation {
    fn beats(&self, other: &Evaluation) -> bool {
        self.benefit > other.benefit
            || (self.benefit == other.benefit && (self.server, self.object) < (other.server, other.object))
    }
}

struct Engine<'a> {
    inst: &'a Instance,
    config: &'a SolverConfig,
    placement: Placement,
    x_old: ReplicationMatrix,
    add_gain: Vec<u64>,
    removal_loss: Vec<u64>,
    /// Per column: current availability and the product it is built from
    /// (failure probabilities, or up probabilities under literal semantics).
    availability: Vec<f64>,
    availability_product: Vec<f64>,
    column_dirty: Vec<bool>,
    dirty_columns: Vec<usize>,
    profile_dirty: Vec<bool>,
    profiles: Vec<EvictionProfile>,
    c_old: u64,
    c_current: u64,
    schedule: Vec<Action>,
    commits: Vec<Commit>,
    impl_cost_total: u64,
    benefit_total: f64,
    iterations: usize,
}

impl<'a> Engine<'a> {
    fn new(inst: &'a Instance, config: &'a SolverConfig, placement: Placement) -> Self {
        let (m, n) = (inst.servers_len(), inst.objects_len());
        let c_old = costs::total_access_cost(inst, placement.nearest()).total;
        Engine {
            inst,
            config,
            x_old: placement.matrix().clone(),
            placement,
            add_gain: vec![0; m * n],
            removal_loss: vec![0; m * n],
            availability: vec![0.0; n],
            availability_product: vec![0.0; n],
            column_dirty: vec![true; n],
            dirty_columns: (0..n).collect(),
            profile_dirty: vec![true; m],
            profiles: vec![EvictionProfile::default(); m],
            c_old,
            c_current: c_old,
            schedule: Vec::new(),
            commits: Vec::new(),
            impl_cost_total: 0,
            benefit_total: 0.0,
            iterations: 0,
        }
    }

    fn n(&self) -> usize {
        self.inst.objects_len()
    }

    fn touch_column(&mut self, k: usize) {
        if !self.column_dirty[k] {
            self.column_dirty[k] = true;
            self.dirty_columns.push(k);
        }
    }

    /// Brings the caches up to date; returns the columns and servers whose
    /// candidates may have changed since the previous refresh.
    fn refresh(&mut self) -> (Vec<usize>, Vec<usize>) {
        let (inst, n) = (self.inst, self.n());
        let columns = std::mem::take(&mut self.dirty_columns);
        let f = inst.servers.failure_probs();
        let sem = self.config.availability_semantics;
        for &k in &columns {
            self.column_dirty[k] = false;
            let x = self.placement.matrix();
            self.availability[k] = costs::availability_of(x.replicators(k), f, sem);
            self.availability_product[k] = x.replicators(k).map(|j| availability_term(f[j], sem)).product();
            for i in 0..inst.servers_len() {
                let cell = i * n + k;
                if self.placement.hosts(i, k) {
                    self.profile_dirty[i] = true;
                    if inst.objects.primary(k) != i {
                        self.removal_loss[cell] =
                            costs::delta_cost_of_remove(inst, &self.placement, i, k).expect("non-primary replica");
                    }
                } else {
                    self.add_gain[cell] = costs::delta_cost_of_add(inst, &self.placement, i, k).expect("empty cell");
                }
            }
        }
        let mut rows = Vec::new();
        for i in 0..inst.servers_len() {
            if self.profile_dirty[i] {
                self.profile_dirty[i] = false;
                self.profiles[i] = self.build_profile(i);
                rows.push(i);
            }
        }
        (columns, rows)
    }

    fn build_profile(&self, i: usize) -> EvictionProfile {
        let n = self.n();
        let mut order: Vec<usize> = (0..n)
            .filter(|&k| self.placement.hosts(i, k) && self.inst.objects.primary(k) != i)
            .collect();
        order.sort_by_key(|&k| (self.removal_loss[i * n + k], k));
        let mut freed = Vec::with_capacity(order.len());
        let mut loss = Vec::with_capacity(order.len());
        let (mut f, mut l) = (0u64, 0u64);
        for &k in &order {
            f += self.inst.objects.size(k);
            l += self.removal_loss[i * n + k];
            freed.push(f);
            loss.push(l);
        }
        EvictionProfile { order, freed, loss }
    }

    /// Scores flip `(i, k)` against the current state; `None` when the flip
    /// is not positive, cannot be made to fit, breaks the availability
    /// constraint or does not yield a strictly positive benefit.
    fn evaluate(&self, i: usize, k: usize) -> Option<Evaluation> {
        let inst = self.inst;
        let p = &self.placement;
        if p.hosts(i, k) || !self.config.cap_allows(p.replica_count(k)) {
            return None;
        }
        let gain = self.add_gain[i * self.n() + k];
        let source = p.nearest().get(i, k);
        let size = inst.objects.size(k);
        let transfer_cost = size * inst.costs.get(i, source);
        if gain <= transfer_cost {
            return None;
        }

        let needed = p.used(i) + size;
        let capacity = inst.servers.capacity(i);
        let (evicted, loss) = if needed <= capacity {
            (Vec::new(), 0)
        } else {
            let deficit = needed - capacity;
            let profile = &self.profiles[i];
            let count = profile.freed.partition_point(|&f| f < deficit);
            if count == profile.freed.len() {
                return None;
            }
            (profile.order[..=count].to_vec(), profile.loss[count])
        };

        if self.config.algorithm.availability_aware() && !self.availability_admissible(i, k, &evicted) {
            return None;
        }

        let net = gain as i64 - loss as i64 - transfer_cost as i64;
        let benefit = net as f64 * self.config.factor(inst, i);
        if benefit <= 0.0 {
            return None;
        }
        Some(Evaluation {
            server: i,
            object: k,
            source,
            transfer_cost,
            gain,
            loss,
            evicted,
            benefit,
        })
    }

    fn availability_admissible(&self, i: usize, k: usize, evicted: &[usize]) -> bool {
        let x = self.placement.matrix();
        let f = self.inst.servers.failure_probs();
        let sem = self.config.availability_semantics;

        let product = self.availability_product[k] * availability_term(f[i], sem);
        let after = match sem {
            AvailabilitySemantics::Corrected => 1.0 - product,
            AvailabilitySemantics::Literal => product,
        };
        if !availability_not_lowered(self.availability[k], after) {
            return false;
        }
        if self.config.availability_scope == AvailabilityScope::AllChangedObjects {
            for &e in evicted {
                let before = costs::availability_of(x.replicators(e), f, sem);
                let after = costs::availability_of(x.replicators(e).filter(|&j| j != i), f, sem);
                if !availability_not_lowered(before, after) {
                    return false;
                }
            }
        }
        true
    }

    fn best_of(&self, cells: impl IndexedParallelIterator<Item = (usize, usize)>) -> Option<Evaluation> {
        cells
            .filter_map(|(i, k)| self.evaluate(i, k))
            .reduce_with(|a, b| if b.beats(&a) { b } else { a })
    }

    fn commit(&mut self, e: Evaluation) {
        let inst = self.inst;
        let i = e.server;
        for &victim in &e.evicted {
            self.placement
                .remove_replica(inst, i, victim)
                .expect("evicted replicas are non-primary and present");
            self.schedule.push(Action::Evict {
                server: i,
                object: victim,
            });
            self.touch_column(victim);
        }
        self.placement
            .add_replica(inst, i, e.object)
            .expect("flip target is empty");
        self.schedule.push(Action::Add {
            server: i,
            object: e.object,
            source: e.source,
            transfer_cost: e.transfer_cost,
        });
        self.touch_column(e.object);
        self.profile_dirty[i] = true;

        let saving = e.gain - e.loss;
        assert!(saving > e.transfer_cost, "committed flip must lower the access cost");
        assert!(
            self.placement.used(i) <= inst.servers.capacity(i),
            "server {i} overfull"
        );
        self.c_current -= saving;
        self.impl_cost_total += e.transfer_cost;
        self.benefit_total += e.benefit;
        self.commits.push(Commit {
            server: i,
            object: e.object,
            evicted: e.evicted,
            benefit: e.benefit,
            access_cost_after: self.c_current,
        });
    }

    /// Global best-flip loop. A candidate depends only on its column and on
    /// its server's load and eviction profile, so the best candidate of each
    /// column is cached and only columns or servers touched by the previous
    /// commit are re-scored.
    fn run_global(&mut self) {
        let (m, n) = (self.inst.servers_len(), self.n());
        let mut column_best: Vec<Option<Evaluation>> = vec![None; n];
        let mut column_stale = vec![true; n];
        let mut row_stale = vec![false; m];
        loop {
            let (columns, rows) = self.refresh();
            self.iterations += 1;
            for &k in &columns {
                column_stale[k] = true;
            }
            for &i in &rows {
                row_stale[i] = true;
            }
            let updates: Vec<(usize, Option<Evaluation>)> = (0..n)
                .into_par_iter()
                .filter_map(|k| {
                    let current = &column_best[k];
                    if column_stale[k] || current.as_ref().is_some_and(|b| row_stale[b.server]) {
                        return Some((k, self.best_of((0..m).into_par_iter().map(|i| (i, k)))));
                    }
                    let mut best = current.clone();
                    let mut changed = false;
                    for &i in &rows {
                        if let Some(e) = self.evaluate(i, k) {
                            if best.as_ref().is_none_or(|b| e.beats(b)) {
                                best = Some(e);
                                changed = true;
                            }
                        }
                    }
                    changed.then_some((k, best))
                })
                .collect();
            for (k, best) in updates {
                column_best[k] = best;
            }
            column_stale.iter_mut().for_each(|s| *s = false);
            row_stale.iter_mut().for_each(|s| *s = false);

            let best = column_best
                .iter()
                .flatten()
                .fold(None::<&Evaluation>, |acc, e| match acc {
                    Some(a) if !e.beats(a) => Some(a),
                    _ => Some(e),
                })
                .cloned();
            match best {
                Some(e) => self.commit(e),
                None => break,
            }
        }
    }

    fn run_random_object(&mut self) {
        let m = self.inst.servers_len();
        for k in random_object_order(self.n(), self.config.seed) {
            loop {
                self.refresh();
                self.iterations += 1;
                let best = self.best_of((0..m).into_par_iter().map(|i| (i, k)));
                match best {
                    Some(e) => self.commit(e),
                    None => break,
                }
            }
        }
    }

    fn finish(self) -> PlacementResult {
        debug_assert_eq!(
            costs::total_access_cost(self.inst, self.placement.nearest()).total,
            self.c_current
        );
        debug_assert!(self.placement.violations(self.inst).unwrap().is_empty());
        debug_assert_eq!(
            replay_schedule(&self.x_old, &self.schedule).as_ref().ok(),
            Some(self.placement.matrix())
        );
        PlacementResult {
            x_new: self.placement.into_matrix(),
            schedule: self.schedule,
            impl_cost_total: self.impl_cost_total,
            c_old: self.c_old,
            c_new: self.c_current,
            benefit_total: self.benefit_total,
            iterations: self.iterations,
            commits: self.commits,
        }
    }
}

/// Factor a replicator contributes to its object's availability product.
fn availability_term(failure_prob: f64, semantics: AvailabilitySemantics) -> f64 {
    match semantics {
        AvailabilitySemantics::Corrected => failure_prob,
        AvailabilitySemantics::Literal => 1.0 - failure_prob,
    }
}

/// Object visiting order used by AAGRO/GRO for `seed`.
pub fn random_object_order(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}
