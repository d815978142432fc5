//! Access cost, implementation cost, availability and the benefit function.
//!
//! All cost quantities are exact integers. Availability and benefit are the
//! only real-valued results.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Instance, NearestIndex, Placement, ReplicationMatrix};

/// Absolute slack when comparing object availabilities stored as `f64`.
pub const AVAILABILITY_EPSILON: f64 = 1e-12;

/// How per-server failure probabilities turn into object availability.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AvailabilitySemantics {
    /// Object is available while at least one replicator is up:
    /// `A_k = 1 - prod(f_i)`.
    #[default]
    Corrected,
    /// Product of server availabilities, `A_k = prod(1 - f_i)`. Adding a
    /// replica lowers it, so the availability constraint blocks almost
    /// every addition.
    Literal,
}

impl fmt::Display for AvailabilitySemantics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AvailabilitySemantics::Corrected => "corrected",
            AvailabilitySemantics::Literal => "literal",
        })
    }
}

impl FromStr for AvailabilitySemantics {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "corrected" => Ok(AvailabilitySemantics::Corrected),
            "literal" => Ok(AvailabilitySemantics::Literal),
            other => Err(Error::Parameter(format!("unknown availability semantics {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CostReport {
    pub per_object: Vec<u64>,
    pub total: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BenefitBreakdown {
    pub access_saving: i64,
    pub impl_cost: u64,
    pub availability_factor: f64,
    pub benefit: f64,
}

/// `R_k`: traffic-weighted distance from every server to its nearest
/// replicator of `k`.
pub fn object_access_cost(inst: &Instance, nearest: &NearestIndex, k: usize) -> u64 {
    (0..inst.servers_len())
        .map(|i| inst.costs.get(i, nearest.get(i, k)) * inst.traffic.get(i, k))
        .sum()
}

pub fn total_access_cost(inst: &Instance, nearest: &NearestIndex) -> CostReport {
    let per_object: Vec<u64> = (0..inst.objects_len())
        .map(|k| object_access_cost(inst, nearest, k))
        .collect();
    let total = per_object.iter().sum();
    CostReport { per_object, total }
}

/// Reduction of the total access cost if server `i` starts replicating `k`.
pub fn delta_cost_of_add(inst: &Instance, placement: &Placement, i: usize, k: usize) -> Result<u64> {
    if placement.hosts(i, k) {
        return Err(Error::Precondition(format!("server {i} already replicates object {k}")));
    }
    let l = &inst.costs;
    let nearest = placement.nearest();
    Ok((0..inst.servers_len())
        .map(|j| {
            let cur = l.get(j, nearest.get(j, k));
            inst.traffic.get(j, k) * (cur - cur.min(l.get(j, i)))
        })
        .sum())
}

/// Increase of the total access cost if server `i` stops replicating `k`.
///
/// Requires at least one other replicator of `k`.
pub fn delta_cost_of_remove(inst: &Instance, placement: &Placement, i: usize, k: usize) -> Result<u64> {
    if !placement.hosts(i, k) {
        return Err(Error::Precondition(format!("server {i} does not replicate object {k}")));
    }
    let others: Vec<usize> = placement.matrix().replicators(k).filter(|&j| j != i).collect();
    if others.is_empty() {
        return Err(Error::Constraint(format!(
            "server {i} is the only replicator of object {k}"
        )));
    }
    let l = &inst.costs;
    let mut increase = 0;
    for j in 0..inst.servers_len() {
        if placement.nearest().get(j, k) != i {
            continue;
        }
        let next = others.iter().map(|&h| l.get(j, h)).min().expect("others is non-empty");
        increase += inst.traffic.get(j, k) * (next - l.get(j, i));
    }
    Ok(increase)
}

/// Transfer cost of moving from `old` to `new`: every new replica is pulled
/// from its nearest replicator in the old scheme. Deletions are free.
pub fn implementation_cost(inst: &Instance, old: &Placement, new: &ReplicationMatrix) -> Result<u64> {
    let x_old = old.matrix();
    if new.servers() != x_old.servers() || new.objects() != x_old.objects() {
        return Err(Error::Structural("placements have different shapes".into()));
    }
    let mut total = 0;
    for i in 0..new.servers() {
        for k in 0..new.objects() {
            if new.get(i, k) && !x_old.get(i, k) {
                total += inst.objects.size(k) * inst.costs.get(i, old.nearest().get(i, k));
            }
        }
    }
    Ok(total)
}

/// Availability of an object hosted on `replicators`.
pub fn availability_of(
    replicators: impl IntoIterator<Item = usize>,
    failure_probs: &[f64],
    semantics: AvailabilitySemantics,
) -> f64 {
    match semantics {
        AvailabilitySemantics::Corrected => 1.0 - replicators.into_iter().map(|i| failure_probs[i]).product::<f64>(),
        AvailabilitySemantics::Literal => replicators.into_iter().map(|i| 1.0 - failure_probs[i]).product(),
    }
}

pub fn object_availability(
    k: usize,
    x: &ReplicationMatrix,
    failure_probs: &[f64],
    semantics: AvailabilitySemantics,
) -> Result<f64> {
    if x.replicators(k).next().is_none() {
        return Err(Error::Structural(format!("object {k} has no replicator")));
    }
    Ok(availability_of(x.replicators(k), failure_probs, semantics))
}

/// Weight of server `i` in the benefit function: its availability `1 - f_i`.
pub fn server_factor(failure_prob: f64) -> f64 {
    1.0 - failure_prob
}

/// True when `new` does not lower the availability of `k`.
pub fn availability_constraint_ok(
    k: usize,
    x_old: &ReplicationMatrix,
    x_new: &ReplicationMatrix,
    failure_probs: &[f64],
    semantics: AvailabilitySemantics,
) -> Result<bool> {
    let old = object_availability(k, x_old, failure_probs, semantics)?;
    let new = object_availability(k, x_new, failure_probs, semantics)?;
    Ok(availability_not_lowered(old, new))
}

#[inline]
pub fn availability_not_lowered(old: f64, new: f64) -> bool {
    new >= old - AVAILABILITY_EPSILON
}

/// `(c_old - c_new - impl_cost) * factor`.
pub fn benefit(c_old: u64, c_new: u64, impl_cost: u64, availability_factor: f64) -> Result<BenefitBreakdown> {
    if !(availability_factor > 0.0 && availability_factor <= 1.0) {
        return Err(Error::Parameter(format!(
            "availability factor {availability_factor} is outside (0, 1]"
        )));
    }
    let access_saving = c_old as i64 - c_new as i64;
    let net = access_saving - impl_cost as i64;
    Ok(BenefitBreakdown {
        access_saving,
        impl_cost,
        availability_factor,
        benefit: net as f64 * availability_factor,
    })
}
