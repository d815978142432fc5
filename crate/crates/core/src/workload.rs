//! Scenario inputs: object catalogs, traffic matrices and per-server
//! failure probabilities, either synthetic or estimated from an interval
//! trace.
//!
//! Trace files are CSV with the header `node_id,start,end,state`, times in
//! seconds and `state` one of `up` / `down`. Lines starting with `#` are
//! comments, except `# horizon=T0,T1`, which fixes the observation window
//! of every node. Without it a node is observed from its first record's
//! start to its last record's end. Time not covered by a record counts as up.

use std::cmp::Ordering;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ObjectCatalog, TrafficMatrix};

/// Default ceiling for estimated failure probabilities.
pub const DEFAULT_F_MAX: f64 = 0.99;

pub fn generate_object_catalog(
    n_objects: usize,
    size_lo: u64,
    size_hi: u64,
    n_servers: usize,
    seed: u64,
) -> Result<ObjectCatalog> {
    if size_lo == 0 || size_lo > size_hi {
        return Err(Error::Parameter(format!("invalid size range [{size_lo}, {size_hi}]")));
    }
    if n_servers == 0 {
        return Err(Error::Parameter("need at least one server".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = (0..n_objects).map(|_| rng.gen_range(size_lo..=size_hi)).collect();
    let primaries = (0..n_objects).map(|_| rng.gen_range(0..n_servers)).collect();
    ObjectCatalog::new(sizes, primaries, n_servers)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficKind {
    Uniform,
    #[default]
    Zipf,
}

impl FromStr for TrafficKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(TrafficKind::Uniform),
            "zipf" => Ok(TrafficKind::Zipf),
            other => Err(Error::Parameter(format!("unknown traffic model {other:?}"))),
        }
    }
}

impl fmt::Display for TrafficKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrafficKind::Uniform => "uniform",
            TrafficKind::Zipf => "zipf",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficModel {
    pub kind: TrafficKind,
    pub zipf_skew: f64,
    /// Bytes across the whole matrix.
    pub total_volume: u64,
    pub seed: u64,
}

impl TrafficModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.zipf_skew >= 0.0 && self.zipf_skew.is_finite()) {
            return Err(Error::Parameter(format!("zipf skew {} must be >= 0", self.zipf_skew)));
        }
        if self.total_volume == 0 {
            return Err(Error::Parameter("total traffic volume must be positive".into()));
        }
        Ok(())
    }
}

/// Builds an M x N traffic matrix whose entries sum to `total_volume`.
///
/// `uniform` gives every cell `total / (M N)` and hands the remainder out one
/// byte at a time to randomly chosen cells. `zipf` ranks objects by a seeded
/// permutation, gives rank `r` a share proportional to `r^-skew`, and splits
/// each object's volume over servers with uniform random weights.
pub fn generate_traffic(model: &TrafficModel, n_servers: usize, n_objects: usize) -> Result<TrafficMatrix> {
    model.validate()?;
    if n_servers == 0 || n_objects == 0 {
        return Err(Error::Parameter("traffic matrix needs servers and objects".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let mut traffic = TrafficMatrix::zeros(n_servers, n_objects);
    match model.kind {
        TrafficKind::Uniform => {
            let cells = (n_servers * n_objects) as u64;
            let base = model.total_volume / cells;
            let extra = (model.total_volume % cells) as usize;
            let mut order: Vec<usize> = (0..n_servers * n_objects).collect();
            order.shuffle(&mut rng);
            for i in 0..n_servers {
                for k in 0..n_objects {
                    traffic.set(i, k, base);
                }
            }
            for &c in &order[..extra] {
                let (i, k) = (c / n_objects, c % n_objects);
                traffic.set(i, k, base + 1);
            }
        }
        TrafficKind::Zipf => {
            let mut rank_of: Vec<usize> = (0..n_objects).collect();
            rank_of.shuffle(&mut rng);
            let popularity: Vec<f64> = rank_of
                .iter()
                .map(|&r| ((r + 1) as f64).powf(-model.zipf_skew))
                .collect();
            let columns = apportion(model.total_volume, &popularity);
            for (k, &volume) in columns.iter().enumerate() {
                let weights: Vec<f64> = (0..n_servers).map(|_| 1.0 - rng.gen::<f64>()).collect();
                for (i, v) in apportion(volume, &weights).into_iter().enumerate() {
                    traffic.set(i, k, v);
                }
            }
        }
    }
    Ok(traffic)
}

/// Largest-remainder split of `total` in proportion to `weights`; the parts
/// sum to `total` exactly. Ties go to the lower index.
fn apportion(total: u64, weights: &[f64]) -> Vec<u64> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut parts: Vec<u64> = quotas.iter().map(|q| q.floor() as u64).collect();
    let assigned: u64 = parts.iter().sum();
    let mut left = total.saturating_sub(assigned) as usize;
    let mut by_remainder: Vec<usize> = (0..weights.len()).collect();
    by_remainder.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &idx in by_remainder.iter().cycle() {
        if left == 0 {
            break;
        }
        parts[idx] += 1;
        left -= 1;
    }
    parts
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeState {
    Up,
    Down,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub node: usize,
    pub start: f64,
    pub end: f64,
    pub state: NodeState,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FailureTrace {
    records: Vec<TraceRecord>,
    horizon: Option<(f64, f64)>,
}

impl FailureTrace {
    /// Checks durations and per-node overlap.
    pub fn new(records: Vec<TraceRecord>, horizon: Option<(f64, f64)>) -> Result<Self> {
        if let Some((t0, t1)) = horizon {
            if t1.partial_cmp(&t0) != Some(Ordering::Greater) {
                return Err(Error::Parameter(format!("empty horizon [{t0}, {t1}]")));
            }
        }
        for r in &records {
            if r.end.partial_cmp(&r.start) != Some(Ordering::Greater) {
                return Err(Error::Parameter(format!(
                    "node {}: record [{}, {}] has non-positive duration",
                    r.node, r.start, r.end
                )));
            }
        }
        let mut sorted = records.clone();
        sorted.sort_by(|a, b| a.node.cmp(&b.node).then(a.start.total_cmp(&b.start)));
        for pair in sorted.windows(2) {
            if pair[0].node == pair[1].node && pair[1].start < pair[0].end {
                return Err(Error::Overlap {
                    node: pair[1].node,
                    start: pair[1].start,
                    end: pair[1].end,
                });
            }
        }
        Ok(FailureTrace { records, horizon })
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn horizon(&self) -> Option<(f64, f64)> {
        self.horizon
    }

    pub fn node_horizon(&self, node: usize) -> Option<(f64, f64)> {
        if self.horizon.is_some() {
            return self.horizon;
        }
        self.records
            .iter()
            .filter(|r| r.node == node)
            .fold(None, |acc, r| match acc {
                None => Some((r.start, r.end)),
                Some((a, b)) => Some((f64::min(a, r.start), f64::max(b, r.end))),
            })
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut records = Vec::new();
        let mut horizon = None;
        let mut seen_header = false;
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(spec) = comment.trim().strip_prefix("horizon=") {
                    let (a, b) = spec
                        .split_once(',')
                        .ok_or_else(|| parse_err(lineno, "horizon needs T0,T1".into()))?;
                    let t0 = parse_time(a).map_err(|m| parse_err(lineno, m))?;
                    let t1 = parse_time(b).map_err(|m| parse_err(lineno, m))?;
                    horizon = Some((t0, t1));
                }
                continue;
            }
            if !seen_header {
                let cols: Vec<&str> = line.split(',').map(str::trim).collect();
                if cols != ["node_id", "start", "end", "state"] {
                    return Err(parse_err(
                        lineno,
                        format!("expected header node_id,start,end,state, got {line:?}"),
                    ));
                }
                seen_header = true;
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 4 {
                return Err(parse_err(lineno, format!("expected 4 fields, got {}", cols.len())));
            }
            let node = cols[0]
                .parse::<usize>()
                .map_err(|e| parse_err(lineno, format!("node_id {:?}: {e}", cols[0])))?;
            let start = parse_time(cols[1]).map_err(|m| parse_err(lineno, m))?;
            let end = parse_time(cols[2]).map_err(|m| parse_err(lineno, m))?;
            let state = match cols[3] {
                "up" => NodeState::Up,
                "down" => NodeState::Down,
                other => return Err(parse_err(lineno, format!("state must be up or down, got {other:?}"))),
            };
            if end < start {
                return Err(parse_err(lineno, format!("end {end} precedes start {start}")));
            }
            records.push(TraceRecord {
                node,
                start,
                end,
                state,
            });
        }
        if !seen_header {
            return Err(parse_err(1, "missing header node_id,start,end,state".into()));
        }
        FailureTrace::new(records, horizon)
    }
}

fn parse_time(s: &str) -> std::result::Result<f64, String> {
    let t: f64 = s.trim().parse().map_err(|e| format!("time {s:?}: {e}"))?;
    if !t.is_finite() {
        return Err(format!("time {s:?} is not finite"));
    }
    Ok(t)
}

pub fn load_failure_trace(path: impl AsRef<Path>) -> Result<FailureTrace> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    FailureTrace::parse(&text, path)
}

/// Failure probability per server: observed downtime over the node's
/// horizon, clamped to `[0, f_max]`. Servers absent from the trace get 0.
pub fn estimate_availability(trace: &FailureTrace, n_servers: usize, f_max: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&f_max) {
        return Err(Error::Parameter(format!("f_max {f_max} is outside [0, 1)")));
    }
    if let Some(r) = trace.records.iter().find(|r| r.node >= n_servers) {
        return Err(Error::Structural(format!(
            "trace node {} is outside 0..{n_servers}",
            r.node
        )));
    }
    let mut out = vec![0.0; n_servers];
    for (node, f) in out.iter_mut().enumerate() {
        let Some((t0, t1)) = trace.node_horizon(node) else {
            continue;
        };
        let down: f64 = trace
            .records
            .iter()
            .filter(|r| r.node == node && r.state == NodeState::Down)
            .map(|r| (r.end.min(t1) - r.start.max(t0)).max(0.0))
            .fold(0.0, |a, b| a + b);
        *f = (down / (t1 - t0)).clamp(0.0, f_max);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AvailabilityDistribution {
    Uniform { lo: f64, hi: f64 },
    Constant { f: f64 },
}

impl FromStr for AvailabilityDistribution {
    type Err = Error;

    /// `uniform:LO:HI` or `constant:F`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |v: &str| {
            v.parse::<f64>()
                .map_err(|e| Error::Parameter(format!("availability spec {s:?}: {e}")))
        };
        let dist = match parts.as_slice() {
            ["uniform", lo, hi] => AvailabilityDistribution::Uniform {
                lo: num(lo)?,
                hi: num(hi)?,
            },
            ["constant", f] => AvailabilityDistribution::Constant { f: num(f)? },
            _ => {
                return Err(Error::Parameter(format!(
                    "availability spec {s:?} must be uniform:LO:HI or constant:F"
                )))
            }
        };
        dist.validate()?;
        Ok(dist)
    }
}

impl fmt::Display for AvailabilityDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AvailabilityDistribution::Uniform { lo, hi } => write!(f, "uniform:{lo}:{hi}"),
            AvailabilityDistribution::Constant { f: v } => write!(f, "constant:{v}"),
        }
    }
}

impl AvailabilityDistribution {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = match *self {
            AvailabilityDistribution::Uniform { lo, hi } => (lo, hi),
            AvailabilityDistribution::Constant { f } => (f, f),
        };
        if !(0.0 <= lo && lo <= hi && hi < 1.0) {
            return Err(Error::Parameter(format!(
                "failure probabilities need 0 <= lo <= hi < 1, got [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

pub fn synthetic_availability(n_servers: usize, dist: AvailabilityDistribution, seed: u64) -> Result<Vec<f64>> {
    dist.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(match dist {
        AvailabilityDistribution::Constant { f } => vec![f; n_servers],
        AvailabilityDistribution::Uniform { lo, hi } => (0..n_servers).map(|_| rng.gen_range(lo..=hi)).collect(),
    })
}
