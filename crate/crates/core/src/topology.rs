//! Server network generation and its reduction to per-byte path costs.
//!
//! A [`Graph`] is produced by a seeded Barabási–Albert generator, given
//! integer link costs, and collapsed into a [`CostMatrix`] of cheapest-path
//! costs. Every later stage only sees the matrix.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub cost: u64,
}

/// Undirected simple graph with positive integer link costs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    node_count: usize,
    edges: Vec<Edge>,
}

impl Graph {
    /// Builds a graph, normalising every edge to `u < v`.
    ///
    /// Rejects self-loops, duplicate edges, out-of-range endpoints and
    /// zero-cost links.
    pub fn new(node_count: usize, edges: impl IntoIterator<Item = (usize, usize, u64)>) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::Parameter("graph needs at least one node".into()));
        }
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for (a, b, cost) in edges {
            if a >= node_count || b >= node_count {
                return Err(Error::Structural(format!(
                    "edge ({a}, {b}) references a node outside 0..{node_count}"
                )));
            }
            if a == b {
                return Err(Error::Structural(format!("self-loop on node {a}")));
            }
            if cost == 0 {
                return Err(Error::Parameter(format!("edge ({a}, {b}) has zero cost")));
            }
            let (u, v) = if a < b { (a, b) } else { (b, a) };
            if !seen.insert((u, v)) {
                return Err(Error::Structural(format!("duplicate edge ({u}, {v})")));
            }
            out.push(Edge { u, v, cost });
        }
        Ok(Graph { node_count, edges: out })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    fn adjacency(&self) -> Vec<Vec<(usize, u64)>> {
        let mut adj = vec![Vec::new(); self.node_count];
        for e in &self.edges {
            adj[e.u].push((e.v, e.cost));
            adj[e.v].push((e.u, e.cost));
        }
        adj
    }

    /// Returns the first node (in id order) not reachable from node 0.
    fn first_unreachable(&self) -> Option<usize> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.node_count];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.iter().position(|s| !s)
    }

    pub fn is_connected(&self) -> bool {
        self.first_unreachable().is_none()
    }

    pub fn to_document(&self) -> TopologyDocument {
        TopologyDocument {
            nodes: self.node_count,
            edges: self.edges.iter().map(|e| (e.u, e.v, e.cost)).collect(),
        }
    }

    pub fn from_document(doc: &TopologyDocument) -> Result<Self> {
        Graph::new(doc.nodes, doc.edges.iter().copied())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: TopologyDocument = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        Graph::from_document(&doc)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(&self.to_document()).map_err(|e| Error::json(path, e))?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// On-disk form: `{"nodes": M, "edges": [[u, v, cost], ...]}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyDocument {
    pub nodes: usize,
    pub edges: Vec<(usize, usize, u64)>,
}

/// Preferential-attachment graph grown from a two-node seed joined by one edge.
///
/// Each later node attaches to `min(m_links, existing nodes)` distinct
/// existing nodes, picked one at a time with probability proportional to
/// current degree. Every edge gets cost 1; use [`assign_link_costs`] to
/// draw real costs.
pub fn generate_ba_topology(n: usize, m_links: usize, seed: u64) -> Result<Graph> {
    if n == 0 {
        return Err(Error::Parameter("node count must be at least 1".into()));
    }
    if m_links == 0 {
        return Err(Error::Parameter("m_links must be at least 1".into()));
    }
    if n > 1 && m_links >= n {
        return Err(Error::Parameter(format!(
            "m_links ({m_links}) must be smaller than the node count ({n})"
        )));
    }
    if n == 1 {
        return Graph::new(1, []);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut degree = vec![0u64; n];
    let mut edges = vec![(0, 1, 1)];
    degree[0] = 1;
    degree[1] = 1;

    for new in 2..n {
        let want = m_links.min(new);
        let mut chosen: Vec<usize> = Vec::with_capacity(want);
        for _ in 0..want {
            let total: u64 = (0..new).filter(|v| !chosen.contains(v)).map(|v| degree[v]).sum();
            let mut ticket = rng.gen_range(0..total);
            let target = (0..new)
                .filter(|v| !chosen.contains(v))
                .find(|&v| {
                    if ticket < degree[v] {
                        true
                    } else {
                        ticket -= degree[v];
                        false
                    }
                })
                .expect("ticket is below the total weight");
            chosen.push(target);
        }
        for target in chosen {
            edges.push((target, new, 1));
            degree[target] += 1;
            degree[new] += 1;
        }
    }
    Graph::new(n, edges)
}

/// Replaces every link cost with an integer drawn uniformly from `[lo, hi]`,
/// in edge order.
pub fn assign_link_costs(g: &Graph, lo: u64, hi: u64, seed: u64) -> Result<Graph> {
    if lo == 0 {
        return Err(Error::Parameter("link costs must be positive (lo = 0)".into()));
    }
    if lo > hi {
        return Err(Error::Parameter(format!("empty cost range [{lo}, {hi}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges = g
        .edges
        .iter()
        .map(|e| Edge {
            cost: rng.gen_range(lo..=hi),
            ..*e
        })
        .collect();
    Ok(Graph {
        node_count: g.node_count,
        edges,
    })
}

/// Symmetric matrix of cheapest-path costs between every pair of servers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostMatrix {
    m: usize,
    cells: Vec<u64>,
}

impl CostMatrix {
    /// Builds a matrix from explicit rows and checks the metric invariants
    /// (zero diagonal, symmetry, positive off-diagonal, triangle inequality).
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::Structural("cost matrix is empty".into()));
        }
        let mut cells = Vec::with_capacity(m * m);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Structural(format!(
                    "cost matrix row {i} has {} entries, expected {m}",
                    row.len()
                )));
            }
            cells.extend_from_slice(row);
        }
        let matrix = CostMatrix { m, cells };
        matrix.check_invariants()?;
        Ok(matrix)
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.cells[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.cells[i * self.m..(i + 1) * self.m]
    }

    pub fn check_invariants(&self) -> Result<()> {
        let m = self.m;
        for i in 0..m {
            if self.get(i, i) != 0 {
                return Err(Error::Structural(format!("l[{i}][{i}] is not zero")));
            }
            for j in 0..m {
                if i != j && self.get(i, j) == 0 {
                    return Err(Error::Structural(format!("l[{i}][{j}] must be positive")));
                }
                if self.get(i, j) != self.get(j, i) {
                    return Err(Error::Structural(format!("l[{i}][{j}] != l[{j}][{i}]")));
                }
            }
        }
        for h in 0..m {
            for i in 0..m {
                for j in 0..m {
                    if self.get(i, j) > self.get(i, h) + self.get(h, j) {
                        return Err(Error::Structural(format!(
                            "triangle inequality fails for {i} -> {h} -> {j}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// One CSV row per source node, no header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.m {
            let row: Vec<String> = self.row(i).iter().map(u64::to_string).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
}

/// Floyd–Warshall over the link costs.
pub fn all_pairs_shortest_paths(g: &Graph) -> Result<CostMatrix> {
    if let Some(unreachable) = g.first_unreachable() {
        return Err(Error::Disconnected { from: 0, unreachable });
    }
    let m = g.node_count;
    const INF: u64 = u64::MAX;
    let mut d = vec![INF; m * m];
    for i in 0..m {
        d[i * m + i] = 0;
    }
    for e in &g.edges {
        let c = d[e.u * m + e.v].min(e.cost);
        d[e.u * m + e.v] = c;
        d[e.v * m + e.u] = c;
    }
    for h in 0..m {
        for i in 0..m {
            let dih = d[i * m + h];
            if dih == INF {
                continue;
            }
            for j in 0..m {
                let dhj = d[h * m + j];
                if dhj == INF {
                    continue;
                }
                let via = dih + dhj;
                if via < d[i * m + j] {
                    d[i * m + j] = via;
                }
            }
        }
    }
    Ok(CostMatrix { m, cells: d })
}
