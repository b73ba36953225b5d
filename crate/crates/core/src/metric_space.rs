//! Semi-metrics over observations: shortest-path distance on an undirected
//! simple graph, or Euclidean distance between points.
//!
//! Neighborhoods are self-inclusive and closed: `N(i, r) = {j : ρ(i, j) ≤ r}`.
//! Disconnected graph pairs are at distance `+∞`, which exceeds every radius.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

/// Default cap on `n` for materializing all-pairs hop matrices.
pub const DEFAULT_ALL_PAIRS_CAP: usize = 5000;

/// Undirected simple graph as sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adj: Vec<Vec<u32>>,
    n_edges: usize,
}

impl Graph {
    /// Graph on `n` nodes without edges.
    pub fn empty(n: usize) -> Self {
        Graph {
            adj: vec![Vec::new(); n],
            n_edges: 0,
        }
    }

    /// Builds a simple graph. Self-loops are rejected; duplicate edges
    /// (in either orientation) are merged.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n > u32::MAX as usize {
            bail!(Argument, "graph too large: {n} nodes");
        }
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                bail!(Argument, "edge ({u}, {v}) out of range for {n} nodes");
            }
            if u == v {
                bail!(Argument, "self-loop at node {u}");
            }
            adj[u].push(v as u32);
            adj[v].push(u as u32);
        }
        let mut n_edges = 0;
        for list in adj.iter_mut() {
            list.sort_unstable();
            list.dedup();
            n_edges += list.len();
        }
        Ok(Graph {
            adj,
            n_edges: n_edges / 2,
        })
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    /// Direct neighbors of `i`, excluding `i`.
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.adj[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    /// Edges `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj.iter().enumerate().flat_map(|(u, list)| {
            list.iter()
                .map(|&v| v as usize)
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }

    pub fn mean_degree(&self) -> f64 {
        if self.adj.is_empty() {
            return 0.0;
        }
        2.0 * self.n_edges as f64 / self.adj.len() as f64
    }

    /// Nodes within `max_hops` of any source, with their hop distance.
    /// Sources are at distance 0.
    pub fn ball(
        &self,
        sources: &[usize],
        max_hops: u32,
        scratch: &mut BfsScratch,
    ) -> Vec<(u32, u32)> {
        scratch.reset(self.len());
        let mut out = Vec::new();
        for &s in sources {
            if scratch.visit(s) {
                scratch.queue.push_back((s as u32, 0));
                out.push((s as u32, 0));
            }
        }
        while let Some((u, d)) = scratch.queue.pop_front() {
            if d == max_hops {
                continue;
            }
            for &v in &self.adj[u as usize] {
                if scratch.visit(v as usize) {
                    scratch.queue.push_back((v, d + 1));
                    out.push((v, d + 1));
                }
            }
        }
        out
    }

    /// Hop distance from `source` to `target`, `None` if disconnected.
    pub fn hops(&self, source: usize, target: usize, scratch: &mut BfsScratch) -> Option<u32> {
        if source == target {
            return Some(0);
        }
        scratch.reset(self.len());
        scratch.visit(source);
        scratch.queue.push_back((source as u32, 0));
        while let Some((u, d)) = scratch.queue.pop_front() {
            for &v in &self.adj[u as usize] {
                if v as usize == target {
                    return Some(d + 1);
                }
                if scratch.visit(v as usize) {
                    scratch.queue.push_back((v, d + 1));
                }
            }
        }
        None
    }
}

/// Reusable BFS state. Visitation is tracked with epoch stamps so that a
/// reset costs O(1) except when the graph size changes.
#[derive(Debug, Default, Clone)]
pub struct BfsScratch {
    stamp: Vec<u32>,
    epoch: u32,
    queue: VecDeque<(u32, u32)>,
}

impl BfsScratch {
    pub fn new() -> Self {
        Self::default()
    }

    fn reset(&mut self, n: usize) {
        if self.stamp.len() != n || self.epoch == u32::MAX {
            self.stamp = vec![0; n];
            self.epoch = 0;
        }
        self.epoch += 1;
        self.queue.clear();
    }

    /// Marks `i` visited; returns whether it was unvisited.
    fn visit(&mut self, i: usize) -> bool {
        if self.stamp[i] == self.epoch {
            false
        } else {
            self.stamp[i] = self.epoch;
            true
        }
    }
}

/// Points in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
}

impl PointCloud {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.len() % dim != 0 {
            bail!(
                Argument,
                "coordinate buffer of length {} is not a multiple of dimension {dim}",
                coords.len()
            );
        }
        if coords.iter().any(|c| !c.is_finite()) {
            bail!(Argument, "non-finite coordinate");
        }
        Ok(PointCloud { dim, coords })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    fn dist(&self, i: usize, j: usize) -> f64 {
        let s: f64 = self
            .point(i)
            .iter()
            .zip(self.point(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        libm::sqrt(s)
    }
}

/// The semi-metric `ρ_n` over `n` observations.
#[derive(Debug, Clone, PartialEq)]
pub enum MetricSpace {
    Graph(Graph),
    Euclidean(PointCloud),
}

/// Neighborhood growth at radius `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodStats {
    pub r: f64,
    /// Mean of `|N(i, r)|` over `i`.
    pub avg_size: f64,
    /// `max_i |N(i, r)|`.
    pub max_size: usize,
    /// `avg_size / √n`.
    pub ratio_sqrt_n: f64,
}

fn check_radius(r: f64) -> Result<()> {
    if !(r >= 0.0) {
        bail!(Argument, "radius must be nonnegative, got {r}");
    }
    Ok(())
}

/// Largest hop count `h` with `h ≤ r`, saturating.
fn hop_radius(r: f64) -> u32 {
    if r >= u32::MAX as f64 {
        u32::MAX
    } else {
        libm::floor(r) as u32
    }
}

impl MetricSpace {
    pub fn len(&self) -> usize {
        match self {
            MetricSpace::Graph(g) => g.len(),
            MetricSpace::Euclidean(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_graph(&self) -> Option<&Graph> {
        match self {
            MetricSpace::Graph(g) => Some(g),
            MetricSpace::Euclidean(_) => None,
        }
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.len() {
            bail!(
                Argument,
                "index {i} out of range for {} observations",
                self.len()
            );
        }
        Ok(())
    }

    /// `ρ(i, j)`; `+∞` for disconnected graph pairs.
    pub fn distance(&self, i: usize, j: usize) -> Result<f64> {
        self.check_index(i)?;
        self.check_index(j)?;
        Ok(match self {
            MetricSpace::Graph(g) => match g.hops(i, j, &mut BfsScratch::new()) {
                Some(h) => h as f64,
                None => f64::INFINITY,
            },
            MetricSpace::Euclidean(p) => p.dist(i, j),
        })
    }

    /// `N(i, r)` in increasing index order. Always contains `i`.
    pub fn neighborhood(&self, i: usize, r: f64) -> Result<Vec<usize>> {
        self.neighborhood_with(i, r, &mut BfsScratch::new())
    }

    pub fn neighborhood_with(
        &self,
        i: usize,
        r: f64,
        scratch: &mut BfsScratch,
    ) -> Result<Vec<usize>> {
        self.check_index(i)?;
        check_radius(r)?;
        let mut out: Vec<usize> = match self {
            MetricSpace::Graph(g) => g
                .ball(&[i], hop_radius(r), scratch)
                .into_iter()
                .map(|(v, _)| v as usize)
                .collect(),
            MetricSpace::Euclidean(p) => (0..p.len()).filter(|&j| p.dist(i, j) <= r).collect(),
        };
        out.sort_unstable();
        Ok(out)
    }

    /// `N(i, r) ∪ N(j, r)` in increasing index order.
    pub fn neighborhood_union(
        &self,
        i: usize,
        j: usize,
        r: f64,
        scratch: &mut BfsScratch,
    ) -> Result<Vec<usize>> {
        self.check_index(i)?;
        self.check_index(j)?;
        check_radius(r)?;
        let mut out: Vec<usize> = match self {
            MetricSpace::Graph(g) => g
                .ball(&[i, j], hop_radius(r), scratch)
                .into_iter()
                .map(|(v, _)| v as usize)
                .collect(),
            MetricSpace::Euclidean(p) => (0..p.len())
                .filter(|&k| p.dist(i, k) <= r || p.dist(j, k) <= r)
                .collect(),
        };
        out.sort_unstable();
        Ok(out)
    }

    /// Exact `N̄_n(r)`, `N*(r)` and `N̄_n(r)/√n`.
    pub fn neighborhood_stats(&self, r: f64) -> Result<NeighborhoodStats> {
        check_radius(r)?;
        let n = self.len();
        if n == 0 {
            bail!(Argument, "neighborhood statistics of an empty space");
        }
        let mut scratch = BfsScratch::new();
        let mut total = 0usize;
        let mut max_size = 0usize;
        for i in 0..n {
            let size = match self {
                MetricSpace::Graph(g) => g.ball(&[i], hop_radius(r), &mut scratch).len(),
                MetricSpace::Euclidean(p) => (0..n).filter(|&j| p.dist(i, j) <= r).count(),
            };
            total += size;
            max_size = max_size.max(size);
        }
        let avg_size = total as f64 / n as f64;
        Ok(NeighborhoodStats {
            r,
            avg_size,
            max_size,
            ratio_sqrt_n: avg_size / libm::sqrt(n as f64),
        })
    }

    /// `ρ(S1, S2) = min {ρ(i, j) : i ∈ S1, j ∈ S2}`.
    pub fn set_distance(&self, s1: &[usize], s2: &[usize]) -> Result<f64> {
        if s1.is_empty() || s2.is_empty() {
            bail!(Argument, "set distance requires nonempty sets");
        }
        for &i in s1.iter().chain(s2) {
            self.check_index(i)?;
        }
        Ok(match self {
            MetricSpace::Graph(g) => {
                let mut target = vec![false; g.len()];
                for &j in s2 {
                    target[j] = true;
                }
                g.ball(s1, u32::MAX, &mut BfsScratch::new())
                    .into_iter()
                    .filter(|&(v, _)| target[v as usize])
                    .map(|(_, d)| d as f64)
                    .fold(f64::INFINITY, f64::min)
            }
            MetricSpace::Euclidean(p) => s1
                .iter()
                .flat_map(|&i| s2.iter().map(move |&j| (i, j)))
                .map(|(i, j)| p.dist(i, j))
                .fold(f64::INFINITY, f64::min),
        })
    }

    /// Flags `i` with `ρ(i, S) < d`. Members of `S` are flagged when `d > 0`.
    pub fn closer_than(&self, set: &[usize], d: f64) -> Result<Vec<bool>> {
        for &i in set {
            self.check_index(i)?;
        }
        let n = self.len();
        let mut flags = vec![false; n];
        if !(d > 0.0) || set.is_empty() {
            return Ok(flags);
        }
        match self {
            MetricSpace::Graph(g) => {
                // integer hop counts h satisfy h < d  <=>  h <= ceil(d) - 1
                let reach = if d >= u32::MAX as f64 {
                    u32::MAX
                } else {
                    (libm::ceil(d) as u32).saturating_sub(1)
                };
                for (v, _) in g.ball(set, reach, &mut BfsScratch::new()) {
                    flags[v as usize] = true;
                }
            }
            MetricSpace::Euclidean(p) => {
                for (i, flag) in flags.iter_mut().enumerate() {
                    *flag = set.iter().any(|&j| p.dist(i, j) < d);
                }
            }
        }
        Ok(flags)
    }

    /// All-pairs hop matrix for graphs with `n ≤ cap`.
    pub fn hop_matrix(&self, cap: usize) -> Result<HopMatrix> {
        let g = match self {
            MetricSpace::Graph(g) => g,
            MetricSpace::Euclidean(_) => bail!(Argument, "hop matrix requires a graph space"),
        };
        let n = g.len();
        if n > cap {
            bail!(
                Argument,
                "refusing to materialize {n}x{n} distances (cap {cap})"
            );
        }
        let mut hops = vec![HopMatrix::UNREACHABLE; n * n];
        let mut scratch = BfsScratch::new();
        for s in 0..n {
            for (v, d) in g.ball(&[s], u32::MAX, &mut scratch) {
                hops[s * n + v as usize] = d.min(u16::MAX as u32 - 1) as u16;
            }
        }
        Ok(HopMatrix { n, hops })
    }
}

/// Dense all-pairs hop counts.
#[derive(Debug, Clone)]
pub struct HopMatrix {
    n: usize,
    hops: Vec<u16>,
}

impl HopMatrix {
    pub const UNREACHABLE: u16 = u16::MAX;

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Distance as an extended real.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self.hops[i * self.n + j] {
            Self::UNREACHABLE => f64::INFINITY,
            h => h as f64,
        }
    }
}
