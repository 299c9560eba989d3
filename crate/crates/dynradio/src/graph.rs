//! Static graphs, dynamic traces, and vertex-connectivity machinery.
//!
//! Graphs are stored as bit adjacency matrices, so set operations on
//! neighborhoods (window intersections, transmitter counting) are
//! word-parallel. Vertex connectivity is computed by maximum flow on the
//! standard vertex-split digraph (Menger's theorem), with two refinements
//! that keep repeated checks affordable:
//!
//! * the exact value runs flows only from a minimum-degree vertex and its
//!   neighborhood (any minimum cut is smaller than that set, so it misses at
//!   least one of these anchors);
//! * the threshold test [`has_connectivity_at_least`] picks any `k` anchors
//!   and caps every flow at `k` augmenting paths.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from graph construction, trace windows, and trace (de)serialization.
#[derive(Debug, Error)]
pub enum GraphError {
    #[error("node {node} out of range for a graph on {n} nodes")]
    NodeOutOfRange { node: u32, n: usize },
    #[error("self-loop at node {0} is not allowed")]
    SelfLoop(u32),
    #[error(
        "window of {window} rounds starting at round {start} exceeds trace of {rounds} rounds"
    )]
    WindowOutOfRange { start: u64, window: u64, rounds: usize },
    #[error("graph has {actual} nodes but the trace holds graphs on {expected} nodes")]
    NodeCountMismatch { expected: usize, actual: usize },
    #[error("brute-force connectivity supports at most 10 nodes, got {0}")]
    TooLargeForBruteForce(usize),
    #[error("trace I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed trace JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// An undirected simple graph on nodes `0..n`, stored as a bit adjacency matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StaticGraph {
    n: usize,
    words: usize,
    rows: Vec<u64>,
}

impl StaticGraph {
    /// The edgeless graph on `n` nodes.
    pub fn empty(n: usize) -> Self {
        let words = n.div_ceil(64).max(1);
        Self { n, words, rows: vec![0; n * words] }
    }

    /// The complete graph on `n` nodes.
    pub fn complete(n: usize) -> Self {
        let mut g = Self::empty(n);
        for u in 0..n as u32 {
            for v in (u + 1)..n as u32 {
                g.set_edge(u, v);
            }
        }
        g
    }

    /// Builds a graph from an edge list, validating every endpoint.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (u32, u32)>,
    {
        let mut g = Self::empty(n);
        for (u, v) in edges {
            g.add_edge(u, v)?;
        }
        Ok(g)
    }

    /// Number of nodes.
    pub fn n(&self) -> usize {
        self.n
    }

    fn check_node(&self, x: u32) -> Result<(), GraphError> {
        if (x as usize) < self.n {
            Ok(())
        } else {
            Err(GraphError::NodeOutOfRange { node: x, n: self.n })
        }
    }

    /// Inserts the edge `{u, v}`; inserting an existing edge is a no-op.
    pub fn add_edge(&mut self, u: u32, v: u32) -> Result<(), GraphError> {
        self.check_node(u)?;
        self.check_node(v)?;
        if u == v {
            return Err(GraphError::SelfLoop(u));
        }
        self.set_edge(u, v);
        Ok(())
    }

    /// Removes the edge `{u, v}` if present.
    pub fn remove_edge(&mut self, u: u32, v: u32) -> Result<(), GraphError> {
        self.check_node(u)?;
        self.check_node(v)?;
        if u == v {
            return Err(GraphError::SelfLoop(u));
        }
        self.clear_edge(u, v);
        Ok(())
    }

    /// Unchecked symmetric bit set; callers guarantee `u != v` are in range.
    pub(crate) fn set_edge(&mut self, u: u32, v: u32) {
        debug_assert!(u != v && (u as usize) < self.n && (v as usize) < self.n);
        let (u, v) = (u as usize, v as usize);
        self.rows[u * self.words + v / 64] |= 1 << (v % 64);
        self.rows[v * self.words + u / 64] |= 1 << (u % 64);
    }

    pub(crate) fn clear_edge(&mut self, u: u32, v: u32) {
        debug_assert!(u != v && (u as usize) < self.n && (v as usize) < self.n);
        let (u, v) = (u as usize, v as usize);
        self.rows[u * self.words + v / 64] &= !(1 << (v % 64));
        self.rows[v * self.words + u / 64] &= !(1 << (u % 64));
    }

    /// Whether `{u, v}` is an edge.
    pub fn has_edge(&self, u: u32, v: u32) -> bool {
        let (u, v) = (u as usize, v as usize);
        assert!(u < self.n && v < self.n, "node out of range");
        self.rows[u * self.words + v / 64] >> (v % 64) & 1 == 1
    }

    /// The adjacency row of `u` as bit words (shared with the radio layer).
    pub(crate) fn row(&self, u: u32) -> &[u64] {
        let u = u as usize;
        &self.rows[u * self.words..(u + 1) * self.words]
    }

    pub(crate) fn word_count(&self) -> usize {
        self.words
    }

    /// Degree of `u`.
    pub fn degree(&self, u: u32) -> usize {
        self.row(u).iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Iterates the neighbors of `u` in increasing order.
    pub fn neighbors(&self, u: u32) -> Neighbors<'_> {
        Neighbors { words: self.row(u), word_idx: 0, current: self.row(u)[0] }
    }

    /// All edges as `(u, v)` pairs with `u < v`, lexicographically sorted.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for u in 0..self.n as u32 {
            for v in self.neighbors(u) {
                if v > u {
                    out.push((u, v));
                }
            }
        }
        out
    }

    /// Number of edges.
    pub fn edge_count(&self) -> usize {
        let total: usize = self.rows.iter().map(|w| w.count_ones() as usize).sum();
        total / 2
    }

    /// Whether every pair of distinct nodes is adjacent.
    pub fn is_complete(&self) -> bool {
        (0..self.n as u32).all(|u| self.degree(u) == self.n - 1)
    }

    /// Whether the graph is connected (single-node and empty graphs count as connected).
    pub fn is_connected(&self) -> bool {
        if self.n <= 1 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0u32];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for v in self.neighbors(u) {
                if !seen[v as usize] {
                    seen[v as usize] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.n
    }

    /// In-place edge union with a graph on the same node set.
    pub fn union_with(&mut self, other: &StaticGraph) -> Result<(), GraphError> {
        if self.n != other.n {
            return Err(GraphError::NodeCountMismatch { expected: self.n, actual: other.n });
        }
        for (w, &o) in self.rows.iter_mut().zip(&other.rows) {
            *w |= o;
        }
        Ok(())
    }

    /// In-place edge intersection with a graph on the same node set.
    pub fn intersect_with(&mut self, other: &StaticGraph) -> Result<(), GraphError> {
        if self.n != other.n {
            return Err(GraphError::NodeCountMismatch { expected: self.n, actual: other.n });
        }
        for (w, &o) in self.rows.iter_mut().zip(&other.rows) {
            *w &= o;
        }
        Ok(())
    }
}

/// Iterator over the neighbors of one node, in increasing order.
pub struct Neighbors<'a> {
    words: &'a [u64],
    word_idx: usize,
    current: u64,
}

impl Iterator for Neighbors<'_> {
    type Item = u32;

    fn next(&mut self) -> Option<u32> {
        while self.current == 0 {
            self.word_idx += 1;
            if self.word_idx >= self.words.len() {
                return None;
            }
            self.current = self.words[self.word_idx];
        }
        let bit = self.current.trailing_zeros();
        self.current &= self.current - 1;
        Some(self.word_idx as u32 * 64 + bit)
    }
}

/// A dynamic network: one graph per round, round `r ≥ 1` at entry `r`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DynamicTrace {
    n: usize,
    rounds: Vec<StaticGraph>,
}

/// Wire format: `{"n": …, "rounds": [[[u, v], …], …]}` with edges sorted `u < v`.
#[derive(Serialize, Deserialize)]
struct TraceJson {
    n: usize,
    rounds: Vec<Vec<(u32, u32)>>,
}

impl DynamicTrace {
    /// An empty trace over `n` nodes.
    pub fn new(n: usize) -> Self {
        Self { n, rounds: Vec::new() }
    }

    /// Builds a trace from per-round graphs, all on the same node set.
    pub fn from_rounds(n: usize, rounds: Vec<StaticGraph>) -> Result<Self, GraphError> {
        let mut trace = Self::new(n);
        for g in rounds {
            trace.push(g)?;
        }
        Ok(trace)
    }

    /// Appends the next round's graph.
    pub fn push(&mut self, g: StaticGraph) -> Result<(), GraphError> {
        if g.n != self.n {
            return Err(GraphError::NodeCountMismatch { expected: self.n, actual: g.n });
        }
        self.rounds.push(g);
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of recorded rounds.
    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    /// The graph of round `r` (1-based), if recorded.
    pub fn round(&self, r: u64) -> Option<&StaticGraph> {
        if r == 0 {
            return None;
        }
        self.rounds.get(r as usize - 1)
    }

    pub fn rounds(&self) -> &[StaticGraph] {
        &self.rounds
    }

    /// Serializes to the canonical single-line JSON wire format.
    pub fn to_json_string(&self) -> String {
        let json = TraceJson { n: self.n, rounds: self.rounds.iter().map(|g| g.edges()).collect() };
        let mut s = serde_json::to_string(&json).expect("trace serialization cannot fail");
        s.push('\n');
        s
    }

    /// Parses the JSON wire format, validating every edge.
    pub fn from_json_str(s: &str) -> Result<Self, GraphError> {
        let json: TraceJson = serde_json::from_str(s)?;
        let rounds = json
            .rounds
            .into_iter()
            .map(|edges| StaticGraph::from_edges(json.n, edges))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_rounds(json.n, rounds)
    }

    /// Writes the canonical JSON form to `path`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GraphError> {
        fs::write(path, self.to_json_string())?;
        Ok(())
    }

    /// Reads a trace previously written by [`DynamicTrace::save`].
    pub fn load(path: impl AsRef<Path>) -> Result<Self, GraphError> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }
}

impl Serialize for DynamicTrace {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        TraceJson { n: self.n, rounds: self.rounds.iter().map(|g| g.edges()).collect() }
            .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for DynamicTrace {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let json = TraceJson::deserialize(de)?;
        let rounds = json
            .rounds
            .into_iter()
            .map(|edges| StaticGraph::from_edges(json.n, edges))
            .collect::<Result<Vec<_>, _>>()
            .map_err(serde::de::Error::custom)?;
        Self::from_rounds(json.n, rounds).map_err(serde::de::Error::custom)
    }
}

/// First window of a trace whose edge intersection falls below the required
/// vertex connectivity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectivityReport {
    /// 1-based round index where the offending window starts.
    pub window_start: u64,
    /// Window length in rounds.
    pub window_length: u64,
    /// Exact vertex connectivity of the window's intersection graph.
    pub intersection_connectivity: usize,
}

impl fmt::Display for ConnectivityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "window of {} rounds starting at round {} has intersection connectivity {}",
            self.window_length, self.window_start, self.intersection_connectivity
        )
    }
}

// ---------------------------------------------------------------------------
// Maximum flow on the vertex-split digraph.
// ---------------------------------------------------------------------------

const ARC_INF: u32 = u32::MAX / 2;

/// Dinic's algorithm over an explicit arc list with residual arcs.
struct FlowNet {
    adj: Vec<Vec<u32>>,
    to: Vec<u32>,
    cap: Vec<u32>,
    level: Vec<i32>,
    iter: Vec<usize>,
}

impl FlowNet {
    fn new(nodes: usize) -> Self {
        Self {
            adj: vec![Vec::new(); nodes],
            to: Vec::new(),
            cap: Vec::new(),
            level: vec![-1; nodes],
            iter: vec![0; nodes],
        }
    }

    fn add_arc(&mut self, u: u32, v: u32, c: u32) {
        self.adj[u as usize].push(self.to.len() as u32);
        self.to.push(v);
        self.cap.push(c);
        self.adj[v as usize].push(self.to.len() as u32);
        self.to.push(u);
        self.cap.push(0);
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.fill(-1);
        self.level[s] = 0;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &a in &self.adj[u] {
                let v = self.to[a as usize] as usize;
                if self.cap[a as usize] > 0 && self.level[v] < 0 {
                    self.level[v] = self.level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        self.level[t] >= 0
    }

    fn dfs(&mut self, u: usize, t: usize, want: u32) -> u32 {
        if u == t {
            return want;
        }
        while self.iter[u] < self.adj[u].len() {
            let a = self.adj[u][self.iter[u]] as usize;
            let v = self.to[a] as usize;
            if self.cap[a] > 0 && self.level[v] == self.level[u] + 1 {
                let got = self.dfs(v, t, want.min(self.cap[a]));
                if got > 0 {
                    self.cap[a] -= got;
                    self.cap[a ^ 1] += got;
                    return got;
                }
            }
            self.iter[u] += 1;
        }
        0
    }

    /// Maximum flow from `s` to `t`, stopping early once `limit` is reached.
    fn max_flow(&mut self, s: usize, t: usize, limit: u32) -> u32 {
        let mut flow = 0;
        while flow < limit && self.bfs(s, t) {
            self.iter.fill(0);
            loop {
                let got = self.dfs(s, t, limit - flow);
                if got == 0 {
                    break;
                }
                flow += got;
                if flow >= limit {
                    break;
                }
            }
        }
        flow
    }
}

/// Local vertex connectivity between non-adjacent `s` and `t`, capped at `limit`.
///
/// Every node `x` is split into `x_in → x_out` with capacity 1; each edge
/// `{x, y}` contributes uncapacitated arcs `x_out → y_in` and `y_out → x_in`.
/// The maximum `s_out → t_in` flow then equals the minimum vertex cut
/// separating `s` from `t` (Menger).
fn split_flow(g: &StaticGraph, s: u32, t: u32, limit: usize) -> usize {
    debug_assert!(s != t && !g.has_edge(s, t));
    let n = g.n();
    let mut net = FlowNet::new(2 * n);
    for x in 0..n as u32 {
        net.add_arc(2 * x, 2 * x + 1, 1);
    }
    for u in 0..n as u32 {
        for v in g.neighbors(u) {
            if v > u {
                net.add_arc(2 * u + 1, 2 * v, ARC_INF);
                net.add_arc(2 * v + 1, 2 * u, ARC_INF);
            }
        }
    }
    net.max_flow(2 * s as usize + 1, 2 * t as usize, limit.min(n) as u32) as usize
}

/// Vertex connectivity of `g`: the minimum number of node removals that
/// disconnect it, with the conventions `K_n → n−1` and single-node → 0.
///
/// Flows run only from anchors `{u₀} ∪ N(u₀)` for a minimum-degree `u₀`: any
/// minimum cut has at most `deg(u₀)` nodes, so at least one anchor survives
/// on one side of the cut and its flow to the far side exposes the cut size.
pub fn vertex_connectivity(g: &StaticGraph) -> usize {
    let n = g.n();
    if n <= 1 {
        return 0;
    }
    if g.is_complete() {
        return n - 1;
    }
    let u0 = (0..n as u32).min_by_key(|&u| g.degree(u)).expect("n ≥ 2");
    let mut anchors = vec![u0];
    anchors.extend(g.neighbors(u0));
    let mut best = n - 1;
    for &a in &anchors {
        for v in 0..n as u32 {
            if v == a || g.has_edge(a, v) {
                continue;
            }
            best = best.min(split_flow(g, a, v, best));
            if best == 0 {
                return 0;
            }
        }
    }
    best
}

/// Whether `vertex_connectivity(g) ≥ k`, without computing the exact value.
///
/// Picks `k` arbitrary anchors and checks a `k`-capped flow from each anchor
/// to each of its non-neighbors. If some cut of size < k existed, at least
/// one anchor would avoid it, sit in one shore, and show a deficient flow to
/// the far shore (universal nodes can only sit inside the cut itself).
pub fn has_connectivity_at_least(g: &StaticGraph, k: usize) -> bool {
    if k == 0 {
        return true;
    }
    let n = g.n();
    if n <= k {
        return false;
    }
    if g.is_complete() {
        return true;
    }
    for a in 0..k as u32 {
        for v in 0..n as u32 {
            if v == a || g.has_edge(a, v) {
                continue;
            }
            if split_flow(g, a, v, k) < k {
                return false;
            }
        }
    }
    true
}

/// Vertex connectivity by exhaustive search over removal sets, for n ≤ 10.
///
/// Serves as an independent oracle for [`vertex_connectivity`]: scans subsets
/// in increasing size and returns the first size whose removal leaves a
/// disconnected graph (or `n−1` when no separator exists).
pub fn brute_force_connectivity(g: &StaticGraph) -> Result<usize, GraphError> {
    let n = g.n();
    if n > 10 {
        return Err(GraphError::TooLargeForBruteForce(n));
    }
    if n <= 1 {
        return Ok(0);
    }
    // Small adjacency masks: bit v of adj[u] set iff {u,v} is an edge.
    let adj: Vec<u16> =
        (0..n as u32).map(|u| g.neighbors(u).fold(0u16, |m, v| m | 1 << v)).collect();
    let full = (1u16 << n) - 1;
    let disconnected = |removed: u16| {
        let alive = full & !removed;
        let start = alive.trailing_zeros() as usize;
        let mut seen = 1u16 << start;
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            let fresh = adj[u] & alive & !seen;
            seen |= fresh;
            let mut m = fresh;
            while m != 0 {
                stack.push(m.trailing_zeros() as usize);
                m &= m - 1;
            }
        }
        seen != alive
    };
    for size in 0..n - 1 {
        for removed in 0u16..=full {
            if removed.count_ones() as usize != size || (full & !removed).count_ones() < 2 {
                continue;
            }
            if disconnected(removed) {
                return Ok(size);
            }
        }
    }
    Ok(n - 1)
}

/// Edge intersection of the `t_window` consecutive rounds starting at round `r`.
pub fn intersection_graph(
    trace: &DynamicTrace,
    r: u64,
    t_window: u64,
) -> Result<StaticGraph, GraphError> {
    if r == 0 || t_window == 0 || r + t_window - 1 > trace.len() as u64 {
        return Err(GraphError::WindowOutOfRange {
            start: r,
            window: t_window,
            rounds: trace.len(),
        });
    }
    let mut inter = trace.round(r).expect("window start in range").clone();
    for rr in r + 1..r + t_window {
        inter
            .intersect_with(trace.round(rr).expect("window end in range"))
            .expect("trace rounds share one node count");
    }
    Ok(inter)
}

/// Checks that every full `t_window`-round window of the trace has an edge
/// intersection with vertex connectivity ≥ k.
///
/// Returns `Ok(())` when the trace certifies the property, and the first
/// failing window otherwise. Windows running off the end of the finite trace
/// are skipped; a trace of length `L` certifies starts `r ≤ L − T + 1` only.
pub fn is_interval_k_connected(
    trace: &DynamicTrace,
    t_window: u64,
    k: usize,
) -> Result<(), ConnectivityReport> {
    assert!(t_window >= 1, "window length must be positive");
    let len = trace.len() as u64;
    if k == 0 || len < t_window {
        return Ok(());
    }
    // Consecutive windows frequently share one intersection graph, so the
    // threshold verdict is memoized by adjacency matrix.
    let mut verdicts: HashMap<StaticGraph, bool> = HashMap::new();
    for r in 1..=len - t_window + 1 {
        let inter = intersection_graph(trace, r, t_window).expect("window in range");
        let ok = *verdicts.entry(inter).or_insert_with_key(|g| has_connectivity_at_least(g, k));
        if !ok {
            let inter = intersection_graph(trace, r, t_window).expect("window in range");
            return Err(ConnectivityReport {
                window_start: r,
                window_length: t_window,
                intersection_connectivity: vertex_connectivity(&inter),
            });
        }
    }
    Ok(())
}

/// Replaces every node of `g` by a clique of `k` nodes; every edge becomes a
/// complete bipartite bundle between the corresponding cliques.
///
/// Node `i` of `g` maps to the block `i·k .. i·k+k−1`. For connected `g` the
/// result is k-vertex-connected.
pub fn clique_blowup(g: &StaticGraph, k: usize) -> StaticGraph {
    assert!(k >= 1, "blow-up factor must be positive");
    let k = k as u32;
    let n = g.n() as u32;
    let mut out = StaticGraph::empty((n * k) as usize);
    for i in 0..n {
        for a in 0..k {
            for b in (a + 1)..k {
                out.set_edge(i * k + a, i * k + b);
            }
        }
    }
    for u in 0..n {
        for v in g.neighbors(u) {
            if v > u {
                for a in 0..k {
                    for b in 0..k {
                        out.set_edge(u * k + a, v * k + b);
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cycle(n: usize) -> StaticGraph {
        let edges = (0..n as u32).map(|u| (u, (u + 1) % n as u32));
        StaticGraph::from_edges(n, edges).unwrap()
    }

    fn path(n: usize) -> StaticGraph {
        let edges = (0..n as u32 - 1).map(|u| (u, u + 1));
        StaticGraph::from_edges(n, edges).unwrap()
    }

    fn star(n: usize) -> StaticGraph {
        let edges = (1..n as u32).map(|v| (0, v));
        StaticGraph::from_edges(n, edges).unwrap()
    }

    fn petersen() -> StaticGraph {
        let mut edges = Vec::new();
        for i in 0..5u32 {
            edges.push((i, (i + 1) % 5)); // outer cycle
            edges.push((5 + i, 5 + (i + 2) % 5)); // inner pentagram
            edges.push((i, 5 + i)); // spokes
        }
        StaticGraph::from_edges(10, edges).unwrap()
    }

    /// Deterministic graph from a bit pattern over the (u, v) pairs.
    fn graph_from_bits(n: usize, bits: u64) -> StaticGraph {
        let mut g = StaticGraph::empty(n);
        let mut idx = 0;
        for u in 0..n as u32 {
            for v in (u + 1)..n as u32 {
                if bits >> (idx % 64) & 1 == 1 {
                    g.set_edge(u, v);
                }
                idx += 1;
            }
        }
        g
    }

    #[test]
    fn construction_validates_endpoints() {
        assert!(matches!(
            StaticGraph::from_edges(3, [(0, 3)]),
            Err(GraphError::NodeOutOfRange { node: 3, n: 3 })
        ));
        assert!(matches!(StaticGraph::from_edges(3, [(1, 1)]), Err(GraphError::SelfLoop(1))));
        let mut g = StaticGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        assert!(g.has_edge(0, 1) && g.has_edge(1, 0));
        assert_eq!(g.degree(1), 2);
        g.remove_edge(0, 1).unwrap();
        assert!(!g.has_edge(0, 1));
        assert_eq!(g.edges(), vec![(1, 2)]);
    }

    #[test]
    fn neighbors_cross_word_boundaries() {
        let mut g = StaticGraph::empty(130);
        g.set_edge(0, 63);
        g.set_edge(0, 64);
        g.set_edge(0, 129);
        assert_eq!(g.neighbors(0).collect::<Vec<_>>(), vec![63, 64, 129]);
        assert_eq!(g.degree(0), 3);
    }

    #[test]
    fn connectivity_known_graphs() {
        assert_eq!(vertex_connectivity(&StaticGraph::complete(4)), 3);
        assert_eq!(vertex_connectivity(&cycle(5)), 2);
        assert_eq!(vertex_connectivity(&path(3)), 1);
        let disjoint = StaticGraph::from_edges(4, [(0, 1), (2, 3)]).unwrap();
        assert_eq!(vertex_connectivity(&disjoint), 0);
        assert_eq!(vertex_connectivity(&StaticGraph::empty(1)), 0);
        assert_eq!(vertex_connectivity(&star(5)), 1);
        assert_eq!(vertex_connectivity(&petersen()), 3);
    }

    #[test]
    fn brute_force_matches_known_graphs() {
        assert_eq!(brute_force_connectivity(&StaticGraph::complete(4)).unwrap(), 3);
        assert_eq!(brute_force_connectivity(&cycle(5)).unwrap(), 2);
        assert_eq!(brute_force_connectivity(&star(5)).unwrap(), 1);
        assert_eq!(brute_force_connectivity(&petersen()).unwrap(), 3);
        assert!(matches!(
            brute_force_connectivity(&StaticGraph::empty(11)),
            Err(GraphError::TooLargeForBruteForce(11))
        ));
    }

    #[test]
    fn threshold_check_known_graphs() {
        let pet = petersen();
        assert!(has_connectivity_at_least(&pet, 3));
        assert!(!has_connectivity_at_least(&pet, 4));
        assert!(has_connectivity_at_least(&StaticGraph::complete(5), 4));
        assert!(!has_connectivity_at_least(&StaticGraph::complete(5), 5));
        assert!(has_connectivity_at_least(&StaticGraph::empty(1), 0));
        assert!(!has_connectivity_at_least(&StaticGraph::empty(1), 1));
    }

    #[test]
    fn intersection_examples() {
        let g = cycle(4);
        let trace = DynamicTrace::from_rounds(4, vec![g.clone(), g.clone(), g.clone()]).unwrap();
        assert_eq!(intersection_graph(&trace, 1, 3).unwrap(), g);

        let r1 = StaticGraph::from_edges(4, [(0, 1), (1, 2)]).unwrap();
        let r2 = StaticGraph::from_edges(4, [(1, 2), (2, 3)]).unwrap();
        let trace = DynamicTrace::from_rounds(4, vec![r1, r2]).unwrap();
        assert_eq!(intersection_graph(&trace, 1, 2).unwrap().edges(), vec![(1, 2)]);

        let a = StaticGraph::from_edges(4, [(0, 1)]).unwrap();
        let b = StaticGraph::from_edges(4, [(2, 3)]).unwrap();
        let trace = DynamicTrace::from_rounds(4, vec![a, b]).unwrap();
        assert_eq!(intersection_graph(&trace, 1, 2).unwrap().edge_count(), 0);

        assert!(matches!(
            intersection_graph(&trace, 2, 2),
            Err(GraphError::WindowOutOfRange { start: 2, window: 2, rounds: 2 })
        ));
    }

    #[test]
    fn interval_connectivity_static_and_alternating() {
        let k5 = StaticGraph::complete(5);
        let trace = DynamicTrace::from_rounds(5, vec![k5.clone(); 10]).unwrap();
        assert!(is_interval_k_connected(&trace, 3, 4).is_ok());

        let a = StaticGraph::from_edges(4, [(0, 1)]).unwrap();
        let b = StaticGraph::from_edges(4, [(2, 3)]).unwrap();
        let trace =
            DynamicTrace::from_rounds(4, vec![a.clone(), b.clone(), a.clone(), b.clone()]).unwrap();
        let report = is_interval_k_connected(&trace, 2, 1).unwrap_err();
        assert_eq!(report.window_start, 1);
        assert_eq!(report.window_length, 2);
        assert_eq!(report.intersection_connectivity, 0);
    }

    #[test]
    fn interval_connectivity_skips_partial_windows() {
        let a = StaticGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let trace = DynamicTrace::from_rounds(3, vec![a]).unwrap();
        // Length 1 < T = 2: no full window exists, so the trace certifies vacuously.
        assert!(is_interval_k_connected(&trace, 2, 1).is_ok());
    }

    #[test]
    fn blowup_examples() {
        let single = StaticGraph::from_edges(2, [(0, 1)]).unwrap();
        let blown = clique_blowup(&single, 2);
        assert_eq!(blown.n(), 4);
        assert!(blown.is_complete());

        let g = cycle(5);
        assert_eq!(clique_blowup(&g, 1), g);

        let blown = clique_blowup(&path(3), 2);
        // Block-major identity: node 1 becomes {2, 3}, adjacent to both blocks.
        assert!(blown.has_edge(2, 3));
        assert!(blown.has_edge(0, 2) && blown.has_edge(1, 3));
        assert!(blown.has_edge(2, 4) && blown.has_edge(3, 5));
        assert!(!blown.has_edge(0, 4));
        assert_eq!(vertex_connectivity(&blown), 2);
    }

    #[test]
    fn trace_json_round_trip_is_bit_exact() {
        let r1 = StaticGraph::from_edges(4, [(0, 1), (1, 2)]).unwrap();
        let r2 = StaticGraph::from_edges(4, [(2, 3)]).unwrap();
        let trace = DynamicTrace::from_rounds(4, vec![r1, r2]).unwrap();
        let s = trace.to_json_string();
        assert_eq!(s, "{\"n\":4,\"rounds\":[[[0,1],[1,2]],[[2,3]]]}\n");
        let parsed = DynamicTrace::from_json_str(&s).unwrap();
        assert_eq!(parsed, trace);
        assert_eq!(parsed.to_json_string(), s);
    }

    #[test]
    fn trace_json_rejects_bad_edges() {
        assert!(DynamicTrace::from_json_str("{\"n\":2,\"rounds\":[[[0,2]]]}").is_err());
        assert!(DynamicTrace::from_json_str("{\"n\":2,\"rounds\":[[[1,1]]]}").is_err());
        assert!(DynamicTrace::from_json_str("not json").is_err());
    }

    #[test]
    fn trace_save_load_via_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.json");
        let trace =
            DynamicTrace::from_rounds(3, vec![path_graph_3(), StaticGraph::empty(3)]).unwrap();
        trace.save(&path).unwrap();
        assert_eq!(DynamicTrace::load(&path).unwrap(), trace);
    }

    fn path_graph_3() -> StaticGraph {
        path(3)
    }

    proptest! {
        #[test]
        fn prop_flow_matches_brute_force(n in 1usize..=7, bits in any::<u64>()) {
            let g = graph_from_bits(n, bits);
            prop_assert_eq!(vertex_connectivity(&g), brute_force_connectivity(&g).unwrap());
        }

        #[test]
        fn prop_threshold_check_matches_exact(n in 1usize..=7, bits in any::<u64>(), k in 0usize..=7) {
            let g = graph_from_bits(n, bits);
            prop_assert_eq!(has_connectivity_at_least(&g, k), vertex_connectivity(&g) >= k);
        }

        #[test]
        fn prop_connectivity_monotone_under_edge_addition(
            n in 2usize..=7,
            bits in any::<u64>(),
            extra in any::<u64>(),
        ) {
            let g = graph_from_bits(n, bits);
            let mut h = g.clone();
            h.union_with(&graph_from_bits(n, extra)).unwrap();
            prop_assert!(vertex_connectivity(&h) >= vertex_connectivity(&g));
        }

        #[test]
        fn prop_window_one_is_identity(
            n in 2usize..=6,
            rounds in proptest::collection::vec(any::<u64>(), 1..6),
        ) {
            let graphs: Vec<_> = rounds.iter().map(|&b| graph_from_bits(n, b)).collect();
            let trace = DynamicTrace::from_rounds(n, graphs.clone()).unwrap();
            for (i, g) in graphs.iter().enumerate() {
                prop_assert_eq!(&intersection_graph(&trace, i as u64 + 1, 1).unwrap(), g);
            }
        }

        #[test]
        fn prop_blowup_lifts_interval_connectivity(
            n in 2usize..=5,
            base_bits in any::<u64>(),
            extras in proptest::collection::vec(any::<u64>(), 4),
            k in 1usize..=3,
            t_window in 1u64..=3,
        ) {
            // A connected base graph plus per-round extra edges: every window
            // intersection contains the base, hence stays connected.
            let mut base = graph_from_bits(n, base_bits);
            for u in 0..n as u32 - 1 {
                base.set_edge(u, u + 1);
            }
            let rounds: Vec<_> = extras
                .iter()
                .map(|&e| {
                    let mut g = base.clone();
                    g.union_with(&graph_from_bits(n, e)).unwrap();
                    clique_blowup(&g, k)
                })
                .collect();
            let trace = DynamicTrace::from_rounds(n * k, rounds).unwrap();
            prop_assert!(is_interval_k_connected(&trace, t_window, k).is_ok());
        }

        #[test]
        fn prop_blowup_of_connected_graph_is_k_connected(
            n in 2usize..=6,
            bits in any::<u64>(),
            k in 1usize..=3,
        ) {
            let mut g = graph_from_bits(n, bits);
            for u in 0..n as u32 - 1 {
                g.set_edge(u, u + 1);
            }
            prop_assert!(vertex_connectivity(&clique_blowup(&g, k)) >= k);
        }
    }
}
