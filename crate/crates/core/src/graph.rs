//! Undirected communication graphs, periodic time-varying schedules,
//! adversary placement and Metropolis mixing weights.

use std::collections::{BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest graph `is_r_robust` will enumerate.
pub const ROBUSTNESS_NODE_CAP: usize = 16;

/// Default number of rejected samples before `place_adversaries` gives up.
pub const DEFAULT_PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("node {node} out of range ({n_nodes} nodes)")]
    NodeOutOfRange { node: usize, n_nodes: usize },
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("schedule phases disagree on the node count")]
    NodeCountMismatch,
    #[error("empty schedule")]
    EmptySchedule,
    #[error("graph is not connected")]
    Disconnected,
    #[error("cannot place {count} adversaries as a {f}-local set after {attempts} attempts")]
    PlacementImpossible {
        count: usize,
        f: usize,
        attempts: usize,
    },
    #[error("adversary count {count} must be below the node count {n_nodes}")]
    TooManyAdversaries { count: usize, n_nodes: usize },
    #[error("node {node} lists {neighbor} as retained but they are not adjacent at round {round}")]
    NotANeighbor {
        node: usize,
        neighbor: usize,
        round: u64,
    },
    #[error("robustness check limited to {cap} nodes, graph has {n_nodes}")]
    TooLargeForRobustness { n_nodes: usize, cap: usize },
    #[error("robustness is only defined here for static graphs")]
    NotStatic,
}

/// A static undirected simple graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adj: Vec<Vec<usize>>,
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Self {
            adj: vec![Vec::new(); n],
        }
    }

    /// Builds a graph from an undirected edge list. Duplicate edges collapse.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut sets = vec![BTreeSet::new(); n];
        for &(u, v) in edges {
            for node in [u, v] {
                if node >= n {
                    return Err(GraphError::NodeOutOfRange { node, n_nodes: n });
                }
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            sets[u].insert(v);
            sets[v].insert(u);
        }
        Ok(Self {
            adj: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    pub fn ring(n: usize) -> Self {
        let edges: Vec<_> = match n {
            0 | 1 => Vec::new(),
            2 => vec![(0, 1)],
            _ => (0..n).map(|i| (i, (i + 1) % n)).collect(),
        };
        Self::from_edges(n, &edges).expect("ring edges are valid")
    }

    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::from_edges(n, &edges).expect("path edges are valid")
    }

    /// Star centred on node 0.
    pub fn star(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (0, i)).collect();
        Self::from_edges(n, &edges).expect("star edges are valid")
    }

    pub fn complete(n: usize) -> Self {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                edges.push((u, v));
            }
        }
        Self::from_edges(n, &edges).expect("complete edges are valid")
    }

    /// G(n, p) with a seeded generator.
    pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.random::<f64>() < p {
                    edges.push((u, v));
                }
            }
        }
        Self::from_edges(n, &edges).expect("sampled edges are valid")
    }

    pub fn n_nodes(&self) -> usize {
        self.adj.len()
    }

    /// Sorted neighbor list; never contains `i`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].binary_search(&v).is_ok()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (u, nbrs) in self.adj.iter().enumerate() {
            out.extend(nbrs.iter().filter(|&&v| v > u).map(|&v| (u, v)));
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        let n = self.n_nodes();
        if n <= 1 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == n
    }

    /// True iff every node outside `set` has at most `r` neighbors inside it.
    pub fn is_r_local(&self, set: &[usize], r: usize) -> bool {
        let mut member = vec![false; self.n_nodes()];
        for &s in set {
            member[s] = true;
        }
        (0..self.n_nodes())
            .filter(|&v| !member[v])
            .all(|v| self.adj[v].iter().filter(|&&u| member[u]).count() <= r)
    }

    pub fn union(graphs: &[Graph]) -> Result<Graph, GraphError> {
        let n = graphs.first().ok_or(GraphError::EmptySchedule)?.n_nodes();
        if graphs.iter().any(|g| g.n_nodes() != n) {
            return Err(GraphError::NodeCountMismatch);
        }
        let edges: Vec<_> = graphs.iter().flat_map(|g| g.edges()).collect();
        Graph::from_edges(n, &edges)
    }
}

/// Metropolis weight on an edge whose endpoints have degrees `deg_i`, `deg_j`.
pub fn metropolis_weight(deg_i: usize, deg_j: usize) -> f64 {
    1.0 / (1 + deg_i.max(deg_j)) as f64
}

/// Mixing weights of one agent over its retained neighbors and itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusRow {
    pub agent: usize,
    /// `(neighbor, weight)` in ascending neighbor order.
    pub weights: Vec<(usize, f64)>,
    pub self_weight: f64,
}

impl ConsensusRow {
    pub fn retained(&self) -> impl Iterator<Item = usize> + '_ {
        self.weights.iter().map(|&(j, _)| j)
    }

    pub fn weight(&self, j: usize) -> f64 {
        if j == self.agent {
            return self.self_weight;
        }
        self.weights
            .iter()
            .find(|&&(k, _)| k == j)
            .map_or(0.0, |&(_, w)| w)
    }

    pub fn total(&self) -> f64 {
        self.self_weight + self.weights.iter().map(|&(_, w)| w).sum::<f64>()
    }

    /// Mixes `values` (indexed by agent) with this row, evaluated as
    /// `x_i + Σ_j c(i,j) (x_j − x_i)` so that agreement is an exact fixed point.
    pub fn apply(&self, values: &[Vec<f64>]) -> Vec<f64> {
        let own = &values[self.agent];
        let mut out = own.clone();
        for &(j, w) in &self.weights {
            for ((o, &x), &x_own) in out.iter_mut().zip(&values[j]).zip(own) {
                *o += w * (x - x_own);
            }
        }
        out
    }
}

/// A periodic sequence of graphs over a fixed node set, plus the adversary
/// set and the trimming parameter `F`. Round `t` uses phase `t mod period`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSchedule {
    phases: Vec<Graph>,
    adversaries: Vec<usize>,
    f: usize,
}

impl GraphSchedule {
    pub fn new(phases: Vec<Graph>, adversaries: Vec<usize>, f: usize) -> Result<Self, GraphError> {
        let n = phases.first().ok_or(GraphError::EmptySchedule)?.n_nodes();
        if phases.iter().any(|g| g.n_nodes() != n) {
            return Err(GraphError::NodeCountMismatch);
        }
        let schedule = Self {
            phases,
            adversaries: Vec::new(),
            f,
        };
        schedule.with_adversaries(adversaries)
    }

    pub fn fixed(graph: Graph) -> Self {
        Self {
            phases: vec![graph],
            adversaries: Vec::new(),
            f: 0,
        }
    }

    pub fn with_adversaries(mut self, mut adversaries: Vec<usize>) -> Result<Self, GraphError> {
        adversaries.sort_unstable();
        adversaries.dedup();
        let n = self.n_nodes();
        if let Some(&node) = adversaries.iter().find(|&&a| a >= n) {
            return Err(GraphError::NodeOutOfRange { node, n_nodes: n });
        }
        self.adversaries = adversaries;
        Ok(self)
    }

    pub fn with_f(mut self, f: usize) -> Self {
        self.f = f;
        self
    }

    pub fn n_nodes(&self) -> usize {
        self.phases[0].n_nodes()
    }

    pub fn period(&self) -> usize {
        self.phases.len()
    }

    pub fn is_static(&self) -> bool {
        self.phases.len() == 1
    }

    pub fn phases(&self) -> &[Graph] {
        &self.phases
    }

    pub fn f(&self) -> usize {
        self.f
    }

    pub fn adversaries(&self) -> &[usize] {
        &self.adversaries
    }

    pub fn is_adversary(&self, i: usize) -> bool {
        self.adversaries.binary_search(&i).is_ok()
    }

    pub fn graph_at(&self, t: u64) -> &Graph {
        &self.phases[(t % self.phases.len() as u64) as usize]
    }

    /// `K_i` under `E_t`.
    pub fn neighborhood(&self, i: usize, t: u64) -> &[usize] {
        self.graph_at(t).neighbors(i)
    }

    pub fn degree(&self, i: usize, t: u64) -> usize {
        self.graph_at(t).degree(i)
    }

    /// r-locality of `set` at every round. A periodic schedule repeats, so
    /// checking each phase covers any horizon.
    pub fn is_r_local(&self, set: &[usize], r: usize) -> bool {
        self.phases.iter().all(|g| g.is_r_local(set, r))
    }

    /// Uniformly samples `count` nodes until the sample is `f`-local.
    pub fn place_adversaries<R: Rng + ?Sized>(
        &self,
        count: usize,
        f: usize,
        rng: &mut R,
        max_attempts: usize,
    ) -> Result<Vec<usize>, GraphError> {
        let n = self.n_nodes();
        if count >= n {
            return Err(GraphError::TooManyAdversaries { count, n_nodes: n });
        }
        if count == 0 {
            return Ok(Vec::new());
        }
        for _ in 0..max_attempts {
            let mut sample = rand::seq::index::sample(rng, n, count).into_vec();
            sample.sort_unstable();
            if self.is_r_local(&sample, f) {
                return Ok(sample);
            }
        }
        Err(GraphError::PlacementImpossible {
            count,
            f,
            attempts: max_attempts,
        })
    }

    /// Metropolis rows for round `t`. `retained[i]` must be a subset of
    /// `K_i`; degrees are those of the untrimmed graph.
    pub fn metropolis_weights(
        &self,
        t: u64,
        retained: &[Vec<usize>],
    ) -> Result<Vec<ConsensusRow>, GraphError> {
        let g = self.graph_at(t);
        if retained.len() != g.n_nodes() {
            return Err(GraphError::NodeCountMismatch);
        }
        retained
            .iter()
            .enumerate()
            .map(|(i, tau)| {
                let mut tau = tau.clone();
                tau.sort_unstable();
                tau.dedup();
                let mut weights = Vec::with_capacity(tau.len());
                for j in tau {
                    if j >= g.n_nodes() || !g.has_edge(i, j) {
                        return Err(GraphError::NotANeighbor {
                            node: i,
                            neighbor: j,
                            round: t,
                        });
                    }
                    weights.push((j, metropolis_weight(g.degree(i), g.degree(j))));
                }
                let self_weight = 1.0 - weights.iter().map(|&(_, w)| w).sum::<f64>();
                Ok(ConsensusRow {
                    agent: i,
                    weights,
                    self_weight,
                })
            })
            .collect()
    }

    /// Untrimmed Metropolis rows (`τ_i = K_i`).
    pub fn full_metropolis_weights(&self, t: u64) -> Vec<ConsensusRow> {
        let g = self.graph_at(t);
        let retained: Vec<Vec<usize>> = (0..g.n_nodes()).map(|i| g.neighbors(i).to_vec()).collect();
        self.metropolis_weights(t, &retained)
            .expect("neighbors are always retainable")
    }

    /// Dense untrimmed weight matrix for round `t`.
    pub fn metropolis_matrix(&self, t: u64) -> Vec<Vec<f64>> {
        let n = self.n_nodes();
        self.full_metropolis_weights(t)
            .into_iter()
            .map(|row| (0..n).map(|j| row.weight(j)).collect())
            .collect()
    }

    /// One plain (untrimmed) Metropolis consensus round over all nodes.
    pub fn metropolis_round(&self, t: u64, values: &[Vec<f64>]) -> Vec<Vec<f64>> {
        self.full_metropolis_weights(t)
            .iter()
            .map(|row| row.apply(values))
            .collect()
    }

    /// Per-node fraction of neighbors in `set` (worst phase), the `g`
    /// diagnostic. Nodes without neighbors report 0.
    pub fn adversarial_fraction(&self, set: &[usize]) -> Vec<f64> {
        let n = self.n_nodes();
        (0..n)
            .map(|v| {
                self.phases
                    .iter()
                    .map(|g| {
                        let nbrs = g.neighbors(v);
                        if nbrs.is_empty() {
                            0.0
                        } else {
                            nbrs.iter().filter(|u| set.contains(u)).count() as f64
                                / nbrs.len() as f64
                        }
                    })
                    .fold(0.0, f64::max)
            })
            .collect()
    }

    /// Static-graph robustness; see [`is_r_robust`].
    pub fn is_r_robust(&self, r: usize) -> Result<bool, GraphError> {
        if !self.is_static() {
            return Err(GraphError::NotStatic);
        }
        is_r_robust(&self.phases[0], r)
    }
}

/// Whether `g` is r-robust: for every pair of disjoint nonempty node subsets,
/// at least one of them has a member with `r` or more neighbors outside
/// that subset. Exhaustive over subsets, so limited to
/// [`ROBUSTNESS_NODE_CAP`] nodes.
pub fn is_r_robust(g: &Graph, r: usize) -> Result<bool, GraphError> {
    let n = g.n_nodes();
    if n > ROBUSTNESS_NODE_CAP {
        return Err(GraphError::TooLargeForRobustness {
            n_nodes: n,
            cap: ROBUSTNESS_NODE_CAP,
        });
    }
    if n < 2 || r == 0 {
        return Ok(true);
    }
    let masks: Vec<u32> = (0..n)
        .map(|v| g.neighbors(v).iter().fold(0u32, |m, &u| m | (1 << u)))
        .collect();
    let full: u32 = (1u32 << n) - 1;
    let size = 1usize << n;

    // stuck[S]: S is nonempty and no member has r neighbors outside S.
    let mut stuck = vec![false; size];
    for s in 1..size {
        let set = s as u32;
        let mut any = false;
        let mut bits = set;
        while bits != 0 {
            let v = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            if (masks[v] & !set).count_ones() as usize >= r {
                any = true;
                break;
            }
        }
        stuck[s] = !any;
    }
    // has_stuck[M]: some nonempty subset of M is stuck (subset-OR transform).
    let mut has_stuck = stuck.clone();
    for bit in 0..n {
        for m in 0..size {
            if m & (1 << bit) != 0 && has_stuck[m ^ (1 << bit)] {
                has_stuck[m] = true;
            }
        }
    }
    for s in 1..size {
        if stuck[s] && has_stuck[(full & !(s as u32)) as usize] {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Largest `r` for which `g` is r-robust. Graphs with fewer than two nodes
/// are vacuously r-robust for every `r` and report 0.
pub fn max_robustness(g: &Graph) -> Result<usize, GraphError> {
    if g.n_nodes() < 2 {
        return Ok(0);
    }
    let mut r = 0;
    while r < g.n_nodes() && is_r_robust(g, r + 1)? {
        r += 1;
    }
    Ok(r)
}
