//! Factor graphs: construction, validation, subgraphs, neighborhoods,
//! acyclicity and pinned variants with hard unary constraints.
//!
//! A factor graph couples `n` variable nodes over a finite spin domain with
//! constraint nodes. Each constraint carries an ordered neighbor tuple
//! (repeats allowed) and a strictly positive weight table; the only zero
//! weights permitted anywhere are the 0/1 indicator tables created by
//! pinning. Adjacency treats the neighbor tuple as a set, weight evaluation
//! as a tuple.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finite spin domain Ω = {0, 1, ..., q-1} with q ≥ 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpinDomain {
    size: usize,
}

impl SpinDomain {
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidParameter(format!(
                "spin domain needs at least 2 spins, got {size}"
            )));
        }
        Ok(SpinDomain { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn spins(&self) -> std::ops::Range<usize> {
        0..self.size
    }
}

/// Weight function ψ: Ω^k → (0,∞), stored lexicographically with the first
/// argument most significant. Zero entries are only allowed on tables
/// flagged `hard` (the pinning indicators).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    arity: usize,
    q: usize,
    values: Vec<f64>,
    hard: bool,
}

impl WeightTable {
    pub fn new(arity: usize, q: usize, values: Vec<f64>) -> Result<Self> {
        if arity == 0 {
            return Err(Error::InvalidParameter("arity must be positive".into()));
        }
        let expect = q.checked_pow(arity as u32).ok_or_else(|| {
            Error::InvalidParameter(format!("q^k overflows for q={q}, k={arity}"))
        })?;
        if values.len() != expect {
            return Err(Error::ArityMismatch {
                tuple: values.len(),
                table: expect,
            });
        }
        for &v in &values {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::NonPositiveWeight { value: v });
            }
        }
        Ok(WeightTable {
            arity,
            q,
            values,
            hard: false,
        })
    }

    /// Unary 0/1 indicator of `value`, the only table allowed to hold zeros.
    pub fn hard_pin(q: usize, value: usize) -> Result<Self> {
        if value >= q {
            return Err(Error::InvalidParameter(format!(
                "pin value {value} outside spin domain of size {q}"
            )));
        }
        let values = (0..q).map(|s| if s == value { 1.0 } else { 0.0 }).collect();
        Ok(WeightTable {
            arity: 1,
            q,
            values,
            hard: true,
        })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn is_hard(&self) -> bool {
        self.hard
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Evaluate at an argument tuple (one spin per tuple slot).
    pub fn value(&self, args: &[usize]) -> f64 {
        debug_assert_eq!(args.len(), self.arity);
        let mut idx = 0usize;
        for &a in args {
            debug_assert!(a < self.q);
            idx = idx * self.q + a;
        }
        self.values[idx]
    }
}

/// A constraint node: an ordered neighbor tuple plus a shared weight table.
#[derive(Debug, Clone)]
pub struct Constraint {
    neighbors: Vec<usize>,
    table: Arc<WeightTable>,
}

impl Constraint {
    pub fn new(neighbors: Vec<usize>, table: Arc<WeightTable>) -> Self {
        Constraint { neighbors, table }
    }

    /// The ordered tuple ∂a = (∂_1 a, ..., ∂_k a); repeats possible.
    pub fn neighbors(&self) -> &[usize] {
        &self.neighbors
    }

    /// The neighbor tuple deduplicated and sorted (set view for adjacency).
    pub fn neighbor_set(&self) -> Vec<usize> {
        let mut s = self.neighbors.clone();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn table(&self) -> &WeightTable {
        &self.table
    }

    pub fn table_arc(&self) -> Arc<WeightTable> {
        Arc::clone(&self.table)
    }

    /// ψ_a(σ(∂_1 a), ..., σ(∂_k a)) for a full configuration σ.
    pub fn weight(&self, config: &[usize]) -> f64 {
        let mut idx = 0usize;
        let q = self.table.q;
        for &x in &self.neighbors {
            idx = idx * q + config[x];
        }
        self.table.values[idx]
    }
}

/// Hard pin: prescribe `value` for `variable` via an indicator constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HardPin {
    pub variable: usize,
    pub value: usize,
}

/// An immutable Ω-factor graph G = (V, F, (∂a), (ψ_a)).
#[derive(Debug, Clone)]
pub struct FactorGraph {
    n: usize,
    omega: SpinDomain,
    constraints: Vec<Constraint>,
    /// Per variable, the sorted set of incident constraint indices.
    var_adj: Vec<Vec<usize>>,
}

impl FactorGraph {
    /// Validate and build. Every neighbor index must be in range and each
    /// tuple length must equal its table arity.
    pub fn build(n: usize, omega: SpinDomain, constraints: Vec<Constraint>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("graph needs n >= 1 variables".into()));
        }
        let mut var_adj = vec![Vec::new(); n];
        for (ci, c) in constraints.iter().enumerate() {
            if c.neighbors.len() != c.table.arity {
                return Err(Error::ArityMismatch {
                    tuple: c.neighbors.len(),
                    table: c.table.arity,
                });
            }
            if c.table.q != omega.size() {
                return Err(Error::InvalidParameter(format!(
                    "weight table over {} spins attached to a graph over {}",
                    c.table.q,
                    omega.size()
                )));
            }
            for &x in &c.neighbors {
                if x >= n {
                    return Err(Error::IndexOutOfRange { index: x, n });
                }
            }
            for x in c.neighbor_set() {
                var_adj[x].push(ci);
            }
        }
        Ok(FactorGraph {
            n,
            omega,
            constraints,
            var_adj,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn omega(&self) -> SpinDomain {
        self.omega
    }

    pub fn q(&self) -> usize {
        self.omega.size()
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Sorted constraint indices incident to variable `x` (∂x).
    pub fn var_constraints(&self, x: usize) -> &[usize] {
        &self.var_adj[x]
    }

    /// Whether any constraint is a hard pinning indicator.
    pub fn has_hard_constraints(&self) -> bool {
        self.constraints.iter().any(|c| c.table.hard)
    }

    /// Directed incidences (x, a) with x ∈ ∂a, ordered by variable then
    /// constraint index. This is the index set of a message family.
    pub fn incidences(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for x in 0..self.n {
            for &a in &self.var_adj[x] {
                out.push((x, a));
            }
        }
        out
    }

    /// G[U]: variables U (re-indexed in sorted order) and exactly those
    /// constraints with ∂a ⊆ U. Returns the graph together with the index
    /// map from new variable indices to the parent's.
    pub fn induced_subgraph(&self, vars: &[usize]) -> Result<(FactorGraph, Vec<usize>)> {
        if vars.is_empty() {
            return Err(Error::EmptySet { what: "subgraph variable set" });
        }
        let mut index_map: Vec<usize> = vars.to_vec();
        index_map.sort_unstable();
        index_map.dedup();
        for &x in &index_map {
            if x >= self.n {
                return Err(Error::IndexOutOfRange { index: x, n: self.n });
            }
        }
        let mut old_to_new = vec![usize::MAX; self.n];
        for (new, &old) in index_map.iter().enumerate() {
            old_to_new[old] = new;
        }
        let mut constraints = Vec::new();
        for c in &self.constraints {
            if c.neighbor_set().iter().all(|&x| old_to_new[x] != usize::MAX) {
                constraints.push(Constraint::new(
                    c.neighbors.iter().map(|&x| old_to_new[x]).collect(),
                    c.table_arc(),
                ));
            }
        }
        let g = FactorGraph::build(index_map.len(), self.omega, constraints)?;
        Ok((g, index_map))
    }

    /// The graph without the constraints in `remove` (variables untouched).
    pub fn remove_constraints(&self, remove: &[usize]) -> FactorGraph {
        let mut drop = vec![false; self.constraints.len()];
        for &a in remove {
            drop[a] = true;
        }
        let kept = self
            .constraints
            .iter()
            .enumerate()
            .filter(|(i, _)| !drop[*i])
            .map(|(_, c)| c.clone())
            .collect();
        FactorGraph::build(self.n, self.omega, kept).expect("removal preserves validity")
    }

    /// Distance between two variables on the bipartite incidence graph,
    /// divided by two (variables sharing a constraint are at distance 1).
    pub fn var_distance(&self, u: usize, v: usize) -> Result<Option<usize>> {
        if u >= self.n {
            return Err(Error::IndexOutOfRange { index: u, n: self.n });
        }
        if v >= self.n {
            return Err(Error::IndexOutOfRange { index: v, n: self.n });
        }
        let dists = self.bipartite_distances(u);
        Ok(dists[v].map(|d| d / 2))
    }

    /// ∇_{u,r} = {v : dist(u,v) ≤ r}, sorted.
    pub fn neighborhood(&self, u: usize, r: usize) -> Result<Vec<usize>> {
        if u >= self.n {
            return Err(Error::IndexOutOfRange { index: u, n: self.n });
        }
        let dists = self.bipartite_distances(u);
        Ok((0..self.n)
            .filter(|&v| matches!(dists[v], Some(d) if d / 2 <= r))
            .collect())
    }

    /// BFS over the bipartite incidence graph from variable `u`. Entry `v`
    /// holds the bipartite distance to variable `v`, entries `n + a` the
    /// distance to constraint `a`.
    fn bipartite_distances(&self, u: usize) -> Vec<Option<usize>> {
        let total = self.n + self.constraints.len();
        let mut dist = vec![None; total];
        dist[u] = Some(0);
        let mut queue = VecDeque::from([u]);
        while let Some(node) = queue.pop_front() {
            let d = dist[node].unwrap();
            if node < self.n {
                for &a in &self.var_adj[node] {
                    if dist[self.n + a].is_none() {
                        dist[self.n + a] = Some(d + 1);
                        queue.push_back(self.n + a);
                    }
                }
            } else {
                for x in self.constraints[node - self.n].neighbor_set() {
                    if dist[x].is_none() {
                        dist[x] = Some(d + 1);
                        queue.push_back(x);
                    }
                }
            }
        }
        dist
    }

    /// True iff the bipartite incidence graph (set adjacency) has no cycle.
    pub fn is_acyclic(&self) -> bool {
        let total = self.n + self.constraints.len();
        let mut parent: Vec<usize> = (0..total).collect();
        fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (ai, c) in self.constraints.iter().enumerate() {
            for x in c.neighbor_set() {
                let ra = find(&mut parent, self.n + ai);
                let rx = find(&mut parent, x);
                if ra == rx {
                    return false;
                }
                parent[ra] = rx;
            }
        }
        true
    }

    /// G^{I,σ}: the graph plus one hard indicator constraint per pinned
    /// variable. Its Gibbs measure is the conditional of the parent's on
    /// the subcube S^{I,σ}.
    pub fn pin(&self, vars: &[usize], sigma: &[usize]) -> Result<FactorGraph> {
        if vars.len() != sigma.len() {
            return Err(Error::DimensionMismatch {
                left: vars.len(),
                right: sigma.len(),
            });
        }
        let mut constraints = self.constraints.clone();
        for (&x, &s) in vars.iter().zip(sigma) {
            if x >= self.n {
                return Err(Error::IndexOutOfRange { index: x, n: self.n });
            }
            let table = Arc::new(WeightTable::hard_pin(self.q(), s)?);
            constraints.push(Constraint::new(vec![x], table));
        }
        FactorGraph::build(self.n, self.omega, constraints)
    }
}

/// On-disk graph description. Neighbor indices are 1-based in the file;
/// weights are lexicographic with the first neighbor most significant.
#[derive(Debug, Serialize, Deserialize)]
struct GraphFile {
    n: usize,
    q: usize,
    constraints: Vec<GraphFileConstraint>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GraphFileConstraint {
    neighbors: Vec<usize>,
    weights: Vec<f64>,
}

impl FactorGraph {
    pub fn to_json(&self) -> String {
        let file = GraphFile {
            n: self.n,
            q: self.q(),
            constraints: self
                .constraints
                .iter()
                .map(|c| GraphFileConstraint {
                    neighbors: c.neighbors.iter().map(|&x| x + 1).collect(),
                    weights: c.table.values.clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<FactorGraph> {
        let file: GraphFile = serde_json::from_str(text)
            .map_err(|e| Error::InvalidParameter(format!("graph file: {e}")))?;
        let omega = SpinDomain::new(file.q)?;
        let mut constraints = Vec::new();
        for fc in file.constraints {
            let mut neighbors = Vec::with_capacity(fc.neighbors.len());
            for x in fc.neighbors {
                if x == 0 {
                    return Err(Error::InvalidParameter(
                        "neighbor indices in graph files are 1-based".into(),
                    ));
                }
                neighbors.push(x - 1);
            }
            let table = WeightTable::new(neighbors.len(), file.q, fc.weights)?;
            constraints.push(Constraint::new(neighbors, Arc::new(table)));
        }
        FactorGraph::build(file.n, omega, constraints)
    }
}

/// The two-variable graph used as a running example: one Potts edge at
/// β = ln 2, ψ(equal) = 1/2, ψ(different) = 1.
pub fn demo_edge_graph() -> FactorGraph {
    let omega = SpinDomain::new(2).unwrap();
    let table = WeightTable::new(2, 2, vec![0.5, 1.0, 1.0, 0.5]).unwrap();
    FactorGraph::build(2, omega, vec![Constraint::new(vec![0, 1], Arc::new(table))]).unwrap()
}

/// A graph on `n` variables with no constraints.
pub fn empty_graph(n: usize, q: usize) -> Result<FactorGraph> {
    FactorGraph::build(n, SpinDomain::new(q)?, Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_graph() -> FactorGraph {
        // x0 - a - x1 - b - x2 with Potts tables at beta = ln 2
        let omega = SpinDomain::new(2).unwrap();
        let table = Arc::new(WeightTable::new(2, 2, vec![0.5, 1.0, 1.0, 0.5]).unwrap());
        FactorGraph::build(
            3,
            omega,
            vec![
                Constraint::new(vec![0, 1], Arc::clone(&table)),
                Constraint::new(vec![1, 2], table),
            ],
        )
        .unwrap()
    }

    #[test]
    fn build_validates_indices() {
        let omega = SpinDomain::new(2).unwrap();
        let table = Arc::new(WeightTable::new(2, 2, vec![1.0; 4]).unwrap());
        let err = FactorGraph::build(3, omega, vec![Constraint::new(vec![0, 3], table)]);
        assert!(matches!(err, Err(Error::IndexOutOfRange { index: 3, n: 3 })));
    }

    #[test]
    fn build_rejects_nonpositive_weights() {
        assert!(matches!(
            WeightTable::new(1, 2, vec![1.0, 0.0]),
            Err(Error::NonPositiveWeight { .. })
        ));
        assert!(matches!(
            WeightTable::new(1, 2, vec![1.0, -2.0]),
            Err(Error::NonPositiveWeight { .. })
        ));
    }

    #[test]
    fn build_rejects_arity_mismatch() {
        let omega = SpinDomain::new(2).unwrap();
        let table = Arc::new(WeightTable::new(2, 2, vec![1.0; 4]).unwrap());
        let err = FactorGraph::build(2, omega, vec![Constraint::new(vec![0], table)]);
        assert!(matches!(err, Err(Error::ArityMismatch { .. })));
    }

    #[test]
    fn empty_graph_has_infinite_distances() {
        let g = empty_graph(3, 2).unwrap();
        assert_eq!(g.var_distance(0, 1).unwrap(), None);
        assert_eq!(g.var_distance(0, 0).unwrap(), Some(0));
    }

    #[test]
    fn induced_subgraph_of_demo_edge() {
        let g = demo_edge_graph();
        let (sub, map) = g.induced_subgraph(&[0]).unwrap();
        assert_eq!(sub.n(), 1);
        assert_eq!(sub.num_constraints(), 0);
        assert_eq!(map, vec![0]);

        let (full, map) = g.induced_subgraph(&[0, 1]).unwrap();
        assert_eq!(full.n(), 2);
        assert_eq!(full.num_constraints(), 1);
        assert_eq!(map, vec![0, 1]);
    }

    #[test]
    fn induced_subgraph_of_path_keeps_internal_constraints() {
        let g = path_graph();
        let (sub, map) = g.induced_subgraph(&[0, 1]).unwrap();
        assert_eq!(map, vec![0, 1]);
        assert_eq!(sub.num_constraints(), 1);
        assert_eq!(sub.constraints()[0].neighbors(), &[0, 1]);
    }

    #[test]
    fn induced_subgraph_on_full_set_reproduces_graph() {
        let g = path_graph();
        let (sub, map) = g.induced_subgraph(&[0, 1, 2]).unwrap();
        assert_eq!(map, vec![0, 1, 2]);
        assert_eq!(sub.num_constraints(), g.num_constraints());
        for (a, b) in sub.constraints().iter().zip(g.constraints()) {
            assert_eq!(a.neighbors(), b.neighbors());
        }
    }

    #[test]
    fn induced_subgraph_rejects_empty_set() {
        let g = demo_edge_graph();
        assert!(matches!(
            g.induced_subgraph(&[]),
            Err(Error::EmptySet { .. })
        ));
    }

    #[test]
    fn neighborhoods_on_demo_edge() {
        let g = demo_edge_graph();
        assert_eq!(g.neighborhood(0, 0).unwrap(), vec![0]);
        assert_eq!(g.neighborhood(0, 1).unwrap(), vec![0, 1]);
    }

    #[test]
    fn neighborhood_on_path_reaches_both_sides() {
        let g = path_graph();
        assert_eq!(g.neighborhood(1, 1).unwrap(), vec![0, 1, 2]);
        assert_eq!(g.neighborhood(0, 1).unwrap(), vec![0, 1]);
        assert_eq!(g.neighborhood(0, 2).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn neighborhood_monotone_and_stabilizes() {
        let g = path_graph();
        let mut prev = Vec::new();
        for r in 0..5 {
            let cur = g.neighborhood(0, r).unwrap();
            assert!(prev.iter().all(|v| cur.contains(v)));
            prev = cur;
        }
        assert_eq!(prev, vec![0, 1, 2]);
    }

    #[test]
    fn acyclicity() {
        assert!(demo_edge_graph().is_acyclic());
        assert!(path_graph().is_acyclic());
        // Triangle: three Potts edges on three variables.
        let omega = SpinDomain::new(2).unwrap();
        let t = Arc::new(WeightTable::new(2, 2, vec![0.5, 1.0, 1.0, 0.5]).unwrap());
        let tri = FactorGraph::build(
            3,
            omega,
            vec![
                Constraint::new(vec![0, 1], Arc::clone(&t)),
                Constraint::new(vec![1, 2], Arc::clone(&t)),
                Constraint::new(vec![2, 0], t),
            ],
        )
        .unwrap();
        assert!(!tri.is_acyclic());
    }

    #[test]
    fn acyclicity_matches_edge_count_oracle() {
        // edges = nodes - components on every acyclic incidence graph
        use std::collections::HashSet;
        for g in [demo_edge_graph(), path_graph(), empty_graph(4, 2).unwrap()] {
            let nodes = g.n() + g.num_constraints();
            let edges: usize = g.constraints().iter().map(|c| c.neighbor_set().len()).sum();
            let mut seen = HashSet::new();
            let mut components = 0;
            for v in 0..g.n() {
                if seen.insert(v) {
                    components += 1;
                    let d = g.bipartite_distances(v);
                    for (node, dist) in d.iter().enumerate() {
                        if dist.is_some() {
                            seen.insert(node);
                        }
                    }
                }
            }
            for a in 0..g.num_constraints() {
                if g.constraints()[a].neighbor_set().is_empty() {
                    components += 1; // isolated constraint node (arity 0 impossible, defensive)
                }
                seen.insert(g.n() + a);
            }
            assert_eq!(g.is_acyclic(), edges == nodes - components);
        }
    }

    #[test]
    fn repeated_neighbors_use_set_adjacency() {
        let omega = SpinDomain::new(2).unwrap();
        let t = Arc::new(WeightTable::new(2, 2, vec![0.5, 1.0, 1.0, 0.5]).unwrap());
        let g = FactorGraph::build(2, omega, vec![Constraint::new(vec![0, 0], t)]).unwrap();
        assert!(g.is_acyclic());
        assert_eq!(g.var_constraints(0), &[0]);
        assert!(g.var_constraints(1).is_empty());
        // Weight evaluation still sees the tuple.
        assert_eq!(g.constraints()[0].weight(&[0, 1]), 0.5);
        assert_eq!(g.constraints()[0].weight(&[1, 0]), 0.5);
    }

    #[test]
    fn pin_length_mismatch() {
        let g = demo_edge_graph();
        assert!(matches!(
            g.pin(&[0], &[0, 1]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn pin_adds_hard_constraints() {
        let g = demo_edge_graph();
        let pinned = g.pin(&[0], &[1]).unwrap();
        assert_eq!(pinned.num_constraints(), 2);
        assert!(pinned.has_hard_constraints());
        let pin = &pinned.constraints()[1];
        assert_eq!(pin.neighbors(), &[0]);
        assert_eq!(pin.table().values(), &[0.0, 1.0]);
        // Empty pin set leaves the graph unchanged.
        let same = g.pin(&[], &[]).unwrap();
        assert_eq!(same.num_constraints(), 1);
    }

    #[test]
    fn json_round_trip_is_one_based() {
        let g = demo_edge_graph();
        let text = g.to_json();
        assert!(text.contains("\"neighbors\": ["));
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed["constraints"][0]["neighbors"][0], 1);
        assert_eq!(parsed["constraints"][0]["neighbors"][1], 2);
        let back = FactorGraph::from_json(&text).unwrap();
        assert_eq!(back.n(), 2);
        assert_eq!(back.constraints()[0].neighbors(), &[0, 1]);
        assert_eq!(back.constraints()[0].table().values(), &[0.5, 1.0, 1.0, 0.5]);
    }
}
