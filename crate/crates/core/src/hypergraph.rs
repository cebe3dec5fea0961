//! Hypergraphs, their star (bipartite) and clique expansions.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// A hypergraph with optional node and hyperedge features.
///
/// Hyperedges are stored with their node indices sorted ascending; the order
/// of the hyperedges themselves is preserved.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypergraph<T> {
    num_nodes: usize,
    hyperedges: Vec<Vec<usize>>,
    node_features: Option<Matrix<T>>,
    hyperedge_features: Option<Matrix<T>>,
}

impl<T: Scalar> Hypergraph<T> {
    pub fn new(num_nodes: usize, hyperedges: Vec<Vec<usize>>) -> Result<Self> {
        Self::with_features(num_nodes, hyperedges, None, None)
    }

    pub fn with_features(
        num_nodes: usize,
        mut hyperedges: Vec<Vec<usize>>,
        node_features: Option<Matrix<T>>,
        hyperedge_features: Option<Matrix<T>>,
    ) -> Result<Self> {
        let mut seen = BTreeMap::new();
        for (i, he) in hyperedges.iter_mut().enumerate() {
            if he.is_empty() {
                return Err(Error::EmptyHyperedge(i));
            }
            he.sort_unstable();
            if he.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::RepeatedNode(i));
            }
            if let Some(&node) = he.iter().find(|&&v| v >= num_nodes) {
                return Err(Error::NodeOutOfRange { node, num_nodes });
            }
            if let Some(&j) = seen.get(he.as_slice()) {
                return Err(Error::DuplicateHyperedge(j, i));
            }
            seen.insert(he.clone(), i);
        }
        if let Some(f) = &node_features {
            check_rows("node feature rows", num_nodes, f)?;
        }
        if let Some(f) = &hyperedge_features {
            check_rows("hyperedge feature rows", hyperedges.len(), f)?;
        }
        Ok(Self { num_nodes, hyperedges, node_features, hyperedge_features })
    }

    /// Builds a hypergraph after dropping repeated hyperedges (first copy wins).
    pub fn dedup_from(num_nodes: usize, hyperedges: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut kept = Vec::with_capacity(hyperedges.len());
        for mut he in hyperedges {
            he.sort_unstable();
            he.dedup();
            if seen.insert(he.clone()) {
                kept.push(he);
            }
        }
        Self::new(num_nodes, kept)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_hyperedges(&self) -> usize {
        self.hyperedges.len()
    }

    pub fn hyperedges(&self) -> &[Vec<usize>] {
        &self.hyperedges
    }

    pub fn node_features(&self) -> Option<&Matrix<T>> {
        self.node_features.as_ref()
    }

    pub fn hyperedge_features(&self) -> Option<&Matrix<T>> {
        self.hyperedge_features.as_ref()
    }

    /// Total number of (node, hyperedge) incidences.
    pub fn num_incidences(&self) -> usize {
        self.hyperedges.iter().map(Vec::len).sum()
    }

    /// Number of hyperedges each node belongs to.
    pub fn node_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes];
        for he in &self.hyperedges {
            for &v in he {
                deg[v] += 1;
            }
        }
        deg
    }

    pub fn hyperedge_sizes(&self) -> Vec<usize> {
        self.hyperedges.iter().map(Vec::len).collect()
    }

    /// Hyperedge sets sorted lexicographically; equal for hypergraphs that
    /// differ only in hyperedge order.
    pub fn canonical_hyperedges(&self) -> Vec<Vec<usize>> {
        let mut hes = self.hyperedges.clone();
        hes.sort();
        hes
    }

    pub fn with_node_features(mut self, features: Option<Matrix<T>>) -> Result<Self> {
        if let Some(f) = &features {
            check_rows("node feature rows", self.num_nodes, f)?;
        }
        self.node_features = features;
        Ok(self)
    }

    /// Connected components of the clique expansion, as a label per node.
    pub fn components(&self) -> Vec<usize> {
        let mut uf = UnionFind::new(self.num_nodes);
        for he in &self.hyperedges {
            for w in he.windows(2) {
                uf.union(w[0], w[1]);
            }
        }
        let mut label = BTreeMap::new();
        (0..self.num_nodes)
            .map(|v| {
                let root = uf.find(v);
                let next = label.len();
                *label.entry(root).or_insert(next)
            })
            .collect()
    }

    pub fn is_connected(&self) -> bool {
        self.num_nodes <= 1 || self.components().iter().all(|&c| c == 0)
    }
}

fn check_rows<T: Scalar>(what: &'static str, expected: usize, m: &Matrix<T>) -> Result<()> {
    if m.rows() != expected {
        return Err(Error::DimensionMismatch { what, expected, actual: m.rows() });
    }
    if !m.is_finite() {
        return Err(Error::NonFinite(what.to_string()));
    }
    Ok(())
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Merges the sets of `a` and `b`; `false` if they were already joined.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo;
        true
    }
}

/// Bipartite view of a hypergraph: nodes on the left, hyperedges on the
/// right, incidences as edges. Carries per-left-node budgets and optional
/// features on both sides.
#[derive(Clone, Debug, PartialEq)]
pub struct BipartiteGraph<T> {
    num_left: usize,
    num_right: usize,
    /// Sorted, unique `(left, right)` pairs.
    edges: Vec<(usize, usize)>,
    left_budgets: Vec<usize>,
    left_features: Option<Matrix<T>>,
    right_features: Option<Matrix<T>>,
    cluster_of_left: Option<Vec<usize>>,
    cluster_of_right: Option<Vec<usize>>,
}

impl<T: Scalar> BipartiteGraph<T> {
    /// Validates and canonicalizes the edge list (sorted ascending).
    pub fn new(
        num_left: usize,
        num_right: usize,
        mut edges: Vec<(usize, usize)>,
        left_budgets: Vec<usize>,
        left_features: Option<Matrix<T>>,
        right_features: Option<Matrix<T>>,
    ) -> Result<Self> {
        if left_budgets.len() != num_left {
            return Err(Error::DimensionMismatch {
                what: "left budgets",
                expected: num_left,
                actual: left_budgets.len(),
            });
        }
        if let Some(i) = left_budgets.iter().position(|&b| b == 0) {
            return Err(Error::ZeroBudget(i));
        }
        for &(l, r) in &edges {
            if l >= num_left || r >= num_right {
                return Err(Error::EdgeOutOfRange { left: l, right: r });
            }
        }
        edges.sort_unstable();
        if let Some(w) = edges.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateEdge(w[0].0, w[0].1));
        }
        if let Some(f) = &left_features {
            check_rows("left feature rows", num_left, f)?;
        }
        if let Some(f) = &right_features {
            check_rows("right feature rows", num_right, f)?;
        }
        Ok(Self {
            num_left,
            num_right,
            edges,
            left_budgets,
            left_features,
            right_features,
            cluster_of_left: None,
            cluster_of_right: None,
        })
    }

    /// The generation seed: one left node carrying the full budget, one
    /// right node, one edge, zero features of the requested widths.
    pub fn minimal(budget: usize, left_dim: Option<usize>, right_dim: Option<usize>) -> Self {
        Self {
            num_left: 1,
            num_right: 1,
            edges: vec![(0, 0)],
            left_budgets: vec![budget.max(1)],
            left_features: left_dim.map(|d| Matrix::zeros(1, d)),
            right_features: right_dim.map(|d| Matrix::zeros(1, d)),
            cluster_of_left: None,
            cluster_of_right: None,
        }
    }

    pub fn num_left(&self) -> usize {
        self.num_left
    }

    pub fn num_right(&self) -> usize {
        self.num_right
    }

    pub fn num_nodes(&self) -> usize {
        self.num_left + self.num_right
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn left_budgets(&self) -> &[usize] {
        &self.left_budgets
    }

    pub fn total_budget(&self) -> usize {
        self.left_budgets.iter().sum()
    }

    pub fn left_features(&self) -> Option<&Matrix<T>> {
        self.left_features.as_ref()
    }

    pub fn right_features(&self) -> Option<&Matrix<T>> {
        self.right_features.as_ref()
    }

    pub fn left_feature_dim(&self) -> Option<usize> {
        self.left_features.as_ref().map(Matrix::cols)
    }

    pub fn right_feature_dim(&self) -> Option<usize> {
        self.right_features.as_ref().map(Matrix::cols)
    }

    pub fn cluster_of_left(&self) -> Option<&[usize]> {
        self.cluster_of_left.as_deref()
    }

    pub fn cluster_of_right(&self) -> Option<&[usize]> {
        self.cluster_of_right.as_deref()
    }

    pub fn has_edge(&self, left: usize, right: usize) -> bool {
        self.edges.binary_search(&(left, right)).is_ok()
    }

    /// Index of the edge in the canonical edge order.
    pub fn edge_index(&self, left: usize, right: usize) -> Option<usize> {
        self.edges.binary_search(&(left, right)).ok()
    }

    /// Sorted right neighbors of every left node.
    pub fn left_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_left];
        for &(l, r) in &self.edges {
            adj[l].push(r);
        }
        adj
    }

    /// Sorted left neighbors of every right node.
    pub fn right_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_right];
        for &(l, r) in &self.edges {
            adj[r].push(l);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        adj
    }

    pub fn left_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.num_left];
        for &(l, _) in &self.edges {
            d[l] += 1;
        }
        d
    }

    pub fn right_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.num_right];
        for &(_, r) in &self.edges {
            d[r] += 1;
        }
        d
    }

    /// Sibling groups (children sharing a parent) as index lists; every node
    /// is its own group when no parent map is set.
    pub fn left_groups(&self) -> Vec<Vec<usize>> {
        groups_of(self.cluster_of_left.as_deref(), self.num_left)
    }

    pub fn right_groups(&self) -> Vec<Vec<usize>> {
        groups_of(self.cluster_of_right.as_deref(), self.num_right)
    }

    pub(crate) fn set_clusters(&mut self, left: Option<Vec<usize>>, right: Option<Vec<usize>>) {
        self.cluster_of_left = left;
        self.cluster_of_right = right;
    }

    /// Drops parent-cluster bookkeeping.
    pub fn without_clusters(mut self) -> Self {
        self.cluster_of_left = None;
        self.cluster_of_right = None;
        self
    }

    pub fn with_budgets(mut self, budgets: Vec<usize>) -> Result<Self> {
        if budgets.len() != self.num_left {
            return Err(Error::DimensionMismatch {
                what: "left budgets",
                expected: self.num_left,
                actual: budgets.len(),
            });
        }
        if let Some(i) = budgets.iter().position(|&b| b == 0) {
            return Err(Error::ZeroBudget(i));
        }
        self.left_budgets = budgets;
        Ok(self)
    }

    /// Left nodes without any incident edge.
    pub fn isolated_left(&self) -> Vec<usize> {
        self.left_degrees().iter().enumerate().filter(|(_, &d)| d == 0).map(|(i, _)| i).collect()
    }

    /// Topology, budgets and features agree (parent maps are ignored).
    pub fn same_content(&self, other: &Self) -> bool {
        self.num_left == other.num_left
            && self.num_right == other.num_right
            && self.edges == other.edges
            && self.left_budgets == other.left_budgets
            && self.left_features == other.left_features
            && self.right_features == other.right_features
    }

    /// Applies node relabelings: new index of left node `i` is `left_perm[i]`.
    pub fn permuted(&self, left_perm: &[usize], right_perm: &[usize]) -> Self {
        let mut edges: Vec<_> = self.edges.iter().map(|&(l, r)| (left_perm[l], right_perm[r])).collect();
        edges.sort_unstable();
        let mut budgets = vec![0; self.num_left];
        for (i, &b) in self.left_budgets.iter().enumerate() {
            budgets[left_perm[i]] = b;
        }
        let scatter = |m: &Matrix<T>, perm: &[usize]| {
            let mut inv = vec![0; perm.len()];
            for (i, &p) in perm.iter().enumerate() {
                inv[p] = i;
            }
            m.gather_rows(&inv)
        };
        let remap = |c: &Vec<usize>, perm: &[usize]| {
            let mut out = vec![0; c.len()];
            for (i, &p) in perm.iter().enumerate() {
                out[p] = c[i];
            }
            out
        };
        Self {
            num_left: self.num_left,
            num_right: self.num_right,
            edges,
            left_budgets: budgets,
            left_features: self.left_features.as_ref().map(|m| scatter(m, left_perm)),
            right_features: self.right_features.as_ref().map(|m| scatter(m, right_perm)),
            cluster_of_left: self.cluster_of_left.as_ref().map(|c| remap(c, left_perm)),
            cluster_of_right: self.cluster_of_right.as_ref().map(|c| remap(c, right_perm)),
        }
    }
}

pub(crate) fn groups_of(parents: Option<&[usize]>, n: usize) -> Vec<Vec<usize>> {
    match parents {
        None => (0..n).map(|i| vec![i]).collect(),
        Some(p) => {
            let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (i, &c) in p.iter().enumerate() {
                map.entry(c).or_default().push(i);
            }
            map.into_values().collect()
        }
    }
}

/// Weighted clique expansion: `(u, v)` with `u < v` weighted by the number
/// of hyperedges containing both.
#[derive(Clone, Debug, PartialEq)]
pub struct CliqueExpansion {
    pub num_nodes: usize,
    pub weighted_edges: BTreeMap<(usize, usize), f64>,
}

impl CliqueExpansion {
    /// Clique expansion of a bipartite graph, weighting pairs by shared
    /// right neighbors.
    pub fn from_bipartite<T: Scalar>(b: &BipartiteGraph<T>) -> Self {
        let mut weighted_edges = BTreeMap::new();
        for nbrs in b.right_neighbors() {
            for (i, &u) in nbrs.iter().enumerate() {
                for &v in &nbrs[i + 1..] {
                    *weighted_edges.entry((u, v)).or_insert(0.0) += 1.0;
                }
            }
        }
        Self { num_nodes: b.num_left(), weighted_edges }
    }

    pub fn weight(&self, u: usize, v: usize) -> Option<f64> {
        let key = if u < v { (u, v) } else { (v, u) };
        self.weighted_edges.get(&key).copied()
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(u, v) in self.weighted_edges.keys() {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj
    }

    /// Weighted degrees.
    pub fn degrees(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.num_nodes];
        for (&(u, v), &w) in &self.weighted_edges {
            d[u] += w;
            d[v] += w;
        }
        d
    }
}

pub fn star_expand<T: Scalar>(h: &Hypergraph<T>) -> BipartiteGraph<T> {
    let edges: Vec<(usize, usize)> = h
        .hyperedges()
        .iter()
        .enumerate()
        .flat_map(|(e, he)| he.iter().map(move |&v| (v, e)))
        .collect();
    BipartiteGraph::new(
        h.num_nodes(),
        h.num_hyperedges(),
        edges,
        vec![1; h.num_nodes()],
        h.node_features().cloned(),
        h.hyperedge_features().cloned(),
    )
    .expect("a valid hypergraph has a valid star expansion")
}

pub fn clique_expand<T: Scalar>(h: &Hypergraph<T>) -> CliqueExpansion {
    let mut weighted_edges = BTreeMap::new();
    for he in h.hyperedges() {
        for (i, &u) in he.iter().enumerate() {
            for &v in &he[i + 1..] {
                *weighted_edges.entry((u, v)).or_insert(0.0) += 1.0;
            }
        }
    }
    CliqueExpansion { num_nodes: h.num_nodes(), weighted_edges }
}

/// Turns every right node into the hyperedge of its left neighbors.
pub fn collapse_bipartite<T: Scalar>(b: &BipartiteGraph<T>) -> Result<Hypergraph<T>> {
    let hyperedges = b.right_neighbors();
    if let Some(i) = hyperedges.iter().position(Vec::is_empty) {
        return Err(Error::EmptyHyperedge(i));
    }
    Hypergraph::with_features(
        b.num_left(),
        hyperedges,
        b.left_features().cloned(),
        b.right_features().cloned(),
    )
}

/// One line of the hypergraph JSONL format.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct HypergraphRecord {
    pub n: usize,
    pub edges: Vec<Vec<usize>>,
    pub node_feat: Option<Vec<Vec<f64>>>,
    pub edge_feat: Option<Vec<Vec<f64>>>,
}

impl<T: Scalar> From<&Hypergraph<T>> for HypergraphRecord {
    fn from(h: &Hypergraph<T>) -> Self {
        let rows = |m: &Matrix<T>| m.to_rows().into_iter().map(|r| r.into_iter().map(T::as_f64).collect()).collect();
        HypergraphRecord {
            n: h.num_nodes(),
            edges: h.hyperedges().to_vec(),
            node_feat: h.node_features().map(rows),
            edge_feat: h.hyperedge_features().map(rows),
        }
    }
}

impl HypergraphRecord {
    pub fn to_hypergraph<T: Scalar>(&self) -> Result<Hypergraph<T>> {
        let mat = |rows: &Vec<Vec<f64>>, what: &'static str| -> Result<Matrix<T>> {
            let cols = rows.first().map_or(0, Vec::len);
            let conv: Vec<Vec<T>> = rows.iter().map(|r| r.iter().map(|&x| T::of(x)).collect()).collect();
            Matrix::from_rows(&conv, cols).ok_or_else(|| Error::Parse(format!("ragged {what}")))
        };
        let nf = self.node_feat.as_ref().map(|r| mat(r, "node_feat")).transpose()?;
        let ef = self.edge_feat.as_ref().map(|r| mat(r, "edge_feat")).transpose()?;
        Hypergraph::with_features(self.n, self.edges.clone(), nf, ef)
    }
}

/// Serializes one hypergraph per line.
pub fn write_jsonl<T: Scalar, W: std::io::Write>(mut out: W, graphs: &[Hypergraph<T>]) -> Result<()> {
    for g in graphs {
        serde_json::to_writer(&mut out, &HypergraphRecord::from(g))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Parses one hypergraph per non-blank line.
pub fn read_jsonl<T: Scalar, R: std::io::BufRead>(input: R) -> Result<Vec<Hypergraph<T>>> {
    let mut graphs = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: HypergraphRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
        graphs.push(rec.to_hypergraph()?);
    }
    Ok(graphs)
}

#[cfg(test)]
mod tests {
    use super::*;

    type H = Hypergraph<f64>;

    #[test]
    fn star_expand_single_hyperedge() {
        let h = H::new(3, vec![vec![2, 0, 1]]).unwrap();
        let b = star_expand(&h);
        assert_eq!((b.num_left(), b.num_right()), (3, 1));
        assert_eq!(b.edges(), &[(0, 0), (1, 0), (2, 0)]);
        assert_eq!(b.left_budgets(), &[1, 1, 1]);
    }

    #[test]
    fn star_expand_without_hyperedges() {
        let b = star_expand(&H::new(4, vec![]).unwrap());
        assert_eq!((b.num_left(), b.num_right(), b.num_edges()), (4, 0, 0));
    }

    #[test]
    fn star_expansion_right_nodes_are_hyperedges() {
        // Two triangles sharing a node plus a pair.
        let h = H::new(5, vec![vec![0, 1, 2], vec![2, 3, 4], vec![0, 4]]).unwrap();
        let b = star_expand(&h);
        assert_eq!(b.right_neighbors(), h.hyperedges().to_vec());
        assert_eq!(b.left_degrees(), h.node_degrees());
    }

    #[test]
    fn clique_expansion_weights_count_shared_hyperedges() {
        let h = H::new(4, vec![vec![0, 1, 2], vec![3]]).unwrap();
        let c = clique_expand(&h);
        assert_eq!(c.weighted_edges.len(), 3);
        assert!(c.weighted_edges.values().all(|&w| w == 1.0));
        assert_eq!(c.weight(3, 0), None);

        // Multi-hyperedge weights can only come from distinct hyperedges.
        let h = H::new(3, vec![vec![0, 1], vec![0, 1, 2]]).unwrap();
        assert_eq!(clique_expand(&h).weight(0, 1), Some(2.0));
    }

    #[test]
    fn duplicate_hyperedges_rejected() {
        assert_eq!(H::new(2, vec![vec![0, 1], vec![1, 0]]), Err(Error::DuplicateHyperedge(0, 1)));
        let h = H::dedup_from(2, vec![vec![0, 1], vec![1, 0]]).unwrap();
        assert_eq!(h.num_hyperedges(), 1);
    }

    #[test]
    fn invalid_hyperedges_rejected() {
        assert_eq!(H::new(2, vec![vec![]]), Err(Error::EmptyHyperedge(0)));
        assert_eq!(H::new(2, vec![vec![0, 0]]), Err(Error::RepeatedNode(0)));
        assert_eq!(H::new(2, vec![vec![2]]), Err(Error::NodeOutOfRange { node: 2, num_nodes: 2 }));
    }

    #[test]
    fn collapse_simple() {
        let b = BipartiteGraph::<f64>::new(2, 1, vec![(1, 0), (0, 0)], vec![1, 1], None, None).unwrap();
        let h = collapse_bipartite(&b).unwrap();
        assert_eq!(h.hyperedges(), &[vec![0, 1]]);
    }

    #[test]
    fn collapse_rejects_empty_right_node() {
        let b = BipartiteGraph::<f64>::new(2, 2, vec![(0, 0), (1, 0)], vec![1, 1], None, None).unwrap();
        assert_eq!(collapse_bipartite(&b), Err(Error::EmptyHyperedge(1)));
    }

    #[test]
    fn jsonl_round_trip_with_features() {
        let nf = Matrix::from_vec(3, 2, vec![0.5, -1.0, 2.0, 0.0, 1e-3, 7.25]);
        let h = H::with_features(3, vec![vec![0, 1], vec![1, 2]], Some(nf), None).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&mut buf, std::slice::from_ref(&h)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"edge_feat\":null"));
        let back: Vec<H> = read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, vec![h]);
    }

    #[test]
    fn bipartite_rejects_bad_input() {
        assert!(matches!(
            BipartiteGraph::<f64>::new(1, 1, vec![(0, 0), (0, 0)], vec![1], None, None),
            Err(Error::DuplicateEdge(0, 0))
        ));
        assert!(matches!(
            BipartiteGraph::<f64>::new(1, 1, vec![(0, 1)], vec![1], None, None),
            Err(Error::EdgeOutOfRange { .. })
        ));
        assert!(matches!(
            BipartiteGraph::<f64>::new(1, 0, vec![], vec![0], None, None),
            Err(Error::ZeroBudget(0))
        ));
    }
}
