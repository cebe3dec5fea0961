//! Randomized budgeted coarsening of featured hypergraphs.
//!
//! Each step contracts a set of disjoint clique-expansion edges on the left
//! (node) side, chosen greedily by local variation cost with random
//! rejection, then merges right (hyperedge) nodes whose neighborhoods became
//! identical. Budgets are summed and features averaged with budget weights.
//! A finished sequence is relabeled so that every level expands into the
//! next finer one with children stored contiguously per parent, which lets
//! expansion and refinement reproduce each finer level exactly.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};
use crate::expansion::{expand, refine, ExpansionVectors, RefinementDecision, MAX_RIGHT_FACTOR};
use crate::hypergraph::{star_expand, BipartiteGraph, CliqueExpansion, Hypergraph};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct CoarseningParams {
    pub rho_min: f64,
    pub rho_max: f64,
    /// Probability of skipping a candidate contraction.
    pub lambda: f64,
    pub preserve_k: usize,
    /// Below this many left nodes the reduction fraction is fixed to `rho_max`.
    pub small_graph_cutoff: usize,
}

impl Default for CoarseningParams {
    fn default() -> Self {
        Self { rho_min: 0.1, rho_max: 0.3, lambda: 0.3, preserve_k: 8, small_graph_cutoff: 16 }
    }
}

impl CoarseningParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho_min > 0.0 && self.rho_min <= self.rho_max && self.rho_max < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "reduction fractions must satisfy 0 < rho_min <= rho_max < 1, got [{}, {}]",
                self.rho_min, self.rho_max
            )));
        }
        if !(0.0..1.0).contains(&self.lambda) {
            return Err(Error::InvalidParameter(format!("lambda must lie in [0, 1), got {}", self.lambda)));
        }
        if self.preserve_k == 0 {
            return Err(Error::InvalidParameter("preserve_k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Local variation cost of edge contractions on a weighted graph, using the
/// `preserve_k` lowest eigenvectors of the combinatorial Laplacian.
pub struct LocalVariation {
    /// Rows: nodes; columns: eigenvectors scaled by `lambda^{-1/2}` (zero
    /// for null eigenvalues).
    basis: DMatrix<f64>,
    degrees: Vec<f64>,
}

impl LocalVariation {
    pub fn new(c: &CliqueExpansion, preserve_k: usize) -> Self {
        let n = c.num_nodes;
        let degrees = c.degrees();
        let mut lap = DMatrix::zeros(n, n);
        for (i, &d) in degrees.iter().enumerate() {
            lap[(i, i)] = d;
        }
        for (&(u, v), &w) in &c.weighted_edges {
            lap[(u, v)] -= w;
            lap[(v, u)] -= w;
        }
        let k = preserve_k.min(n);
        let mut basis = DMatrix::zeros(n, k);
        if n > 0 {
            let eig = SymmetricEigen::new(lap);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            for (col, &idx) in order.iter().take(k).enumerate() {
                let lambda = eig.eigenvalues[idx];
                let scale = if lambda < 1e-10 { 0.0 } else { lambda.powf(-0.5) };
                for row in 0..n {
                    basis[(row, col)] = eig.eigenvectors[(row, idx)] * scale;
                }
            }
        }
        Self { basis, degrees }
    }

    /// Frobenius norm of `Bᵀ L_C B`, where `B` is the contracted pair's basis
    /// rows projected off the constant vector and `L_C` the pair's local
    /// Laplacian.
    pub fn cost(&self, c: &CliqueExpansion, u: usize, v: usize) -> Result<f64> {
        let w = c.weight(u, v).ok_or(Error::NotAdjacent(u, v))?;
        let k = self.basis.ncols();
        let du = 2.0 * self.degrees[u] - w;
        let dv = 2.0 * self.degrees[v] - w;
        // Projection off the constant vector of a pair: rows become ±half
        // the difference.
        let diff: Vec<f64> = (0..k).map(|j| 0.5 * (self.basis[(u, j)] - self.basis[(v, j)])).collect();
        // B = [diff; -diff], so Bᵀ L B = (du + dv + 2w) diff diffᵀ.
        let s = du + dv + 2.0 * w;
        let norm_sq: f64 = diff.iter().map(|x| x * x).sum();
        Ok((s * norm_sq).abs())
    }
}

/// Local variation cost of contracting the edge `(u, v)` of `c`.
pub fn local_variation_cost(c: &CliqueExpansion, contraction: (usize, usize), preserve_k: usize) -> Result<f64> {
    let (u, v) = contraction;
    if c.weight(u, v).is_none() {
        return Err(Error::NotAdjacent(u, v));
    }
    LocalVariation::new(c, preserve_k).cost(c, u, v)
}

/// Result of merging nodes: the coarser graph and the parent of every finer node.
#[derive(Clone, Debug)]
pub(crate) struct Merge<T> {
    pub graph: BipartiteGraph<T>,
    pub right_budgets: Vec<usize>,
    pub left_parent: Vec<usize>,
    pub right_parent: Vec<usize>,
}

fn weighted_mean_rows<T: Scalar>(m: &Matrix<T>, clusters: &[Vec<usize>], weights: &[usize]) -> Matrix<T> {
    let mut out = Matrix::zeros(clusters.len(), m.cols());
    for (ci, members) in clusters.iter().enumerate() {
        let total: usize = members.iter().map(|&i| weights[i]).sum();
        let total = T::of(total as f64);
        for &i in members {
            let w = T::of(weights[i] as f64);
            for c in 0..m.cols() {
                out[(ci, c)] += w * m[(i, c)];
            }
        }
        for c in 0..m.cols() {
            out[(ci, c)] /= total;
        }
    }
    out
}

/// Cluster lists from a parent map, clusters numbered by first member.
fn clusters_from_labels(labels: &[usize]) -> (Vec<Vec<usize>>, Vec<usize>) {
    let mut id: BTreeMap<usize, usize> = BTreeMap::new();
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut parent = Vec::with_capacity(labels.len());
    for (i, &l) in labels.iter().enumerate() {
        let c = *id.entry(l).or_insert_with(|| {
            clusters.push(Vec::new());
            clusters.len() - 1
        });
        clusters[c].push(i);
        parent.push(c);
    }
    (clusters, parent)
}

fn check_parts<T: Scalar>(b: &BipartiteGraph<T>, parts: &[Vec<usize>]) -> Result<()> {
    let mut seen = vec![false; b.num_left()];
    for part in parts {
        for &v in part {
            if v >= b.num_left() {
                return Err(Error::NodeOutOfRange { node: v, num_nodes: b.num_left() });
            }
            if std::mem::replace(&mut seen[v], true) {
                return Err(Error::OverlappingParts(v));
            }
        }
    }
    let clique = CliqueExpansion::from_bipartite(b);
    let adj = clique.neighbors();
    for (pi, part) in parts.iter().enumerate() {
        if part.len() <= 1 {
            continue;
        }
        let inside: std::collections::HashSet<usize> = part.iter().copied().collect();
        let mut reached = std::collections::HashSet::from([part[0]]);
        let mut stack = vec![part[0]];
        while let Some(x) = stack.pop() {
            for &y in &adj[x] {
                if inside.contains(&y) && reached.insert(y) {
                    stack.push(y);
                }
            }
        }
        if reached.len() != inside.len() {
            return Err(Error::DisconnectedPart(pi));
        }
    }
    Ok(())
}

/// Merges left nodes by label, then merges right nodes with identical
/// neighborhoods. No connectivity checks.
pub(crate) fn contract<T: Scalar>(b: &BipartiteGraph<T>, right_budgets: &[usize], left_label: &[usize]) -> Merge<T> {
    let (left_clusters, left_parent) = clusters_from_labels(left_label);
    let budgets: Vec<usize> = left_clusters.iter().map(|c| c.iter().map(|&i| b.left_budgets()[i]).sum()).collect();
    let lf = b.left_features().map(|m| weighted_mean_rows(m, &left_clusters, b.left_budgets()));
    let mut nbhd: Vec<Vec<usize>> = vec![Vec::new(); b.num_right()];
    for &(l, r) in b.edges() {
        nbhd[r].push(left_parent[l]);
    }
    for n in &mut nbhd {
        n.sort_unstable();
        n.dedup();
    }
    let edges: Vec<(usize, usize)> = nbhd.iter().enumerate().flat_map(|(r, n)| n.iter().map(move |&l| (l, r))).collect();
    let intermediate = BipartiteGraph::new(left_clusters.len(), b.num_right(), edges, budgets, lf, b.right_features().cloned())
        .expect("merging preserves validity");
    let (graph, rb, right_parent) = dedup_right_weighted(&intermediate, right_budgets);
    Merge { graph, right_budgets: rb, left_parent, right_parent }
}

/// Merges each part into one left node; nodes outside every part are kept.
/// Budgets are summed and features averaged with budget weights.
pub fn merge_left<T: Scalar>(b: &BipartiteGraph<T>, parts: &[Vec<usize>]) -> Result<BipartiteGraph<T>> {
    check_parts(b, parts)?;
    let mut label: Vec<usize> = (0..b.num_left()).collect();
    for part in parts {
        if let Some(&first) = part.iter().min() {
            for &v in part {
                label[v] = first;
            }
        }
    }
    let (clusters, parent) = clusters_from_labels(&label);
    let budgets: Vec<usize> = clusters.iter().map(|c| c.iter().map(|&i| b.left_budgets()[i]).sum()).collect();
    let lf = b.left_features().map(|m| weighted_mean_rows(m, &clusters, b.left_budgets()));
    let mut edges: Vec<(usize, usize)> = b.edges().iter().map(|&(l, r)| (parent[l], r)).collect();
    edges.sort_unstable();
    edges.dedup();
    BipartiteGraph::new(clusters.len(), b.num_right(), edges, budgets, lf, b.right_features().cloned())
}

/// Merges right nodes with identical neighborhoods, assuming unit right
/// budgets.
pub fn dedup_right<T: Scalar>(b: &BipartiteGraph<T>) -> BipartiteGraph<T> {
    dedup_right_weighted(b, &vec![1; b.num_right()]).0
}

/// Merges right nodes with identical neighborhoods. Returns the merged graph,
/// the summed right budgets and the parent of every input right node.
pub fn dedup_right_weighted<T: Scalar>(
    b: &BipartiteGraph<T>,
    right_budgets: &[usize],
) -> (BipartiteGraph<T>, Vec<usize>, Vec<usize>) {
    let nbhd = b.right_neighbors();
    let mut key_id: HashMap<&[usize], usize> = HashMap::new();
    let labels: Vec<usize> = nbhd
        .iter()
        .enumerate()
        .map(|(r, n)| *key_id.entry(n.as_slice()).or_insert(r))
        .collect();
    let (clusters, parent) = clusters_from_labels(&labels);
    let rb: Vec<usize> = clusters.iter().map(|c| c.iter().map(|&i| right_budgets[i]).sum()).collect();
    let rf = b.right_features().map(|m| weighted_mean_rows(m, &clusters, right_budgets));
    let mut edges: Vec<(usize, usize)> = b.edges().iter().map(|&(l, r)| (l, parent[r])).collect();
    edges.sort_unstable();
    edges.dedup();
    let g = BipartiteGraph::new(b.num_left(), clusters.len(), edges, b.left_budgets().to_vec(), b.left_features().cloned(), rf)
        .expect("deduplication preserves validity");
    (g, rb, parent)
}

/// One level of a coarsening sequence together with the supervision that
/// turns it back into the next finer level.
#[derive(Clone, Debug, PartialEq)]
pub struct CoarseningLevel<T> {
    pub bipartite: BipartiteGraph<T>,
    /// Cluster sizes mapping this level onto the next finer one (all ones
    /// for the finest level).
    pub expansion: ExpansionVectors,
    /// Refinement of `expand(bipartite, expansion)` that yields the next
    /// finer level; `None` for the finest level.
    pub refinement: Option<RefinementDecision<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoarseningSequence<T> {
    /// Finest first; the last level has a single left node.
    pub levels: Vec<CoarseningLevel<T>>,
    pub source_graph_id: usize,
    /// Position in level 0 of every input node.
    pub node_order: Vec<usize>,
}

impl<T: Scalar> CoarseningSequence<T> {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Index of the coarsest level.
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    /// Expands and refines level `l >= 1` with its stored targets.
    pub fn reconstruct_finer(&self, l: usize) -> Result<BipartiteGraph<T>> {
        let level = &self.levels[l];
        let refinement = level
            .refinement
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter(format!("level {l} has no finer level")))?;
        let expanded = expand(&level.bipartite, &level.expansion)?;
        Ok(refine(&expanded, refinement)?.without_clusters())
    }

    /// `1 - n_l / n_{l-1}` in left node counts; zero for the finest level.
    pub fn reduction_fraction(&self, l: usize) -> f64 {
        if l == 0 {
            return 0.0;
        }
        let coarse = self.levels[l].bipartite.num_left() as f64;
        let fine = self.levels[l - 1].bipartite.num_left() as f64;
        1.0 - coarse / fine
    }
}

struct RawLevel<T> {
    graph: BipartiteGraph<T>,
    /// Parent in the next coarser level.
    left_parent: Vec<usize>,
    right_parent: Vec<usize>,
}

/// Picks the contractions for one coarsening step. Returns left labels
/// (label of `v` is the smaller endpoint of its contraction, else `v`).
fn select_contractions<T: Scalar, R: Rng + ?Sized>(
    g: &BipartiteGraph<T>,
    params: &CoarseningParams,
    rng: &mut R,
) -> Vec<usize> {
    let n = g.num_left();
    let red_frac = if n < params.small_graph_cutoff || params.rho_min == params.rho_max {
        params.rho_max
    } else {
        rng.random_range(params.rho_min..=params.rho_max)
    };
    let clique = CliqueExpansion::from_bipartite(g);
    let mut candidates: Vec<(f64, usize, usize)> = if clique.weighted_edges.is_empty() {
        // No edges left: pair up remaining components in index order.
        (0..n / 2).map(|i| (0.0, 2 * i, 2 * i + 1)).collect()
    } else {
        let lv = LocalVariation::new(&clique, params.preserve_k);
        clique
            .weighted_edges
            .keys()
            .map(|&(u, v)| (lv.cost(&clique, u, v).expect("edge of the clique expansion"), u, v))
            .collect()
    };
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let left_adj = g.left_neighbors();
    let mut keys: Vec<Vec<usize>> = g.right_neighbors();
    let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
    for k in &keys {
        *counts.entry(k.clone()).or_insert(0) += 1;
    }
    let mut label: Vec<usize> = (0..n).collect();
    let mut matched = vec![false; n];
    let mut accepted = 0usize;

    let mut try_accept = |u: usize, v: usize, label: &mut Vec<usize>, matched: &mut Vec<bool>| -> bool {
        if matched[u] || matched[v] {
            return false;
        }
        let mut affected: Vec<usize> = left_adj[u].iter().chain(&left_adj[v]).copied().collect();
        affected.sort_unstable();
        affected.dedup();
        let mut new_keys = Vec::with_capacity(affected.len());
        for &r in &affected {
            let mut k: Vec<usize> = keys[r].iter().map(|&x| if x == v { u } else { x }).collect();
            k.sort_unstable();
            k.dedup();
            new_keys.push(k);
        }
        for &r in &affected {
            *counts.get_mut(&keys[r]).expect("tracked key") -= 1;
        }
        for k in &new_keys {
            *counts.entry(k.clone()).or_insert(0) += 1;
        }
        let ok = new_keys.iter().all(|k| counts[k] <= MAX_RIGHT_FACTOR);
        if ok {
            for (&r, k) in affected.iter().zip(new_keys) {
                keys[r] = k;
            }
            matched[u] = true;
            matched[v] = true;
            label[v] = u;
        } else {
            for k in &new_keys {
                *counts.get_mut(k).expect("tracked key") -= 1;
            }
            for &r in &affected {
                *counts.get_mut(&keys[r]).expect("tracked key") += 1;
            }
        }
        ok
    };

    for &(_, u, v) in &candidates {
        if rng.random::<f64>() > params.lambda && try_accept(u, v, &mut label, &mut matched) {
            accepted += 1;
        }
        if accepted as f64 > red_frac * n as f64 {
            break;
        }
    }
    if accepted == 0 {
        // Every candidate was rejected: force the cheapest legal one.
        for &(_, u, v) in &candidates {
            if try_accept(u, v, &mut label, &mut matched) {
                break;
            }
        }
    }
    label
}

/// Samples a coarsening sequence ending in a single left node.
pub fn sample_coarsening_sequence<T: Scalar, R: Rng + ?Sized>(
    h: &Hypergraph<T>,
    params: &CoarseningParams,
    rng: &mut R,
) -> Result<CoarseningSequence<T>> {
    sample_coarsening_sequence_with_id(h, params, 0, rng)
}

pub fn sample_coarsening_sequence_with_id<T: Scalar, R: Rng + ?Sized>(
    h: &Hypergraph<T>,
    params: &CoarseningParams,
    source_graph_id: usize,
    rng: &mut R,
) -> Result<CoarseningSequence<T>> {
    params.validate()?;
    if h.num_nodes() == 0 {
        return Err(Error::Empty("hypergraph without nodes"));
    }
    let mut current = star_expand(h);
    let mut right_budgets = vec![1; current.num_right()];
    let mut raw: Vec<RawLevel<T>> = Vec::new();
    while current.num_left() > 1 {
        let label = select_contractions(&current, params, rng);
        let merge = contract(&current, &right_budgets, &label);
        debug_assert!(merge.graph.num_left() < current.num_left());
        raw.push(RawLevel { graph: current, left_parent: merge.left_parent, right_parent: merge.right_parent });
        current = merge.graph;
        right_budgets = merge.right_budgets;
    }
    if !raw.is_empty() {
        let zero = |m: Option<&Matrix<T>>| m.map(|m| Matrix::zeros(m.rows(), m.cols()));
        let lf = zero(current.left_features());
        let rf = zero(current.right_features());
        current = BipartiteGraph::new(
            current.num_left(),
            current.num_right(),
            current.edges().to_vec(),
            current.left_budgets().to_vec(),
            lf,
            rf,
        )?;
    }
    raw.push(RawLevel { graph: current, left_parent: Vec::new(), right_parent: Vec::new() });
    Ok(relabel_and_annotate(raw, source_graph_id))
}

fn child_order(parent: &[usize], parent_pos: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..parent.len()).collect();
    order.sort_by_key(|&i| (parent_pos[parent[i]], i));
    let mut pos = vec![0; parent.len()];
    for (k, &i) in order.iter().enumerate() {
        pos[i] = k;
    }
    pos
}

fn relabel_and_annotate<T: Scalar>(raw: Vec<RawLevel<T>>, source_graph_id: usize) -> CoarseningSequence<T> {
    let depth = raw.len() - 1;
    let mut left_pos: Vec<Vec<usize>> = vec![Vec::new(); raw.len()];
    let mut right_pos: Vec<Vec<usize>> = vec![Vec::new(); raw.len()];
    left_pos[depth] = (0..raw[depth].graph.num_left()).collect();
    right_pos[depth] = (0..raw[depth].graph.num_right()).collect();
    for l in (0..depth).rev() {
        left_pos[l] = child_order(&raw[l].left_parent, &left_pos[l + 1]);
        right_pos[l] = child_order(&raw[l].right_parent, &right_pos[l + 1]);
    }
    let graphs: Vec<BipartiteGraph<T>> =
        raw.iter().enumerate().map(|(l, r)| r.graph.permuted(&left_pos[l], &right_pos[l])).collect();

    let mut levels = Vec::with_capacity(graphs.len());
    for l in 0..graphs.len() {
        let g = &graphs[l];
        if l == 0 {
            levels.push(CoarseningLevel {
                bipartite: g.clone(),
                expansion: ExpansionVectors::ones(g.num_left(), g.num_right()),
                refinement: None,
            });
            continue;
        }
        let mut v = ExpansionVectors { left: vec![0; g.num_left()], right: vec![0; g.num_right()] };
        for &p in &raw[l - 1].left_parent {
            v.left[left_pos[l][p]] += 1;
        }
        for &p in &raw[l - 1].right_parent {
            v.right[right_pos[l][p]] += 1;
        }
        let finer = &graphs[l - 1];
        let expanded = expand(g, &v).expect("coarsening yields valid expansion factors");
        let refinement = refinement_targets(&expanded, finer);
        levels.push(CoarseningLevel { bipartite: g.clone(), expansion: v, refinement: Some(refinement) });
    }
    CoarseningSequence { levels, source_graph_id, node_order: left_pos[0].clone() }
}

/// Decision that refines `expanded` into `finer`; both must share node sets.
pub fn refinement_targets<T: Scalar>(expanded: &BipartiteGraph<T>, finer: &BipartiteGraph<T>) -> RefinementDecision<T> {
    let edge_keep = expanded.edges().iter().map(|&(l, r)| finer.has_edge(l, r)).collect();
    let budget_split = expanded
        .left_budgets()
        .iter()
        .zip(finer.left_budgets())
        .map(|(&parent, &child)| T::of(child as f64) / T::of(parent as f64))
        .collect();
    RefinementDecision {
        edge_keep,
        budget_split,
        left_features: finer.left_features().cloned(),
        right_features: finer.right_features().cloned(),
    }
}

/// A level handed out by the cache: the sequence it belongs to and its index.
#[derive(Clone, Debug)]
pub struct CachedLevel<T> {
    pub sequence: Arc<CoarseningSequence<T>>,
    pub level: usize,
}

impl<T> CachedLevel<T> {
    pub fn level(&self) -> &CoarseningLevel<T> {
        &self.sequence.levels[self.level]
    }
}

#[derive(Default)]
struct Slot<T> {
    sequence: Option<Arc<CoarseningSequence<T>>>,
    remaining: Vec<usize>,
    generations: usize,
}

/// Per-graph queues of not-yet-consumed coarsening levels.
///
/// Each graph has its own lock, so takes on different graphs never contend.
pub struct CoarseningCache<T> {
    graphs: Vec<Hypergraph<T>>,
    params: CoarseningParams,
    slots: Vec<Mutex<Slot<T>>>,
}

impl<T: Scalar> CoarseningCache<T> {
    pub fn new(graphs: Vec<Hypergraph<T>>, params: CoarseningParams) -> Result<Self> {
        params.validate()?;
        let slots = graphs.iter().map(|_| Mutex::new(Slot { sequence: None, remaining: Vec::new(), generations: 0 })).collect();
        Ok(Self { graphs, params, slots })
    }

    pub fn num_graphs(&self) -> usize {
        self.graphs.len()
    }

    pub fn graph(&self, id: usize) -> Option<&Hypergraph<T>> {
        self.graphs.get(id)
    }

    /// Number of sequences generated so far for a graph.
    pub fn generations(&self, id: usize) -> Result<usize> {
        let slot = self.slots.get(id).ok_or(Error::UnknownGraph(id))?;
        Ok(slot.lock().expect("cache lock").generations)
    }

    /// Removes and returns a uniformly random cached level of graph `id`,
    /// sampling a fresh sequence first when none is left.
    pub fn take<R: Rng + ?Sized>(&self, id: usize, rng: &mut R) -> Result<CachedLevel<T>> {
        let slot = self.slots.get(id).ok_or(Error::UnknownGraph(id))?;
        let mut slot = slot.lock().expect("cache lock");
        if slot.remaining.is_empty() {
            let seq = sample_coarsening_sequence_with_id(&self.graphs[id], &self.params, id, rng)?;
            slot.remaining = (0..seq.len()).collect();
            slot.sequence = Some(Arc::new(seq));
            slot.generations += 1;
        }
        let pick = rng.random_range(0..slot.remaining.len());
        let level = slot.remaining.swap_remove(pick);
        let sequence = Arc::clone(slot.sequence.as_ref().expect("sequence present"));
        Ok(CachedLevel { sequence, level })
    }
}

/// Cache-level free function mirroring [`CoarseningCache::take`].
pub fn cache_take<T: Scalar, R: Rng + ?Sized>(cache: &CoarseningCache<T>, graph_id: usize, rng: &mut R) -> Result<CachedLevel<T>> {
    cache.take(graph_id, rng)
}
