//! Clone-and-rewire expansion, perturbed expansion, and refinement with
//! integer budget splitting.

use std::collections::{BTreeSet, VecDeque};

use rand::Rng;

use crate::error::{Error, Result};
use crate::hypergraph::BipartiteGraph;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Largest number of children a left node may expand into.
pub const MAX_LEFT_FACTOR: usize = 2;
/// Largest number of children a right node may expand into.
pub const MAX_RIGHT_FACTOR: usize = 3;

/// Per-node cluster sizes for one expansion step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExpansionVectors {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

impl ExpansionVectors {
    pub fn ones(num_left: usize, num_right: usize) -> Self {
        Self { left: vec![1; num_left], right: vec![1; num_right] }
    }

    pub fn validate<T: Scalar>(&self, b: &BipartiteGraph<T>) -> Result<()> {
        if self.left.len() != b.num_left() {
            return Err(Error::DimensionMismatch {
                what: "left expansion vector",
                expected: b.num_left(),
                actual: self.left.len(),
            });
        }
        if self.right.len() != b.num_right() {
            return Err(Error::DimensionMismatch {
                what: "right expansion vector",
                expected: b.num_right(),
                actual: self.right.len(),
            });
        }
        let check = |v: &[usize], max: usize| {
            v.iter().enumerate().find(|(_, &f)| f == 0 || f > max).map(|(index, &factor)| Error::InvalidExpansion {
                index,
                factor,
                max,
            })
        };
        if let Some(e) = check(&self.left, MAX_LEFT_FACTOR) {
            return Err(e);
        }
        if let Some(e) = check(&self.right, MAX_RIGHT_FACTOR) {
            return Err(e);
        }
        Ok(())
    }

    pub fn expanded_left(&self) -> usize {
        self.left.iter().sum()
    }

    pub fn expanded_right(&self) -> usize {
        self.right.iter().sum()
    }

    /// Parent index of every child, children listed contiguously per parent.
    pub fn left_parents(&self) -> Vec<usize> {
        parents(&self.left)
    }

    pub fn right_parents(&self) -> Vec<usize> {
        parents(&self.right)
    }
}

fn parents(sizes: &[usize]) -> Vec<usize> {
    sizes.iter().enumerate().flat_map(|(p, &s)| std::iter::repeat_n(p, s)).collect()
}

fn offsets(sizes: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(sizes.len() + 1);
    let mut acc = 0;
    out.push(0);
    for &s in sizes {
        acc += s;
        out.push(acc);
    }
    out
}

/// Edge removals, budget split fractions and replacement features applied
/// to an expanded graph.
#[derive(Clone, Debug, PartialEq)]
pub struct RefinementDecision<T> {
    /// One flag per expanded edge, in canonical edge order.
    pub edge_keep: Vec<bool>,
    /// One fraction per expanded left node; sums to 1 within each sibling group.
    pub budget_split: Vec<T>,
    pub left_features: Option<Matrix<T>>,
    pub right_features: Option<Matrix<T>>,
}

impl<T: Scalar> RefinementDecision<T> {
    /// Keeps every edge and the current features, splits evenly.
    pub fn identity(b: &BipartiteGraph<T>) -> Self {
        let mut split = vec![T::zero(); b.num_left()];
        for g in b.left_groups() {
            let share = T::one() / T::of(g.len() as f64);
            for &i in &g {
                split[i] = share;
            }
        }
        Self {
            edge_keep: vec![true; b.num_edges()],
            budget_split: split,
            left_features: b.left_features().cloned(),
            right_features: b.right_features().cloned(),
        }
    }
}

/// Clone-and-rewire: every node is replicated `v` times, children inherit
/// budget, features and all incident edges of their parent.
pub fn expand<T: Scalar>(b: &BipartiteGraph<T>, v: &ExpansionVectors) -> Result<BipartiteGraph<T>> {
    v.validate(b)?;
    let lo = offsets(&v.left);
    let ro = offsets(&v.right);
    let mut edges = Vec::new();
    for &(p, q) in b.edges() {
        for i in lo[p]..lo[p + 1] {
            for j in ro[q]..ro[q + 1] {
                edges.push((i, j));
            }
        }
    }
    let left_parents = v.left_parents();
    let right_parents = v.right_parents();
    let budgets = left_parents.iter().map(|&p| b.left_budgets()[p]).collect();
    let lf = b.left_features().map(|m| m.gather_rows(&left_parents));
    let rf = b.right_features().map(|m| m.gather_rows(&right_parents));
    let mut out = BipartiteGraph::new(left_parents.len(), right_parents.len(), edges, budgets, lf, rf)?;
    out.set_clusters(Some(left_parents), Some(right_parents));
    Ok(out)
}

/// Graph distances from `source` (a node in the left-then-right ordering)
/// up to `max_depth`; unreachable nodes stay `usize::MAX`.
pub(crate) fn bfs_distances(
    left_adj: &[Vec<usize>],
    right_adj: &[Vec<usize>],
    source_left: usize,
    max_depth: usize,
) -> (Vec<usize>, Vec<usize>) {
    let mut dl = vec![usize::MAX; left_adj.len()];
    let mut dr = vec![usize::MAX; right_adj.len()];
    dl[source_left] = 0;
    // (is_left, index)
    let mut queue = VecDeque::from([(true, source_left)]);
    while let Some((is_left, x)) = queue.pop_front() {
        let d = if is_left { dl[x] } else { dr[x] };
        if d >= max_depth {
            continue;
        }
        if is_left {
            for &r in &left_adj[x] {
                if dr[r] == usize::MAX {
                    dr[r] = d + 1;
                    queue.push_back((false, r));
                }
            }
        } else {
            for &l in &right_adj[x] {
                if dl[l] == usize::MAX {
                    dl[l] = d + 1;
                    queue.push_back((true, l));
                }
            }
        }
    }
    (dl, dr)
}

/// Left/right child pairs that the perturbation may connect: parents within
/// distance `2 * radius + 1` in `b`, not already adjacent after expansion.
pub fn perturbation_candidates<T: Scalar>(
    b: &BipartiteGraph<T>,
    v: &ExpansionVectors,
    expanded: &BipartiteGraph<T>,
    radius: usize,
) -> Vec<(usize, usize)> {
    let left_adj = b.left_neighbors();
    let right_adj = b.right_neighbors();
    let lo = offsets(&v.left);
    let ro = offsets(&v.right);
    let reach = 2 * radius + 1;
    let mut out = BTreeSet::new();
    for p in 0..b.num_left() {
        let (_, dr) = bfs_distances(&left_adj, &right_adj, p, reach);
        for (q, &d) in dr.iter().enumerate() {
            if d > reach {
                continue;
            }
            for i in lo[p]..lo[p + 1] {
                for j in ro[q]..ro[q + 1] {
                    if !expanded.has_edge(i, j) {
                        out.insert((i, j));
                    }
                }
            }
        }
    }
    out.into_iter().collect()
}

/// Expansion plus random extra edges between children whose parents are
/// within distance `2 * radius + 1`, each added with probability `p`.
pub fn perturb_expand<T: Scalar, R: Rng + ?Sized>(
    b: &BipartiteGraph<T>,
    v: &ExpansionVectors,
    radius: usize,
    p: f64,
    rng: &mut R,
) -> Result<BipartiteGraph<T>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidProbability(p));
    }
    let expanded = expand(b, v)?;
    if p == 0.0 {
        return Ok(expanded);
    }
    let extra: Vec<(usize, usize)> = perturbation_candidates(b, v, &expanded, radius)
        .into_iter()
        .filter(|_| rng.random::<f64>() < p)
        .collect();
    if extra.is_empty() {
        return Ok(expanded);
    }
    let mut edges = expanded.edges().to_vec();
    edges.extend(extra);
    let mut out = BipartiteGraph::new(
        expanded.num_left(),
        expanded.num_right(),
        edges,
        expanded.left_budgets().to_vec(),
        expanded.left_features().cloned(),
        expanded.right_features().cloned(),
    )?;
    out.set_clusters(expanded.cluster_of_left().map(<[usize]>::to_vec), expanded.cluster_of_right().map(<[usize]>::to_vec));
    Ok(out)
}

/// Splits one parent budget across its children.
///
/// Each child gets `round(budget * fraction)`, clamped so every child keeps
/// at least 1; the remaining surplus is removed starting from the highest
/// index and any deficit is added starting from the lowest index, so the
/// lowest-index child ends up with the larger share on ties.
pub fn split_budget<T: Scalar>(budget: usize, fractions: &[T]) -> Result<Vec<usize>> {
    let g = fractions.len();
    if g == 0 {
        return Err(Error::Empty("split fractions"));
    }
    if budget < g {
        return Err(Error::BudgetTooSmall { budget, children: g });
    }
    let sum: f64 = fractions.iter().map(|f| f.as_f64()).sum();
    let tol = (T::epsilon().as_f64() * 64.0).max(1e-9);
    if (sum - 1.0).abs() > tol || fractions.iter().any(|f| !f.is_finite() || f.as_f64() < -tol) {
        return Err(Error::SplitNotNormalized { group: 0, sum });
    }
    let cap = budget - (g - 1);
    let mut out: Vec<usize> = fractions
        .iter()
        .map(|f| {
            let x = (budget as f64 * f.as_f64()).round();
            (x.max(1.0) as usize).min(cap)
        })
        .collect();
    let mut total: usize = out.iter().sum();
    while total > budget {
        // Highest index first; children never drop below 1.
        let i = (0..g).rev().find(|&i| out[i] > 1).expect("surplus implies a child above 1");
        out[i] -= 1;
        total -= 1;
    }
    let mut i = 0;
    while total < budget {
        out[i % g] += 1;
        total += 1;
        i += 1;
    }
    Ok(out)
}

/// Applies [`split_budget`] to every sibling group of an expanded graph.
pub fn split_group_budgets<T: Scalar>(
    budgets: &[usize],
    groups: &[Vec<usize>],
    fractions: &[T],
) -> Result<Vec<usize>> {
    let mut out = vec![0; budgets.len()];
    for (gi, group) in groups.iter().enumerate() {
        let parent = budgets[group[0]];
        let f: Vec<T> = group.iter().map(|&i| fractions[i]).collect();
        let parts = split_budget(parent, &f).map_err(|e| match e {
            Error::SplitNotNormalized { sum, .. } => Error::SplitNotNormalized { group: gi, sum },
            other => other,
        })?;
        for (&i, b) in group.iter().zip(parts) {
            out[i] = b;
        }
    }
    Ok(out)
}

/// Keeps the flagged edges, splits budgets within sibling groups and
/// replaces features. Left nodes may end up isolated; see
/// [`BipartiteGraph::isolated_left`].
pub fn refine<T: Scalar>(b: &BipartiteGraph<T>, d: &RefinementDecision<T>) -> Result<BipartiteGraph<T>> {
    if d.edge_keep.len() != b.num_edges() {
        return Err(Error::DimensionMismatch { what: "edge keep vector", expected: b.num_edges(), actual: d.edge_keep.len() });
    }
    if d.budget_split.len() != b.num_left() {
        return Err(Error::DimensionMismatch { what: "budget split vector", expected: b.num_left(), actual: d.budget_split.len() });
    }
    check_features("left refine features", b.left_features(), d.left_features.as_ref(), b.num_left())?;
    check_features("right refine features", b.right_features(), d.right_features.as_ref(), b.num_right())?;
    let edges = b.edges().iter().zip(&d.edge_keep).filter(|(_, &k)| k).map(|(&e, _)| e).collect();
    let budgets = split_group_budgets(b.left_budgets(), &b.left_groups(), &d.budget_split)?;
    let mut out = BipartiteGraph::new(
        b.num_left(),
        b.num_right(),
        edges,
        budgets,
        d.left_features.clone(),
        d.right_features.clone(),
    )?;
    out.set_clusters(b.cluster_of_left().map(<[usize]>::to_vec), b.cluster_of_right().map(<[usize]>::to_vec));
    Ok(out)
}

fn check_features<T: Scalar>(
    what: &'static str,
    current: Option<&Matrix<T>>,
    replacement: Option<&Matrix<T>>,
    rows: usize,
) -> Result<()> {
    match (current, replacement) {
        (None, None) => Ok(()),
        (Some(c), Some(r)) if r.shape() == (rows, c.cols()) => Ok(()),
        (Some(c), Some(r)) => Err(Error::DimensionMismatch { what, expected: rows * c.cols(), actual: r.rows() * r.cols() }),
        (Some(c), None) => Err(Error::DimensionMismatch { what, expected: c.cols(), actual: 0 }),
        (None, Some(r)) => Err(Error::DimensionMismatch { what, expected: 0, actual: r.cols() }),
    }
}
