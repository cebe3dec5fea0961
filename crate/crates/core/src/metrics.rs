//! Distribution distances, validity predicates and mesh distances for
//! evaluating generated hypergraphs.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::GraphKind;
use crate::error::{Error, Result};
use crate::hypergraph::{clique_expand, star_expand, Hypergraph, UnionFind};
use crate::scalar::Scalar;
use crate::spectral::{normalized_laplacian, symmetric_eigenvalues};

pub const SPECTRAL_BINS: usize = 64;
pub const CHAMFER_SAMPLES: usize = 1024;

/// Smallest share of nodes each side of the community split must hold.
pub const SBM_MIN_PART_FRACTION: f64 = 0.25;
/// Required ratio of intra- to inter-community hyperedge density.
pub const SBM_DENSITY_RATIO: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub node_num_diff: f64,
    pub degree_wasserstein: f64,
    pub edge_size_wasserstein: f64,
    pub spectral_mmd: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validity_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chamfer_nearest: Option<f64>,
    /// Generated graphs with at least one node outside every hyperedge.
    #[serde(default)]
    pub isolated_node_graphs: usize,
}

/// First Wasserstein distance between two empirical distributions,
/// `integral |F_a - F_b|`.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("wasserstein operand"));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("wasserstein operand".into()));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    if sa.len() == sb.len() {
        let s: f64 = sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).sum();
        return Ok(s / sa.len() as f64);
    }
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let mut all: Vec<f64> = sa.iter().chain(&sb).copied().collect();
    all.sort_by(f64::total_cmp);
    let (mut ia, mut ib) = (0usize, 0usize);
    let mut total = 0.0;
    for w in all.windows(2) {
        let x = w[0];
        while ia < sa.len() && sa[ia] <= x {
            ia += 1;
        }
        while ib < sb.len() && sb[ib] <= x {
            ib += 1;
        }
        total += (ia as f64 / na - ib as f64 / nb).abs() * (w[1] - w[0]);
    }
    Ok(total)
}

/// Left-node degrees of the star expansion.
pub fn degree_sample<T: Scalar>(graphs: &[Hypergraph<T>]) -> Vec<f64> {
    graphs.iter().flat_map(|h| h.node_degrees()).map(|d| d as f64).collect()
}

/// Right-node degrees of the star expansion.
pub fn edge_size_sample<T: Scalar>(graphs: &[Hypergraph<T>]) -> Vec<f64> {
    graphs.iter().flat_map(|h| h.hyperedge_sizes()).map(|d| d as f64).collect()
}

/// Normalized histogram of the star expansion's normalized-Laplacian
/// eigenvalues over `[0, 2]`.
pub fn spectral_histogram<T: Scalar>(h: &Hypergraph<T>) -> Vec<f64> {
    let eig = symmetric_eigenvalues(&normalized_laplacian(&star_expand(h)));
    let mut hist = vec![0.0; SPECTRAL_BINS];
    for l in &eig {
        let bin = ((l / 2.0) * SPECTRAL_BINS as f64).floor().clamp(0.0, (SPECTRAL_BINS - 1) as f64) as usize;
        hist[bin] += 1.0;
    }
    let n = eig.len().max(1) as f64;
    hist.iter_mut().for_each(|x| *x /= n);
    hist
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median of all pairwise Euclidean distances, 1 when that median is 0.
pub fn median_bandwidth(points: &[Vec<f64>]) -> f64 {
    let mut d: Vec<f64> = Vec::new();
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            d.push(sq_dist(&points[i], &points[j]).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    let med = if m % 2 == 1 { d[m / 2] } else { 0.5 * (d[m / 2 - 1] + d[m / 2]) };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

/// Biased squared MMD between two point sets under
/// `k(x, y) = exp(-|x - y|^2 / (2 sigma^2))`.
pub fn mmd_squared(a: &[Vec<f64>], b: &[Vec<f64>], sigma: f64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("mmd operand"));
    }
    let k = |x: &[f64], y: &[f64]| (-sq_dist(x, y) / (2.0 * sigma * sigma)).exp();
    let mean = |p: &[Vec<f64>], q: &[Vec<f64>]| {
        let mut s = 0.0;
        for x in p {
            for y in q {
                s += k(x, y);
            }
        }
        s / (p.len() * q.len()) as f64
    };
    Ok((mean(a, a) + mean(b, b) - 2.0 * mean(a, b)).max(0.0))
}

/// Squared MMD between spectral histograms, bandwidth by the median
/// heuristic over the pooled histograms.
pub fn spectral_mmd<T: Scalar>(a: &[Hypergraph<T>], b: &[Hypergraph<T>]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("spectral mmd set"));
    }
    let ha: Vec<Vec<f64>> = a.iter().map(spectral_histogram).collect();
    let hb: Vec<Vec<f64>> = b.iter().map(spectral_histogram).collect();
    let pooled: Vec<Vec<f64>> = ha.iter().chain(&hb).cloned().collect();
    mmd_squared(&ha, &hb, median_bandwidth(&pooled))
}

/// Mean `|generated size - requested size|`.
pub fn node_num_diff<T: Scalar>(generated: &[Hypergraph<T>], targets: &[usize]) -> Result<f64> {
    if generated.is_empty() {
        return Err(Error::Empty("generated set"));
    }
    if generated.len() != targets.len() {
        return Err(Error::DimensionMismatch { what: "size targets", expected: generated.len(), actual: targets.len() });
    }
    let s: f64 = generated.iter().zip(targets).map(|(h, &n)| (h.num_nodes() as f64 - n as f64).abs()).sum();
    Ok(s / generated.len() as f64)
}

/// Some node belongs to every hyperedge (and there is at least one).
pub fn is_valid_ego<T: Scalar>(h: &Hypergraph<T>) -> bool {
    let Some((first, rest)) = h.hyperedges().split_first() else { return false };
    first.iter().any(|v| rest.iter().all(|he| he.binary_search(v).is_ok()))
}

/// Connected clique expansion and an acyclic incidence graph.
pub fn is_valid_tree<T: Scalar>(h: &Hypergraph<T>) -> bool {
    if h.num_nodes() == 0 || !h.is_connected() {
        return false;
    }
    let n = h.num_nodes();
    let mut uf = UnionFind::new(n + h.num_hyperedges());
    for (e, he) in h.hyperedges().iter().enumerate() {
        for &v in he {
            if !uf.union(v, n + e) {
                return false;
            }
        }
    }
    true
}

/// Sign split of the Fiedler vector of the (regularized) combinatorial
/// Laplacian of the clique expansion over non-isolated nodes; `true` marks
/// one side. Isolated nodes join whichever side is smaller at the time.
pub fn spectral_bipartition<T: Scalar>(h: &Hypergraph<T>) -> Vec<bool> {
    let n = h.num_nodes();
    let c = clique_expand(h);
    let degrees = h.node_degrees();
    let active: Vec<usize> = (0..n).filter(|&v| degrees[v] > 0).collect();
    let mut side = vec![false; n];
    let m = active.len();
    if m >= 2 {
        let mut pos = vec![usize::MAX; n];
        for (i, &v) in active.iter().enumerate() {
            pos[v] = i;
        }
        // A weak uniform coupling (a tenth of the mean degree, spread over
        // all pairs) keeps tiny components from owning the low spectrum.
        let tau = 0.1 * c.degrees().iter().sum::<f64>() / (m * m) as f64;
        let mut l = DMatrix::<f64>::from_fn(m, m, |i, j| if i == j { tau * (m - 1) as f64 } else { -tau });
        for (&(u, v), &w) in &c.weighted_edges {
            let (i, j) = (pos[u], pos[v]);
            l[(i, j)] -= w;
            l[(j, i)] -= w;
            l[(i, i)] += w;
            l[(j, j)] += w;
        }
        let eig = SymmetricEigen::new(l);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let f = eig.eigenvectors.column(order[1]);
        for (i, &v) in active.iter().enumerate() {
            side[v] = f[i] >= 0.0;
        }
    }
    let mut count_true = active.iter().filter(|&&v| side[v]).count();
    let mut count_false = m - count_true;
    for v in (0..n).filter(|&v| degrees[v] == 0) {
        if count_true < count_false {
            side[v] = true;
            count_true += 1;
        } else {
            count_false += 1;
        }
    }
    side
}

fn choose3(n: usize) -> f64 {
    if n < 3 {
        0.0
    } else {
        (n * (n - 1) * (n - 2)) as f64 / 6.0
    }
}

/// Both sides of [`spectral_bipartition`] hold at least
/// [`SBM_MIN_PART_FRACTION`] of the nodes and the density of hyperedges
/// inside a side is at least [`SBM_DENSITY_RATIO`] times the density of
/// hyperedges crossing it. Densities are per candidate triple.
pub fn is_valid_sbm<T: Scalar>(h: &Hypergraph<T>) -> bool {
    let n = h.num_nodes();
    if n < 4 || h.num_hyperedges() == 0 {
        return false;
    }
    let side = spectral_bipartition(h);
    let a = side.iter().filter(|&&s| s).count();
    let b = n - a;
    let min = SBM_MIN_PART_FRACTION * n as f64;
    if (a as f64) < min || (b as f64) < min {
        return false;
    }
    let intra = h.hyperedges().iter().filter(|he| he.iter().all(|&v| side[v] == side[he[0]])).count() as f64;
    let inter = h.num_hyperedges() as f64 - intra;
    let intra_slots = choose3(a) + choose3(b);
    let inter_slots = choose3(n) - intra_slots;
    if intra == 0.0 {
        return false;
    }
    if inter == 0.0 {
        return true;
    }
    intra / intra_slots >= SBM_DENSITY_RATIO * inter / inter_slots
}

pub fn validity<T: Scalar>(kind: GraphKind, h: &Hypergraph<T>) -> bool {
    match kind {
        GraphKind::Sbm => is_valid_sbm(h),
        GraphKind::Ego => is_valid_ego(h),
        GraphKind::Tree => is_valid_tree(h),
    }
}

pub fn validity_fraction<T: Scalar>(kind: GraphKind, graphs: &[Hypergraph<T>]) -> Result<f64> {
    if graphs.is_empty() {
        return Err(Error::Empty("validity set"));
    }
    Ok(graphs.iter().filter(|h| validity(kind, h)).count() as f64 / graphs.len() as f64)
}

type Triangle = [[f64; 3]; 3];

fn triangles<T: Scalar>(h: &Hypergraph<T>) -> Result<Vec<Triangle>> {
    let f = h
        .node_features()
        .filter(|f| f.cols() >= 3)
        .ok_or_else(|| Error::InvalidParameter("mesh needs 3-D node positions".into()))?;
    let p = |v: usize| [f[(v, 0)].as_f64(), f[(v, 1)].as_f64(), f[(v, 2)].as_f64()];
    Ok(h.hyperedges().iter().filter(|he| he.len() == 3).map(|he| [p(he[0]), p(he[1]), p(he[2])]).collect())
}

fn area(t: &Triangle) -> f64 {
    let u = [t[1][0] - t[0][0], t[1][1] - t[0][1], t[1][2] - t[0][2]];
    let v = [t[2][0] - t[0][0], t[2][1] - t[0][1], t[2][2] - t[0][2]];
    let c = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
    0.5 * (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt()
}

/// `count` points drawn uniformly by area from the triangular faces.
pub fn sample_surface<T: Scalar, R: Rng + ?Sized>(h: &Hypergraph<T>, count: usize, rng: &mut R) -> Result<Vec<[f64; 3]>> {
    let tris = triangles(h)?;
    let mut cdf = Vec::with_capacity(tris.len());
    let mut acc = 0.0;
    for t in &tris {
        acc += area(t);
        cdf.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::InvalidParameter("mesh has zero surface area".into()));
    }
    Ok((0..count)
        .map(|_| {
            let x = rng.random::<f64>() * acc;
            let i = cdf.partition_point(|&c| c <= x).min(tris.len() - 1);
            let t = &tris[i];
            let (mut r1, mut r2): (f64, f64) = (rng.random(), rng.random());
            if r1 + r2 > 1.0 {
                r1 = 1.0 - r1;
                r2 = 1.0 - r2;
            }
            std::array::from_fn(|c| t[0][c] + r1 * (t[1][c] - t[0][c]) + r2 * (t[2][c] - t[0][c]))
        })
        .collect())
}

/// Symmetric Chamfer distance: mean squared nearest-neighbor distance in
/// both directions, summed.
pub fn chamfer(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    let one_way = |p: &[[f64; 3]], q: &[[f64; 3]]| {
        p.iter().map(|x| q.iter().map(|y| sq_dist(x, y)).fold(f64::INFINITY, f64::min)).sum::<f64>() / p.len() as f64
    };
    one_way(a, b) + one_way(b, a)
}

/// Smallest Chamfer distance from `generated` to any reference mesh, with
/// [`CHAMFER_SAMPLES`] surface points per mesh.
pub fn chamfer_nearest<T: Scalar, R: Rng + ?Sized>(
    generated: &Hypergraph<T>,
    references: &[Hypergraph<T>],
    rng: &mut R,
) -> Result<f64> {
    if references.is_empty() {
        return Err(Error::Empty("reference meshes"));
    }
    let g = sample_surface(generated, CHAMFER_SAMPLES, rng)?;
    let mut best = f64::INFINITY;
    for r in references {
        let pts = sample_surface(r, CHAMFER_SAMPLES, rng)?;
        best = best.min(chamfer(&g, &pts));
    }
    Ok(best)
}

/// A set without hyperedges has all its size mass at zero.
fn or_zero(sample: Vec<f64>) -> Vec<f64> {
    if sample.is_empty() { vec![0.0] } else { sample }
}

/// Distances between a generated and a reference set. Validity is measured
/// on the generated set when a kind is given.
pub fn evaluate_sets<T: Scalar>(
    generated: &[Hypergraph<T>],
    reference: &[Hypergraph<T>],
    size_targets: &[usize],
    kind: Option<GraphKind>,
) -> Result<MetricReport> {
    Ok(MetricReport {
        node_num_diff: node_num_diff(generated, size_targets)?,
        degree_wasserstein: wasserstein_1d(&degree_sample(generated), &degree_sample(reference))?,
        edge_size_wasserstein: wasserstein_1d(&or_zero(edge_size_sample(generated)), &or_zero(edge_size_sample(reference)))?,
        spectral_mmd: spectral_mmd(generated, reference)?,
        validity_fraction: kind.map(|k| validity_fraction(k, generated)).transpose()?,
        chamfer_nearest: None,
        isolated_node_graphs: generated.iter().filter(|h| h.node_degrees().contains(&0)).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_ego, gen_sbm, gen_tree};
    use crate::matrix::Matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type H = Hypergraph<f64>;

    #[test]
    fn wasserstein_examples() {
        assert_eq!(wasserstein_1d(&[1.0, 2.0], &[2.0, 1.0]).unwrap(), 0.0);
        assert_eq!(wasserstein_1d(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(wasserstein_1d(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), 1.0);
        // Unequal sizes: {0} vs {0, 1} differ by 1/2 on [0, 1).
        assert!((wasserstein_1d(&[0.0], &[0.0, 1.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(wasserstein_1d(&[], &[1.0]).is_err());
    }

    #[test]
    fn mmd_zero_on_identical_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let set: Vec<H> = (0..4).map(|_| gen_tree(&mut rng)).collect();
        assert!(spectral_mmd(&set, &set).unwrap() < 1e-12);
    }

    #[test]
    fn mmd_positive_on_disjoint_supports() {
        let a = vec![vec![0.0, 0.0]];
        let b = vec![vec![10.0, 0.0]];
        let m = mmd_squared(&a, &b, 0.1).unwrap();
        assert!((m - 2.0).abs() < 1e-12 && m > 0.0);
    }

    #[test]
    fn generators_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            assert!(is_valid_tree(&gen_tree::<f64, _>(&mut rng)));
        }
        for _ in 0..3 {
            assert!(is_valid_ego(&gen_ego::<f64, _>(&mut rng)));
        }
        let valid = (0..50).filter(|_| is_valid_sbm(&gen_sbm::<f64, _>(&mut rng))).count();
        assert!(valid >= 45, "only {valid}/50 generated SBM graphs pass");
    }

    #[test]
    fn complete_three_uniform_is_not_a_tree() {
        let mut edges = Vec::new();
        for a in 0..6 {
            for b in a + 1..6 {
                for c in b + 1..6 {
                    edges.push(vec![a, b, c]);
                }
            }
        }
        assert!(!is_valid_tree(&H::new(6, edges).unwrap()));
    }

    #[test]
    fn isolated_node_breaks_tree_validity() {
        assert!(!is_valid_tree(&H::new(3, vec![vec![0, 1]]).unwrap()));
    }

    #[test]
    fn ego_validity_examples() {
        assert!(is_valid_ego(&H::new(4, vec![vec![0, 1], vec![0, 2, 3]]).unwrap()));
        assert!(!is_valid_ego(&H::new(4, vec![vec![0, 1], vec![2, 3]]).unwrap()));
    }

    fn tetra(offset: f64) -> H {
        let pos = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let f = Matrix::from_fn(4, 3, |r, c| pos[r][c] + if c == 0 { offset } else { 0.0 });
        H::with_features(4, vec![vec![0, 1, 2], vec![0, 1, 3], vec![0, 2, 3], vec![1, 2, 3]], Some(f), None).unwrap()
    }

    #[test]
    fn chamfer_self_and_translation() {
        let sample = |h: &H, seed| sample_surface(h, CHAMFER_SAMPLES, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let base = sample(&tetra(0.0), 7);
        assert!(chamfer(&base, &sample(&tetra(0.0), 7)) < 1e-3);
        let mut last = 0.0;
        for d in [0.1, 0.2, 0.4, 0.8] {
            let c = chamfer(&base, &sample(&tetra(d), 7));
            assert!(c > last, "{c} <= {last} at d = {d}");
            last = c;
        }
    }

    #[test]
    fn chamfer_nearest_prefers_the_copy() {
        let refs = vec![tetra(2.0), tetra(0.0), tetra(-3.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let best = chamfer_nearest(&tetra(0.0), &refs, &mut rng).unwrap();
        let own = chamfer_nearest(&tetra(0.0), &refs[1..2], &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(best <= own + 1e-2);
        assert!(best < 0.05);
    }

    #[test]
    fn zero_area_mesh_rejected() {
        let f = Matrix::from_fn(3, 3, |_, _| 0.0);
        let h = H::with_features(3, vec![vec![0, 1, 2]], Some(f), None).unwrap();
        assert!(sample_surface(&h, 4, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn node_num_diff_examples() {
        let g: Vec<H> = (0..10).map(|i| H::new(if i == 0 { 13 } else { 10 }, vec![]).unwrap()).collect();
        assert!((node_num_diff(&g, &[10; 10]).unwrap() - 0.3).abs() < 1e-15);
    }
}
