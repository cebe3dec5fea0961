//! Normalized Laplacian of a bipartite graph and its low end of the spectrum.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hypergraph::BipartiteGraph;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Eigenvalues at or below this are treated as zero.
pub const ZERO_EIGENVALUE_THRESHOLD: f64 = 1e-8;

/// Matrices at least this large use Lanczos instead of a dense solver.
pub const DENSE_EIGEN_LIMIT: usize = 512;

/// `k` smallest non-zero eigenpairs, zero-padded when the graph has fewer.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralBasis<T> {
    pub eigenvalues: Vec<T>,
    /// One column per eigenvalue, one row per graph node.
    pub eigenvectors: Matrix<T>,
}

impl<T: Scalar> SpectralBasis<T> {
    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Number of non-padded components.
    pub fn num_computed(&self) -> usize {
        self.eigenvalues.iter().filter(|&&l| l.as_f64() > ZERO_EIGENVALUE_THRESHOLD).count()
    }
}

/// `L = I - D^{-1/2} A D^{-1/2}` over the left-then-right node order.
/// Isolated nodes get a zero diagonal.
pub fn normalized_laplacian<T: Scalar>(b: &BipartiteGraph<T>) -> Matrix<T> {
    let n = b.num_nodes();
    let nl = b.num_left();
    let mut deg = vec![0usize; n];
    for &(l, r) in b.edges() {
        deg[l] += 1;
        deg[nl + r] += 1;
    }
    let mut m = Matrix::zeros(n, n);
    for (i, &d) in deg.iter().enumerate() {
        if d > 0 {
            m[(i, i)] = T::one();
        }
    }
    for &(l, r) in b.edges() {
        let j = nl + r;
        let w = T::of(-1.0 / ((deg[l] * deg[j]) as f64).sqrt());
        m[(l, j)] = w;
        m[(j, l)] = w;
    }
    m
}

fn symmetry_defect<T: Scalar>(l: &Matrix<T>) -> Result<()> {
    if l.rows() != l.cols() {
        return Err(Error::DimensionMismatch { what: "square matrix", expected: l.rows(), actual: l.cols() });
    }
    let n = l.rows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max((l[(i, j)] - l[(j, i)]).abs().as_f64());
        }
    }
    let scale = l.as_slice().iter().map(|x| x.abs().as_f64()).fold(1.0, f64::max);
    if worst > 1e-12 * scale {
        return Err(Error::NotSymmetric(worst));
    }
    Ok(())
}

/// The `k` smallest eigenpairs of a symmetric matrix whose eigenvalue
/// exceeds [`ZERO_EIGENVALUE_THRESHOLD`], ascending. Missing components are
/// zero-padded.
pub fn smallest_nonzero_eigs<T: Scalar>(l: &Matrix<T>, k: usize) -> Result<SpectralBasis<T>> {
    symmetry_defect(l)?;
    let n = l.rows();
    let pairs = if n < DENSE_EIGEN_LIMIT { dense_pairs(l) } else { lanczos_pairs(l, k) };
    let mut values = Vec::with_capacity(k);
    let mut vectors = Matrix::zeros(n, k);
    for (lambda, v) in pairs.into_iter().filter(|(lambda, _)| *lambda > ZERO_EIGENVALUE_THRESHOLD).take(k) {
        let col = values.len();
        for (i, &x) in v.iter().enumerate() {
            vectors[(i, col)] = T::of(x);
        }
        values.push(T::of(lambda));
    }
    values.resize(k, T::zero());
    Ok(SpectralBasis { eigenvalues: values, eigenvectors: vectors })
}

/// Convenience wrapper: spectrum of the bipartite normalized Laplacian.
pub fn bipartite_spectrum<T: Scalar>(b: &BipartiteGraph<T>, k: usize) -> SpectralBasis<T> {
    smallest_nonzero_eigs(&normalized_laplacian(b), k).expect("normalized Laplacian is symmetric")
}

/// All eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues<T: Scalar>(l: &Matrix<T>) -> Vec<f64> {
    dense_pairs(l).into_iter().map(|(v, _)| v).collect()
}

fn to_dmatrix<T: Scalar>(l: &Matrix<T>) -> DMatrix<f64> {
    DMatrix::from_fn(l.rows(), l.cols(), |i, j| l[(i, j)].as_f64())
}

/// Flips the sign so the entry of largest magnitude is positive.
fn canonical_sign(v: &mut [f64]) {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in v.iter() {
        if x.abs() > best + 1e-12 {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn sorted_pairs(values: &DVector<f64>, vectors: &DMatrix<f64>) -> Vec<(f64, Vec<f64>)> {
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..values.len())
        .map(|i| {
            let mut v: Vec<f64> = vectors.column(i).iter().copied().collect();
            canonical_sign(&mut v);
            (values[i], v)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

fn dense_pairs<T: Scalar>(l: &Matrix<T>) -> Vec<(f64, Vec<f64>)> {
    if l.rows() == 0 {
        return Vec::new();
    }
    let eig = SymmetricEigen::new(to_dmatrix(l));
    sorted_pairs(&eig.eigenvalues, &eig.eigenvectors)
}

/// Lanczos with full reorthogonalization; returns Ritz pairs ascending.
fn lanczos_pairs<T: Scalar>(l: &Matrix<T>, k: usize) -> Vec<(f64, Vec<f64>)> {
    let n = l.rows();
    let a = to_dmatrix(l);
    let steps = n.min((8 * k + 64).max(160));
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut q = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
    q /= q.norm();
    let mut basis: Vec<DVector<f64>> = vec![q];
    let mut alpha = Vec::with_capacity(steps);
    let mut beta: Vec<f64> = Vec::with_capacity(steps);
    for j in 0..steps {
        let mut w = &a * &basis[j];
        let aj = w.dot(&basis[j]);
        alpha.push(aj);
        // Two passes of Gram-Schmidt keep the basis orthonormal.
        for _ in 0..2 {
            for qi in &basis {
                let c = w.dot(qi);
                w.axpy(-c, qi, 1.0);
            }
        }
        let bj = w.norm();
        if j + 1 == steps || bj < 1e-12 {
            break;
        }
        beta.push(bj);
        basis.push(w / bj);
    }
    let m = alpha.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let qmat = DMatrix::from_columns(&basis[..m]);
    let ritz = qmat * eig.eigenvectors;
    sorted_pairs(&eig.eigenvalues, &ritz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::BipartiteGraph;

    fn path3() -> BipartiteGraph<f64> {
        // left 0 - right 0 - left 1
        BipartiteGraph::new(2, 1, vec![(0, 0), (1, 0)], vec![1, 1], None, None).unwrap()
    }

    #[test]
    fn single_edge_laplacian() {
        let b = BipartiteGraph::<f64>::new(1, 1, vec![(0, 0)], vec![1], None, None).unwrap();
        let l = normalized_laplacian(&b);
        assert_eq!(l.as_slice(), &[1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn empty_graph_laplacian_is_zero() {
        let b = BipartiteGraph::<f64>::new(2, 1, vec![], vec![1, 1], None, None).unwrap();
        assert!(normalized_laplacian(&b).as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn path_of_three_smallest_nonzero_is_one() {
        let basis = bipartite_spectrum(&path3(), 1);
        assert!((basis.eigenvalues[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn k_beyond_graph_size_pads_with_zeros() {
        let basis = bipartite_spectrum(&path3(), 5);
        assert_eq!(basis.num_computed(), 2);
        assert_eq!(&basis.eigenvalues[2..], &[0.0, 0.0, 0.0]);
        for c in 2..5 {
            assert!((0..3).all(|r| basis.eigenvectors[(r, c)] == 0.0));
        }
    }

    #[test]
    fn disconnected_components_exclude_zero_eigenvalues() {
        // Three disjoint single edges: 3 zero eigenvalues, 3 eigenvalues 2.
        let b = BipartiteGraph::<f64>::new(3, 3, vec![(0, 0), (1, 1), (2, 2)], vec![1; 3], None, None).unwrap();
        let basis = bipartite_spectrum(&b, 6);
        assert_eq!(basis.num_computed(), 3);
        assert!(basis.eigenvalues[..3].iter().all(|&l| (l - 2.0).abs() < 1e-10));
    }

    #[test]
    fn non_symmetric_rejected() {
        let m = Matrix::from_vec(2, 2, vec![1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(smallest_nonzero_eigs(&m, 1), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn lanczos_matches_dense_on_random_graph() {
        let m = 300;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut edges = std::collections::BTreeSet::new();
        for i in 0..m {
            edges.insert((i, i));
            while edges.range((i, 0)..(i + 1, 0)).count() < 3 {
                edges.insert((i, rng.random_range(0..m)));
            }
        }
        let b = BipartiteGraph::<f64>::new(m, m, edges.into_iter().collect(), vec![1; m], None, None).unwrap();
        let l = normalized_laplacian(&b);
        let lz = smallest_nonzero_eigs(&l, 4).unwrap();
        let dense: Vec<f64> = symmetric_eigenvalues(&l).into_iter().filter(|&x| x > 1e-8).take(4).collect();
        for (a, d) in lz.eigenvalues.iter().zip(&dense) {
            assert!((a - d).abs() < 1e-6, "{a} vs {d}");
        }
    }
}
