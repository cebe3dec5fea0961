//! Flow matching with endpoint parameterization: linear interpolation
//! paths, priors, simplex projection, per-cluster OT coupling and a
//! fixed-step integrator.

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Closest `t` to 1 at which a velocity may still be formed.
pub const TERMINAL_EPS: f64 = 1e-5;

/// Dirichlet concentration used for budget-split priors.
pub const SPLIT_DIRICHLET_ALPHA: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HeadKind {
    LeftExpansion,
    RightExpansion,
    EdgeKeep,
    BudgetSplit,
    LeftFeature,
    RightFeature,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PriorKind {
    Gaussian,
    Dirichlet { alpha: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetEncoding {
    /// `{-1, 1}`.
    Binary,
    /// `{-1, 0, 1}`.
    Ternary,
    /// A simplex coordinate mapped by `2x - 1`.
    SimplexMapped,
    RawFeature,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowHeadSpec {
    pub kind: HeadKind,
    pub prior: PriorKind,
    pub encoding: TargetEncoding,
}

impl FlowHeadSpec {
    pub fn for_kind(kind: HeadKind) -> Self {
        let (prior, encoding) = match kind {
            HeadKind::LeftExpansion | HeadKind::EdgeKeep => (PriorKind::Gaussian, TargetEncoding::Binary),
            HeadKind::RightExpansion => (PriorKind::Gaussian, TargetEncoding::Ternary),
            HeadKind::BudgetSplit => (PriorKind::Dirichlet { alpha: SPLIT_DIRICHLET_ALPHA }, TargetEncoding::SimplexMapped),
            HeadKind::LeftFeature | HeadKind::RightFeature => (PriorKind::Gaussian, TargetEncoding::RawFeature),
        };
        Self { kind, prior, encoding }
    }
}

/// Time and per-head values of a flow trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowState<T> {
    pub t: T,
    pub values: Vec<Matrix<T>>,
}

fn same_shape<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>, what: &'static str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch { what, expected: a.rows() * a.cols(), actual: b.rows() * b.cols() });
    }
    Ok(())
}

/// `t * x1 + (1 - t) * x0`.
pub fn interpolate<T: Scalar>(x0: &Matrix<T>, x1: &Matrix<T>, t: T) -> Result<Matrix<T>> {
    same_shape(x0, x1, "interpolation endpoints")?;
    if !(t >= T::zero() && t <= T::one()) {
        return Err(Error::InvalidParameter(format!("time {t} outside [0, 1]")));
    }
    Ok(x0.zip_map(x1, |a, b| t * b + (T::one() - t) * a))
}

/// `(x1_hat - x_t) / (1 - t)`. Fails near `t = 1`, where the integrator
/// assigns the endpoint directly instead.
pub fn endpoint_velocity<T: Scalar>(x_t: &Matrix<T>, x1_hat: &Matrix<T>, t: T) -> Result<Matrix<T>> {
    same_shape(x_t, x1_hat, "velocity operands")?;
    if t.as_f64() >= 1.0 - TERMINAL_EPS {
        return Err(Error::TerminalTime(t.as_f64()));
    }
    let inv = T::one() / (T::one() - t);
    Ok(x1_hat.zip_map(x_t, |a, b| (a - b) * inv))
}

/// Mean squared error over the rows selected by `row_mask` (all rows when
/// `None`). An empty selection contributes 0.
pub fn fm_loss<T: Scalar>(pred: &Matrix<T>, truth: &Matrix<T>, row_mask: Option<&[bool]>) -> Result<T> {
    same_shape(pred, truth, "loss operands")?;
    if let Some(m) = row_mask {
        if m.len() != pred.rows() {
            return Err(Error::DimensionMismatch { what: "loss mask", expected: pred.rows(), actual: m.len() });
        }
    }
    let mut acc = T::zero();
    let mut count = 0usize;
    for r in 0..pred.rows() {
        if row_mask.is_some_and(|m| !m[r]) {
            continue;
        }
        for (a, b) in pred.row(r).iter().zip(truth.row(r)) {
            let d = *a - *b;
            acc += d * d;
        }
        count += pred.cols();
    }
    if count == 0 {
        return Ok(T::zero());
    }
    Ok(acc / T::of(count as f64))
}

/// Draws prior values for one head.
///
/// Gaussian heads are i.i.d. standard normal. Dirichlet heads draw one
/// symmetric Dirichlet sample per sibling group (one column) and map it by
/// `2x - 1`; singleton groups get the point mass at 1.
pub fn sample_prior<T: Scalar, R: Rng + ?Sized>(
    spec: &FlowHeadSpec,
    rows: usize,
    cols: usize,
    groups: &[Vec<usize>],
    rng: &mut R,
) -> Result<Matrix<T>> {
    match spec.prior {
        PriorKind::Gaussian => Ok(Matrix::from_fn(rows, cols, |_, _| {
            let z: f64 = StandardNormal.sample(rng);
            T::of(z)
        })),
        PriorKind::Dirichlet { alpha } => {
            if cols != 1 {
                return Err(Error::DimensionMismatch { what: "dirichlet head width", expected: 1, actual: cols });
            }
            let beta = Beta::new(alpha, alpha).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            let mut out = Matrix::zeros(rows, 1);
            for g in groups {
                match g.as_slice() {
                    [i] => out[(*i, 0)] = T::one(),
                    [i, j] => {
                        let a: f64 = beta.sample(rng);
                        out[(*i, 0)] = T::of(2.0 * a - 1.0);
                        out[(*j, 0)] = T::of(2.0 * (1.0 - a) - 1.0);
                    }
                    other => return Err(Error::GroupTooLarge(other.len())),
                }
            }
            Ok(out)
        }
    }
}

/// Euclidean projection onto the probability simplex (sort and threshold).
pub fn simplex_project<T: Scalar>(z: &[T]) -> Result<Vec<T>> {
    if z.is_empty() {
        return Err(Error::Empty("simplex projection input"));
    }
    if z.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("simplex projection input".into()));
    }
    let mut u = z.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    let mut cumsum = T::zero();
    let mut tau = T::zero();
    for (i, &ui) in u.iter().enumerate() {
        cumsum += ui;
        let candidate = (cumsum - T::one()) / T::of((i + 1) as f64);
        if ui - candidate > T::zero() {
            tau = candidate;
        }
    }
    let mut x: Vec<T> = z.iter().map(|&zi| (zi - tau).max(T::zero())).collect();
    // Remove the residual rounding error so the sum is 1 to machine precision.
    let s: T = x.iter().copied().sum();
    if s > T::zero() {
        x.iter_mut().for_each(|v| *v /= s);
    }
    Ok(x)
}

/// Projects the split head, given in the `2x - 1` encoding, onto the simplex
/// within every sibling group.
pub fn project_split_groups<T: Scalar>(mapped: &mut Matrix<T>, groups: &[Vec<usize>]) -> Result<()> {
    let two = T::of(2.0);
    for g in groups {
        let fractions: Vec<T> = g.iter().map(|&i| (mapped[(i, 0)] + T::one()) / two).collect();
        let p = simplex_project(&fractions)?;
        for (&i, v) in g.iter().zip(p) {
            mapped[(i, 0)] = two * v - T::one();
        }
    }
    Ok(())
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// For every sibling group, whether its two noise rows should be swapped to
/// lower the transport cost to the targets. Singletons never swap; ties keep
/// the original order.
pub fn ot_swap_decisions<T: Scalar>(groups: &[Vec<usize>], noise: &Matrix<T>, targets: &Matrix<T>) -> Result<Vec<bool>> {
    same_shape(noise, targets, "coupling noise and targets")?;
    groups
        .iter()
        .map(|g| match g.as_slice() {
            [_] => Ok(false),
            [i, j] => {
                let (zi, zj, xi, xj) = (noise.row(*i), noise.row(*j), targets.row(*i), targets.row(*j));
                let normal = sq_dist(zi, xi) + sq_dist(zj, xj);
                let swapped = sq_dist(zj, xi) + sq_dist(zi, xj);
                Ok(swapped < normal)
            }
            other => Err(Error::GroupTooLarge(other.len())),
        })
        .collect()
}

/// Minibatch OT coupling within sibling groups of size 1 or 2: returns the
/// reindexed noise. Targets are never touched.
pub fn ot_couple<T: Scalar>(groups: &[Vec<usize>], noise: &Matrix<T>, targets: &Matrix<T>) -> Result<Matrix<T>> {
    let swaps = ot_swap_decisions(groups, noise, targets)?;
    let mut out = noise.clone();
    for (g, swap) in groups.iter().zip(swaps) {
        if swap {
            let (i, j) = (g[0], g[1]);
            let ri = noise.row(i).to_vec();
            out.row_mut(i).copy_from_slice(noise.row(j));
            out.row_mut(j).copy_from_slice(&ri);
        }
    }
    Ok(out)
}

/// Explicit Euler on a uniform grid using predicted endpoints. The last step
/// assigns the prediction directly. `predict` receives the current state and
/// returns one endpoint matrix per head.
pub fn integrate<T, F>(mut predict: F, initial: Vec<Matrix<T>>, steps: usize) -> Result<Vec<Matrix<T>>>
where
    T: Scalar,
    F: FnMut(&FlowState<T>) -> Result<Vec<Matrix<T>>>,
{
    if steps == 0 {
        return Err(Error::InvalidParameter("integration needs at least one step".into()));
    }
    let dt = 1.0 / steps as f64;
    let mut state = FlowState { t: T::zero(), values: initial };
    for step in 0..steps {
        let t = step as f64 * dt;
        state.t = T::of(t);
        let endpoints = predict(&state)?;
        if endpoints.len() != state.values.len() {
            return Err(Error::DimensionMismatch { what: "predicted heads", expected: state.values.len(), actual: endpoints.len() });
        }
        for (h, e) in endpoints.iter().enumerate() {
            same_shape(&state.values[h], e, "predicted endpoint")?;
            if !e.is_finite() {
                return Err(Error::NonFinite(format!("endpoint prediction of head {h} at t = {t:.4}")));
            }
        }
        if step + 1 == steps {
            state.values = endpoints;
        } else {
            let h = T::of(dt);
            for (x, e) in state.values.iter_mut().zip(&endpoints) {
                let v = endpoint_velocity(x, e, state.t)?;
                *x = x.zip_map(&v, |a, b| a + h * b);
            }
        }
    }
    Ok(state.values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn col(v: &[f64]) -> Matrix<f64> {
        Matrix::column(v.to_vec())
    }

    #[test]
    fn interpolation_endpoints_and_midpoint() {
        let (x0, x1) = (col(&[0.0, 1.0]), col(&[2.0, 3.0]));
        assert_eq!(interpolate(&x0, &x1, 0.0).unwrap(), x0);
        assert_eq!(interpolate(&x0, &x1, 1.0).unwrap(), x1);
        assert_eq!(interpolate(&x0, &x1, 0.5).unwrap().as_slice(), &[1.0, 2.0]);
        assert!(interpolate(&x0, &col(&[1.0]), 0.5).is_err());
    }

    #[test]
    fn velocity_examples() {
        assert_eq!(endpoint_velocity(&col(&[0.0]), &col(&[1.0]), 0.0).unwrap().as_slice(), &[1.0]);
        assert_eq!(endpoint_velocity(&col(&[0.5]), &col(&[1.0]), 0.5).unwrap().as_slice(), &[1.0]);
        assert_eq!(endpoint_velocity(&col(&[0.3]), &col(&[0.3]), 0.9).unwrap().as_slice(), &[0.0]);
        assert!(matches!(endpoint_velocity(&col(&[0.0]), &col(&[1.0]), 1.0), Err(Error::TerminalTime(_))));
    }

    #[test]
    fn exact_step_from_true_velocity_hits_target() {
        let (x0, x1) = (col(&[0.3, -1.2]), col(&[1.0, 0.5]));
        for &t in &[0.0, 0.25, 0.7] {
            let xt = interpolate(&x0, &x1, t).unwrap();
            let v = endpoint_velocity(&xt, &x1, t).unwrap();
            let end = xt.zip_map(&v, |a, b| a + (1.0 - t) * b);
            assert!(end.max_abs_diff(&x1) < 1e-15);
        }
    }

    #[test]
    fn loss_examples() {
        let t = col(&[1.0, 2.0, 3.0]);
        assert_eq!(fm_loss(&t, &t, None).unwrap(), 0.0);
        let shifted = t.map(|x| x + 0.5);
        assert!((fm_loss(&shifted, &t, None).unwrap() - 0.25).abs() < 1e-15);
        let mut p = t.clone();
        p[(2, 0)] = 100.0;
        let mask = [true, true, false];
        assert_eq!(fm_loss(&p, &t, Some(&mask)).unwrap(), 0.0);
        assert_eq!(fm_loss(&p, &t, Some(&[false; 3])).unwrap(), 0.0);
    }

    #[test]
    fn dirichlet_prior_groups() {
        let spec = FlowHeadSpec::for_kind(HeadKind::BudgetSplit);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let groups = vec![vec![0], vec![1, 2]];
        for _ in 0..100 {
            let x: Matrix<f64> = sample_prior(&spec, 3, 1, &groups, &mut rng).unwrap();
            assert_eq!(x[(0, 0)], 1.0);
            assert!((x[(1, 0)] + x[(2, 0)]).abs() < 1e-12);
            assert!(x[(1, 0)].abs() <= 1.0);
        }
        assert!(matches!(
            sample_prior::<f64, _>(&spec, 3, 1, &[vec![0, 1, 2]], &mut rng),
            Err(Error::GroupTooLarge(3))
        ));
    }

    #[test]
    fn gaussian_prior_moments() {
        let spec = FlowHeadSpec::for_kind(HeadKind::EdgeKeep);
        let n = 100_000;
        let x: Matrix<f64> = sample_prior(&spec, n, 1, &[], &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let mean = x.sum() / n as f64;
        let var = x.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // Standard errors: 1/sqrt(n) for the mean, sqrt(2/n) for the variance.
        assert!(mean.abs() < 3.0 / (n as f64).sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt(), "var {var}");
    }

    #[test]
    fn simplex_examples() {
        let p = simplex_project(&[0.5f64, 0.5, 0.5]).unwrap();
        assert!(p.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
        // u = (1.2, 0.1): rho = 1 since 0.1 - (1.3 - 1)/2 < 0, tau = 0.2.
        assert_eq!(simplex_project(&[1.2, 0.1]).unwrap(), vec![1.0, 0.0]);
        let on = [0.2f64, 0.3, 0.5];
        let p = simplex_project(&on).unwrap();
        for (a, b) in p.iter().zip(on) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(matches!(simplex_project::<f64>(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn coupling_examples() {
        let groups = vec![vec![0, 1]];
        let z = col(&[0.0, 1.0]);
        let x = col(&[1.0, 0.0]);
        assert_eq!(ot_couple(&groups, &z, &x).unwrap().as_slice(), &[1.0, 0.0]);
        // Equal costs keep order.
        let z = col(&[0.0, 0.0]);
        assert_eq!(ot_couple(&groups, &z, &x).unwrap().as_slice(), &[0.0, 0.0]);
        let z = col(&[5.0]);
        assert_eq!(ot_couple(&[vec![0]], &z, &col(&[0.0])).unwrap(), z);
        assert!(matches!(
            ot_couple(&[vec![0, 1, 2]], &col(&[0.0; 3]), &col(&[0.0; 3])),
            Err(Error::GroupTooLarge(3))
        ));
    }

    #[test]
    fn integrate_constant_predictor_reaches_constant() {
        for steps in [1, 3, 25] {
            let out = integrate(|_| Ok(vec![col(&[2.5, -1.0])]), vec![col(&[0.0, 7.0])], steps).unwrap();
            assert!(out[0].max_abs_diff(&col(&[2.5, -1.0])) < 1e-12);
        }
    }

    #[test]
    fn integrate_single_step_returns_first_prediction() {
        let mut calls = 0;
        let out = integrate(
            |s| {
                calls += 1;
                Ok(vec![s.values[0].map(|v| v * 3.0 + 1.0)])
            },
            vec![col(&[1.0])],
            1,
        )
        .unwrap();
        assert_eq!(calls, 1);
        assert_eq!(out[0].as_slice(), &[4.0]);
    }

    #[test]
    fn integrate_rejects_non_finite_and_zero_steps() {
        assert!(matches!(integrate(|_| Ok(vec![col(&[f64::NAN])]), vec![col(&[0.0])], 4), Err(Error::NonFinite(_))));
        assert!(integrate(|_| Ok(vec![col(&[0.0])]), vec![col(&[0.0])], 0).is_err());
    }

    #[test]
    fn integrate_linear_flow_is_step_independent() {
        // Endpoint of the straight path through (x, t) from a fixed origin:
        // x1 = (x - (1 - t) x0) / t, exact for any step count once t > 0.
        let x0 = 0.4;
        let x1 = -1.3;
        let run = |steps| -> f64 {
            integrate(
                |s: &FlowState<f64>| {
                    let t = s.t;
                    let x = s.values[0][(0, 0)];
                    let end = if t == 0.0 { x1 } else { (x - (1.0 - t) * x0) / t };
                    Ok(vec![col(&[end])])
                },
                vec![col(&[x0])],
                steps,
            )
            .unwrap()[0][(0, 0)]
        };
        assert!((run(25) - run(100)).abs() < 1e-12);
        assert!((run(25) - x1).abs() < 1e-12);
    }
}
