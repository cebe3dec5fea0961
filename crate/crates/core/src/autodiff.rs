//! A small reverse-mode tape over dense matrices.
//!
//! Every operation appends a node holding its value; [`Tape::backward`]
//! walks the nodes in reverse and accumulates gradients. Parameter leaves
//! remember their slot in a [`ParameterStore`] so gradients can be written
//! back after the pass.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op<T> {
    Constant,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Silu(Var),
    Tanh(Var),
    Hcat(Vec<Var>),
    Columns(Var, usize),
    Gather(Var, Vec<usize>),
    ScatterSum(Var, Vec<usize>),
    Reshape(Var),
    MaskedMse { pred: Var, target: Matrix<T>, mask: Option<Vec<bool>>, count: usize },
    SumScalars(Vec<Var>),
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Matrix<T>,
    op: Op<T>,
}

/// Append-only record of a computation.
#[derive(Clone, Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

fn silu<T: Scalar>(x: T) -> T {
    x / (T::one() + (-x).exp())
}

fn silu_grad<T: Scalar>(x: T) -> T {
    let s = T::one() / (T::one() + (-x).exp());
    s * (T::one() + x * (T::one() - s))
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, value: Matrix<T>) -> Var {
        self.push(value, Op::Constant)
    }

    /// Records the current value of parameter `id`.
    pub fn param(&mut self, store: &ParameterStore<T>, id: usize) -> Var {
        self.push(store.params[id].value.clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    /// Adds a `1 x d` row to every row of an `n x d` matrix.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let (x, b) = (self.value(a), self.value(bias));
        assert_eq!((1, x.cols()), b.shape(), "bias shape mismatch");
        let mut v = x.clone();
        for r in 0..v.rows() {
            for (o, &bb) in v.row_mut(r).iter_mut().zip(b.row(0)) {
                *o += bb;
            }
        }
        self.push(v, Op::AddBias(a, bias))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(silu);
        self.push(v, Op::Silu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.tanh());
        self.push(v, Op::Tanh(a))
    }

    pub fn hcat(&mut self, parts: &[Var]) -> Var {
        let mats: Vec<&Matrix<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Matrix::hcat(&mats);
        self.push(v, Op::Hcat(parts.to_vec()))
    }

    pub fn columns(&mut self, a: Var, start: usize, width: usize) -> Var {
        let v = self.value(a).columns(start, width);
        self.push(v, Op::Columns(a, start))
    }

    /// Row `i` of the result is row `index[i]` of `a`.
    pub fn gather(&mut self, a: Var, index: &[usize]) -> Var {
        let v = self.value(a).gather_rows(index);
        self.push(v, Op::Gather(a, index.to_vec()))
    }

    /// Row `r` of the result sums the rows `i` of `a` with `index[i] = r`.
    pub fn scatter_sum(&mut self, a: Var, index: &[usize], rows: usize) -> Var {
        let x = self.value(a);
        assert_eq!(x.rows(), index.len(), "scatter index length");
        let mut v = Matrix::zeros(rows, x.cols());
        for (i, &r) in index.iter().enumerate() {
            for (o, &xx) in v.row_mut(r).iter_mut().zip(x.row(i)) {
                *o += xx;
            }
        }
        self.push(v, Op::ScatterSum(a, index.to_vec()))
    }

    /// Reinterprets the row-major data with a new shape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let x = self.value(a);
        assert_eq!(x.rows() * x.cols(), rows * cols, "reshape size mismatch");
        let v = Matrix::from_vec(rows, cols, x.as_slice().to_vec());
        self.push(v, Op::Reshape(a))
    }

    /// `x W + b` for a `(W, b)` pair of parameter ids.
    pub fn linear(&mut self, store: &ParameterStore<T>, layer: Linear, x: Var) -> Var {
        let w = self.param(store, layer.weight);
        let b = self.param(store, layer.bias);
        let xw = self.matmul(x, w);
        self.add_bias(xw, b)
    }

    /// Mean squared error against a constant target over the selected rows;
    /// a `1 x 1` result, zero when nothing is selected.
    pub fn masked_mse(&mut self, pred: Var, target: &Matrix<T>, mask: Option<&[bool]>) -> Result<Var> {
        let p = self.value(pred);
        if p.shape() != target.shape() {
            return Err(Error::DimensionMismatch {
                what: "loss target",
                expected: p.rows() * p.cols(),
                actual: target.rows() * target.cols(),
            });
        }
        if let Some(m) = mask {
            if m.len() != p.rows() {
                return Err(Error::DimensionMismatch { what: "loss mask", expected: p.rows(), actual: m.len() });
            }
        }
        let selected = |r: usize| mask.is_none_or(|m| m[r]);
        let mut acc = T::zero();
        let mut count = 0;
        for r in (0..p.rows()).filter(|&r| selected(r)) {
            for (a, b) in p.row(r).iter().zip(target.row(r)) {
                acc += (*a - *b) * (*a - *b);
            }
            count += p.cols();
        }
        let loss = if count == 0 { T::zero() } else { acc / T::of(count as f64) };
        Ok(self.push(
            Matrix::filled(1, 1, loss),
            Op::MaskedMse { pred, target: target.clone(), mask: mask.map(<[bool]>::to_vec), count },
        ))
    }

    /// Sum of `1 x 1` values.
    pub fn sum_scalars(&mut self, parts: &[Var]) -> Var {
        let s = parts.iter().map(|&p| self.value(p)[(0, 0)]).sum();
        self.push(Matrix::filled(1, 1, s), Op::SumScalars(parts.to_vec()))
    }

    /// Reverse pass from a `1 x 1` root. Parameter gradients are added to
    /// `store`; the full gradient table is returned for inspection.
    pub fn backward(&self, root: Var, store: &mut ParameterStore<T>) -> Result<Vec<Option<Matrix<T>>>> {
        if self.value(root).shape() != (1, 1) {
            return Err(Error::InvalidParameter("backward needs a scalar root".into()));
        }
        let mut grads: Vec<Option<Matrix<T>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Matrix::filled(1, 1, T::one()));
        fn acc<T: Scalar>(grads: &mut [Option<Matrix<T>>], v: Var, g: Matrix<T>) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        }
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    let slot = &mut store.params[*id].grad;
                    if slot.shape() != g.shape() {
                        return Err(Error::DimensionMismatch { what: "parameter gradient", expected: slot.cols(), actual: g.cols() });
                    }
                    slot.add_assign(&g);
                }
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    acc(&mut grads, *a, g.matmul_t(vb));
                    acc(&mut grads, *b, va.t_matmul(&g));
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    acc(&mut grads, *a, g.zip_map(vb, |x, y| x * y));
                    acc(&mut grads, *b, g.zip_map(va, |x, y| x * y));
                }
                Op::AddBias(a, bias) => {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, &x) in gb.row_mut(0).iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    acc(&mut grads, *bias, gb);
                    acc(&mut grads, *a, g);
                }
                Op::Silu(a) => {
                    let d = g.zip_map(self.value(*a), |gg, x| gg * silu_grad(x));
                    acc(&mut grads, *a, d);
                }
                Op::Tanh(a) => {
                    let d = g.zip_map(&node.value, |gg, y| gg * (T::one() - y * y));
                    acc(&mut grads, *a, d);
                }
                Op::Hcat(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        acc(&mut grads, p, g.columns(start, w));
                        start += w;
                    }
                }
                Op::Columns(a, start) => {
                    let src = self.value(*a);
                    let mut d = Matrix::zeros(src.rows(), src.cols());
                    for r in 0..g.rows() {
                        d.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                    }
                    acc(&mut grads, *a, d);
                }
                Op::Gather(a, index) => {
                    let src = self.value(*a);
                    let mut d = Matrix::zeros(src.rows(), src.cols());
                    for (i, &r) in index.iter().enumerate() {
                        for (o, &x) in d.row_mut(r).iter_mut().zip(g.row(i)) {
                            *o += x;
                        }
                    }
                    acc(&mut grads, *a, d);
                }
                Op::ScatterSum(a, index) => acc(&mut grads, *a, g.gather_rows(index)),
                Op::Reshape(a) => {
                    let (r, c) = self.value(*a).shape();
                    acc(&mut grads, *a, Matrix::from_vec(r, c, g.into_vec()));
                }
                Op::MaskedMse { pred, target, mask, count } => {
                    let p = self.value(*pred);
                    let mut d = Matrix::zeros(p.rows(), p.cols());
                    if *count > 0 {
                        let scale = g[(0, 0)] * T::of(2.0) / T::of(*count as f64);
                        for r in 0..p.rows() {
                            if mask.as_ref().is_some_and(|m| !m[r]) {
                                continue;
                            }
                            for ((o, &a), &b) in d.row_mut(r).iter_mut().zip(p.row(r)).zip(target.row(r)) {
                                *o = scale * (a - b);
                            }
                        }
                    }
                    acc(&mut grads, *pred, d);
                }
                Op::SumScalars(parts) => {
                    for &p in parts {
                        acc(&mut grads, p, g.clone());
                    }
                }
            }
        }
        Ok(grads)
    }
}

/// Parameter ids of an affine map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Linear {
    pub weight: usize,
    pub bias: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Matrix<T>,
    pub grad: Matrix<T>,
    first_moment: Matrix<T>,
    second_moment: Matrix<T>,
}

/// Adaptive-moment optimizer settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Named dense parameters with gradient and optimizer slots.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore<T> {
    params: Vec<Parameter<T>>,
    by_name: BTreeMap<String, usize>,
    step: u64,
}

impl<T: Scalar> ParameterStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new(), by_name: BTreeMap::new(), step: 0 }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix<T>) -> Result<usize> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::InvalidParameter(format!("duplicate parameter {name}")));
        }
        let (r, c) = value.shape();
        let id = self.params.len();
        self.by_name.insert(name.clone(), id);
        self.params.push(Parameter {
            name,
            value,
            grad: Matrix::zeros(r, c),
            first_moment: Matrix::zeros(r, c),
            second_moment: Matrix::zeros(r, c),
        });
        Ok(id)
    }

    /// Registers `name.w` (uniform in `+-1/sqrt(fan_in)`) and a zero `name.b`.
    pub fn add_linear<R: Rng + ?Sized>(&mut self, name: &str, fan_in: usize, fan_out: usize, rng: &mut R) -> Result<Linear> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let w = Matrix::from_fn(fan_in, fan_out, |_, _| T::of(rng.random_range(-bound..bound)));
        let weight = self.add(format!("{name}.w"), w)?;
        let bias = self.add(format!("{name}.b"), Matrix::zeros(1, fan_out))?;
        Ok(Linear { weight, bias, fan_in, fan_out })
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn get(&self, id: usize) -> &Parameter<T> {
        &self.params[id]
    }

    pub fn value_mut(&mut self, id: usize) -> &mut Matrix<T> {
        &mut self.params[id].value
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.rows() * p.value.cols()).sum()
    }

    /// Optimizer steps taken so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.as_mut_slice().iter_mut().for_each(|g| *g = T::zero());
        }
    }

    /// One Adam update with bias correction. Gradients are left in place;
    /// call [`zero_grad`](Self::zero_grad) before the next accumulation.
    pub fn optimizer_step(&mut self, lr: f64, cfg: &AdamConfig) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::InvalidParameter(format!("learning rate {lr}")));
        }
        if let Some(p) = self.params.iter().find(|p| !p.grad.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {}", p.name)));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        let (b1, b2, eps) = (T::of(cfg.beta1), T::of(cfg.beta2), T::of(cfg.eps));
        let step_size = T::of(lr / c1);
        let c2_sqrt = T::of(c2.sqrt());
        for p in &mut self.params {
            let n = p.grad.as_slice().len();
            for i in 0..n {
                let g = p.grad.as_slice()[i];
                let m = &mut p.first_moment.as_mut_slice()[i];
                *m = b1 * *m + (T::one() - b1) * g;
                let m = *m;
                let v = &mut p.second_moment.as_mut_slice()[i];
                *v = b2 * *v + (T::one() - b2) * g * g;
                let denom = v.sqrt() / c2_sqrt + eps;
                p.value.as_mut_slice()[i] -= step_size * m / denom;
            }
            if !p.value.is_finite() {
                return Err(Error::NonFinite(format!("parameter {} after update", p.name)));
            }
        }
        Ok(())
    }

    pub(crate) fn set_step(&mut self, step: u64) {
        self.step = step;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn numeric_check(build: impl Fn(&mut Tape<f64>, &ParameterStore<f64>) -> Var, store: &mut ParameterStore<f64>) {
        let mut tape = Tape::new();
        let root = build(&mut tape, store);
        store.zero_grad();
        tape.backward(root, store).unwrap();
        let h = 1e-5;
        for id in 0..store.len() {
            let analytic = store.get(id).grad.clone();
            for k in 0..analytic.as_slice().len() {
                let orig = store.get(id).value.as_slice()[k];
                store.value_mut(id).as_mut_slice()[k] = orig + h;
                let mut t1 = Tape::new();
                let r1 = build(&mut t1, store);
                let up = t1.value(r1)[(0, 0)];
                store.value_mut(id).as_mut_slice()[k] = orig - h;
                let mut t2 = Tape::new();
                let r2 = build(&mut t2, store);
                let down = t2.value(r2)[(0, 0)];
                store.value_mut(id).as_mut_slice()[k] = orig;
                let fd = (up - down) / (2.0 * h);
                let a = analytic.as_slice()[k];
                assert!((fd - a).abs() <= 1e-6 * (1.0 + fd.abs()), "param {id}[{k}]: {a} vs {fd}");
            }
        }
    }

    #[test]
    fn every_op_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParameterStore::new();
        let l1 = store.add_linear("l1", 3, 4, &mut rng).unwrap();
        let l2 = store.add_linear("l2", 8, 2, &mut rng).unwrap();
        let x = Matrix::from_fn(5, 3, |_, _| rng.random_range(-1.0..1.0));
        let target = Matrix::from_fn(3, 4, |_, _| rng.random_range(-1.0..1.0));
        let build = move |tape: &mut Tape<f64>, store: &ParameterStore<f64>| {
            let xv = tape.constant(x.clone());
            let h = tape.linear(store, l1, xv);
            let a = tape.silu(h);
            let b = tape.tanh(h);
            let ab = tape.mul(a, b);
            let sum = tape.add(ab, a);
            let cat = tape.hcat(&[sum, b]);
            let y = tape.linear(store, l2, cat);
            let g = tape.gather(y, &[0, 4, 4, 2, 1, 3]);
            let s = tape.scatter_sum(g, &[0, 1, 2, 0, 1, 2], 3);
            let r = tape.reshape(s, 2, 3);
            let c = tape.columns(r, 1, 2);
            let c2 = tape.reshape(c, 1, 4);
            let wide = tape.gather(c2, &[0, 0, 0]);
            let l_a = tape.masked_mse(wide, &target, Some(&[true, false, true])).unwrap();
            let l_b = tape.masked_mse(s, &Matrix::zeros(3, 2), None).unwrap();
            tape.sum_scalars(&[l_a, l_b])
        };
        numeric_check(build, &mut store);
    }

    #[test]
    fn zero_loss_gives_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParameterStore::<f64>::new();
        let l = store.add_linear("l", 2, 2, &mut rng).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::from_vec(1, 2, vec![0.3, -0.2]));
        let y = tape.linear(&store, l, x);
        let target = tape.value(y).clone();
        let loss = tape.masked_mse(y, &target, None).unwrap();
        tape.backward(loss, &mut store).unwrap();
        assert!(store.iter().all(|p| p.grad.as_slice().iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let mut store = ParameterStore::<f64>::new();
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::zeros(2, 2));
        assert!(tape.backward(x, &mut store).is_err());
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParameterStore::<f64>::new();
        store.add_linear("l", 3, 3, &mut rng).unwrap();
        let before = store.clone();
        store.optimizer_step(1e-2, &AdamConfig::default()).unwrap();
        for (a, b) in store.iter().zip(before.iter()) {
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn adam_minimizes_quadratic_bowl() {
        let mut store = ParameterStore::<f64>::new();
        let id = store.add("w", Matrix::from_vec(1, 3, vec![1.0, -2.0, 0.5])).unwrap();
        let cfg = AdamConfig::default();
        let mut reached = None;
        for step in 0..2000 {
            store.zero_grad();
            let w = store.get(id).value.clone();
            store.params[id].grad = w.map(|x| 2.0 * x);
            store.optimizer_step(1e-2, &cfg).unwrap();
            let norm = store.get(id).value.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-3 {
                reached = Some(step);
                break;
            }
        }
        assert!(reached.is_some(), "did not reach the minimum within 2000 steps");
    }

    #[test]
    fn update_is_elementwise() {
        let mut store = ParameterStore::<f64>::new();
        let id = store.add("w", Matrix::from_vec(1, 3, vec![1.0, 1.0, 1.0])).unwrap();
        store.params[id].grad = Matrix::from_vec(1, 3, vec![0.0, 1.0, 0.0]);
        store.optimizer_step(0.1, &AdamConfig::default()).unwrap();
        let v = store.get(id).value.as_slice();
        assert_eq!((v[0], v[2]), (1.0, 1.0));
        assert!(v[1] < 1.0);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut store = ParameterStore::<f64>::new();
        let id = store.add("w", Matrix::zeros(1, 1)).unwrap();
        store.params[id].grad[(0, 0)] = f64::NAN;
        assert!(matches!(store.optimizer_step(0.1, &AdamConfig::default()), Err(Error::NonFinite(_))));
    }
}
