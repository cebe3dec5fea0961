//! Endpoint-prediction network over expanded bipartite graphs.
//!
//! Nodes carry sign-invariant spectral embeddings replicated from the coarse
//! graph, left nodes carry a sinusoidal budget encoding, and feature streams
//! are FiLM-modulated by their parent cluster's features. A stack of
//! edge-local message-passing layers updates every incidence from its two
//! endpoints and sums the result back into the nodes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Linear, ParameterStore, Tape, Var};
use crate::error::{Error, Result};
use crate::expansion::ExpansionVectors;
use crate::hypergraph::BipartiteGraph;
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::spectral::bipartite_spectrum;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Width of the random embeddings used when no spectral features are requested.
pub const RANDOM_EMBEDDING_DIM: usize = 8;

/// Number of per-graph conditioning scalars: time, reduction fraction, log target size.
const COND_DIM: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub spectral_k: usize,
    pub budget_encoding_dim: usize,
    pub budget_base_freq: f64,
    pub mlp_hidden: usize,
    /// Width of the per-eigenvector sign-invariant encoder.
    pub phi_dim: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            num_layers: 4,
            spectral_k: 8,
            budget_encoding_dim: 32,
            budget_base_freq: 1e-4,
            mlp_hidden: 64,
            phi_dim: 16,
        }
    }
}

impl DenoiserConfig {
    /// Columns of the positional embeddings: `spectral_k`, or
    /// [`RANDOM_EMBEDDING_DIM`] when spectral features are disabled.
    pub fn embedding_width(&self) -> usize {
        if self.spectral_k == 0 {
            RANDOM_EMBEDDING_DIM
        } else {
            self.spectral_k
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden_dim", self.hidden_dim),
            ("num_layers", self.num_layers),
            ("budget_encoding_dim", self.budget_encoding_dim),
            ("mlp_hidden", self.mlp_hidden),
            ("phi_dim", self.phi_dim),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidParameter(format!("{name} must be positive")));
        }
        if self.budget_encoding_dim % 2 != 0 {
            return Err(Error::InvalidParameter("budget_encoding_dim must be even".into()));
        }
        if !(self.budget_base_freq > 0.0 && self.budget_base_freq.is_finite()) {
            return Err(Error::InvalidParameter("budget_base_freq must be positive".into()));
        }
        Ok(())
    }
}

/// Raw spectral features of a coarse graph replicated onto its expansion.
/// The learned encoder runs inside [`Denoiser::forward`].
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralRows<T> {
    /// One value per column; empty for random embeddings.
    pub eigenvalues: Vec<T>,
    pub left: Matrix<T>,
    pub right: Matrix<T>,
}

impl<T: Scalar> SpectralRows<T> {
    pub fn width(&self) -> usize {
        self.left.cols()
    }

    /// Negates eigenvector column `j` on both sides.
    pub fn flip_sign(&mut self, j: usize) {
        for m in [&mut self.left, &mut self.right] {
            for r in 0..m.rows() {
                m[(r, j)] = -m[(r, j)];
            }
        }
    }
}

/// The `k` smallest non-zero eigenpairs of `b`'s normalized Laplacian, with
/// every node's row copied to its children under `v`. With `k = 0` the rows
/// are i.i.d. standard normal instead (one draw per coarse node, replicated).
pub fn spectral_rows<T: Scalar, R: Rng + ?Sized>(
    b: &BipartiteGraph<T>,
    k: usize,
    v: &ExpansionVectors,
    rng: &mut R,
) -> Result<SpectralRows<T>> {
    v.validate(b)?;
    let nl = b.num_left();
    let (eigenvalues, table) = if k == 0 {
        let table = Matrix::from_fn(b.num_nodes(), RANDOM_EMBEDDING_DIM, |_, _| {
            let z: f64 = StandardNormal.sample(rng);
            T::of(z)
        });
        (Vec::new(), table)
    } else {
        let basis = bipartite_spectrum(b, k);
        (basis.eigenvalues, basis.eigenvectors)
    };
    let left_rows: Vec<usize> = v.left_parents();
    let right_rows: Vec<usize> = v.right_parents().into_iter().map(|p| p + nl).collect();
    Ok(SpectralRows { eigenvalues, left: table.gather_rows(&left_rows), right: table.gather_rows(&right_rows) })
}

/// Interleaved sine/cosine encoding: columns `2i` and `2i + 1` hold
/// `sin(b w_i)` and `cos(b w_i)` with `w_i = base^(2i / dim)`.
pub fn budget_encoding<T: Scalar>(budgets: &[usize], dim: usize, base_freq: f64) -> Result<Matrix<T>> {
    if dim % 2 != 0 {
        return Err(Error::InvalidParameter("encoding dimension must be even".into()));
    }
    if let Some(i) = budgets.iter().position(|&b| b == 0) {
        return Err(Error::ZeroBudget(i));
    }
    let freqs: Vec<f64> = (0..dim / 2).map(|i| base_freq.powf(2.0 * i as f64 / dim as f64)).collect();
    let mut out = Matrix::zeros(budgets.len(), dim);
    for (r, &b) in budgets.iter().enumerate() {
        for (i, w) in freqs.iter().enumerate() {
            let a = b as f64 * w;
            out[(r, 2 * i)] = T::of(a.sin());
            out[(r, 2 * i + 1)] = T::of(a.cos());
        }
    }
    Ok(out)
}

/// Everything the network sees for one expanded graph.
///
/// State layouts match [`DenoiserOutput`]: left rows are
/// `[expansion, split, features..]`, right rows `[expansion, features..]`,
/// edge rows `[keep]`, edges in the graph's canonical order.
#[derive(Clone, Debug)]
pub struct DenoiserInput<T> {
    pub graph: BipartiteGraph<T>,
    pub t: T,
    pub left_state: Matrix<T>,
    pub right_state: Matrix<T>,
    pub edge_state: Matrix<T>,
    /// Features of each node's parent cluster; zero columns when featureless.
    pub parent_left_features: Matrix<T>,
    pub parent_right_features: Matrix<T>,
    pub embeddings: SpectralRows<T>,
    pub budget_encoding: Matrix<T>,
    pub target_size: usize,
    pub reduction: T,
}

impl<T: Scalar> DenoiserInput<T> {
    /// Same input with left and right nodes relabeled (`new = perm[old]`).
    pub fn permuted(&self, left_perm: &[usize], right_perm: &[usize]) -> Self {
        let inv = |perm: &[usize]| {
            let mut inv = vec![0; perm.len()];
            for (old, &new) in perm.iter().enumerate() {
                inv[new] = old;
            }
            inv
        };
        let (li, ri) = (inv(left_perm), inv(right_perm));
        let graph = self.graph.permuted(left_perm, right_perm);
        let edge_rows: Vec<usize> = graph
            .edges()
            .iter()
            .map(|&(l, r)| self.graph.edge_index(li[l], ri[r]).expect("permuted edge exists"))
            .collect();
        Self {
            t: self.t,
            left_state: self.left_state.gather_rows(&li),
            right_state: self.right_state.gather_rows(&ri),
            edge_state: self.edge_state.gather_rows(&edge_rows),
            parent_left_features: self.parent_left_features.gather_rows(&li),
            parent_right_features: self.parent_right_features.gather_rows(&ri),
            embeddings: SpectralRows {
                eigenvalues: self.embeddings.eigenvalues.clone(),
                left: self.embeddings.left.gather_rows(&li),
                right: self.embeddings.right.gather_rows(&ri),
            },
            budget_encoding: self.budget_encoding.gather_rows(&li),
            target_size: self.target_size,
            reduction: self.reduction,
            graph,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserOutput<T> {
    pub left: Matrix<T>,
    pub right: Matrix<T>,
    pub edge: Matrix<T>,
}

/// Tape handles of the three heads.
#[derive(Clone, Copy, Debug)]
pub struct OutputVars {
    pub left: Var,
    pub right: Var,
    pub edge: Var,
}

/// Supervision for one expanded graph in the [`DenoiserOutput`] layout.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadTargets<T> {
    pub left: Matrix<T>,
    pub right: Matrix<T>,
    pub edge: Matrix<T>,
}

#[derive(Clone, Debug)]
struct Block {
    edge_in: Linear,
    edge_out: Linear,
    left_in: Linear,
    left_out: Linear,
    right_in: Linear,
    right_out: Linear,
}

#[derive(Clone, Debug)]
struct Layout {
    phi_in: Linear,
    phi_out: Linear,
    rho: Linear,
    left_attr: Linear,
    right_attr: Linear,
    edge_attr: Linear,
    left_feat: Option<(Linear, Linear)>,
    right_feat: Option<(Linear, Linear)>,
    left_mix: Linear,
    right_mix: Linear,
    edge_mix: Linear,
    blocks: Vec<Block>,
    left_head: Linear,
    right_head: Linear,
    edge_head: Linear,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    dtype: String,
    config: DenoiserConfig,
    left_feature_dim: usize,
    right_feature_dim: usize,
    step: u64,
    tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug)]
pub struct Denoiser<T> {
    config: DenoiserConfig,
    left_feature_dim: usize,
    right_feature_dim: usize,
    pub params: ParameterStore<T>,
    layout: Layout,
}

impl<T: Scalar> Denoiser<T> {
    pub fn new<R: Rng + ?Sized>(config: DenoiserConfig, left_feature_dim: usize, right_feature_dim: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut s = ParameterStore::new();
        let (d, h, k, p) = (config.hidden_dim, config.mlp_hidden, config.embedding_width(), config.phi_dim);
        let phi_in = s.add_linear("embed.phi.0", 2, p, rng)?;
        let phi_out = s.add_linear("embed.phi.1", p, p, rng)?;
        let rho = s.add_linear("embed.rho", k * p, d, rng)?;
        let left_attr = s.add_linear("input.left_attr", 2, d, rng)?;
        let right_attr = s.add_linear("input.right_attr", 1, d, rng)?;
        let edge_attr = s.add_linear("input.edge_attr", 1, d, rng)?;
        let mut feat = |name: &str, dim: usize, s: &mut ParameterStore<T>| -> Result<Option<(Linear, Linear)>> {
            if dim == 0 {
                return Ok(None);
            }
            let stream = s.add_linear(&format!("input.{name}_feat"), dim, d, rng)?;
            let film = s.add_linear(&format!("film.{name}"), dim, 2 * d, rng)?;
            Ok(Some((stream, film)))
        };
        let left_feat = feat("left", left_feature_dim, &mut s)?;
        let right_feat = feat("right", right_feature_dim, &mut s)?;
        let fl = usize::from(left_feature_dim > 0);
        let fr = usize::from(right_feature_dim > 0);
        let left_mix = s.add_linear("input.left_mix", (2 + fl) * d + config.budget_encoding_dim + COND_DIM, d, rng)?;
        let right_mix = s.add_linear("input.right_mix", (2 + fr) * d + COND_DIM, d, rng)?;
        let edge_mix = s.add_linear("input.edge_mix", 3 * d + COND_DIM, d, rng)?;
        let mut blocks = Vec::with_capacity(config.num_layers);
        for i in 0..config.num_layers {
            blocks.push(Block {
                edge_in: s.add_linear(&format!("layer.{i}.edge.0"), 3 * d, h, rng)?,
                edge_out: s.add_linear(&format!("layer.{i}.edge.1"), h, d, rng)?,
                left_in: s.add_linear(&format!("layer.{i}.left.0"), 2 * d, h, rng)?,
                left_out: s.add_linear(&format!("layer.{i}.left.1"), h, d, rng)?,
                right_in: s.add_linear(&format!("layer.{i}.right.0"), 2 * d, h, rng)?,
                right_out: s.add_linear(&format!("layer.{i}.right.1"), h, d, rng)?,
            });
        }
        let left_head = s.add_linear("head.left", d, 2 + left_feature_dim, rng)?;
        let right_head = s.add_linear("head.right", d, 1 + right_feature_dim, rng)?;
        let edge_head = s.add_linear("head.edge", d, 1, rng)?;
        let layout = Layout {
            phi_in,
            phi_out,
            rho,
            left_attr,
            right_attr,
            edge_attr,
            left_feat,
            right_feat,
            left_mix,
            right_mix,
            edge_mix,
            blocks,
            left_head,
            right_head,
            edge_head,
        };
        Ok(Self { config, left_feature_dim, right_feature_dim, params: s, layout })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn left_feature_dim(&self) -> usize {
        self.left_feature_dim
    }

    pub fn right_feature_dim(&self) -> usize {
        self.right_feature_dim
    }

    fn check_input(&self, x: &DenoiserInput<T>) -> Result<()> {
        let (nl, nr, ne) = (x.graph.num_left(), x.graph.num_right(), x.graph.num_edges());
        let k = self.config.embedding_width();
        let checks = [
            ("left state", x.left_state.shape(), (nl, 2 + self.left_feature_dim)),
            ("right state", x.right_state.shape(), (nr, 1 + self.right_feature_dim)),
            ("edge state", x.edge_state.shape(), (ne, 1)),
            ("parent left features", x.parent_left_features.shape(), (nl, self.left_feature_dim)),
            ("parent right features", x.parent_right_features.shape(), (nr, self.right_feature_dim)),
            ("left embeddings", x.embeddings.left.shape(), (nl, k)),
            ("right embeddings", x.embeddings.right.shape(), (nr, k)),
            ("budget encoding", x.budget_encoding.shape(), (nl, self.config.budget_encoding_dim)),
        ];
        for (what, got, want) in checks {
            if got != want {
                return Err(Error::DimensionMismatch { what, expected: want.0 * want.1, actual: got.0 * got.1 });
            }
        }
        if x.embeddings.eigenvalues.len() != self.config.spectral_k {
            let expected = self.config.spectral_k;
            return Err(Error::DimensionMismatch { what: "eigenvalues", expected, actual: x.embeddings.eigenvalues.len() });
        }
        Ok(())
    }

    fn mlp(&self, tape: &mut Tape<T>, a: Linear, b: Linear, x: Var) -> Var {
        let h = tape.linear(&self.params, a, x);
        let h = tape.silu(h);
        tape.linear(&self.params, b, h)
    }

    /// Sign-invariant encoder over raw spectral rows: every eigenvector entry
    /// `u` with eigenvalue `l` maps to `phi([u, l]) + phi([-u, l])`; the
    /// per-eigenvector codes are concatenated and mixed by a linear map.
    fn encode(&self, tape: &mut Tape<T>, rows: &Matrix<T>, eigenvalues: &[T]) -> Var {
        let (n, k) = rows.shape();
        let mut pos = Matrix::zeros(n * k, 2);
        for i in 0..n {
            for j in 0..k {
                pos[(i * k + j, 0)] = rows[(i, j)];
                pos[(i * k + j, 1)] = eigenvalues.get(j).copied().unwrap_or_else(T::zero);
            }
        }
        let neg = Matrix::from_fn(n * k, 2, |r, c| if c == 0 { -pos[(r, 0)] } else { pos[(r, 1)] });
        let mut phi = |m: Matrix<T>| {
            let x = tape.constant(m);
            let h = tape.linear(&self.params, self.layout.phi_in, x);
            let h = tape.tanh(h);
            tape.linear(&self.params, self.layout.phi_out, h)
        };
        let a = phi(pos);
        let b = phi(neg);
        let s = tape.add(a, b);
        let s = tape.reshape(s, n, k * self.config.phi_dim);
        tape.linear(&self.params, self.layout.rho, s)
    }

    /// Encoded embeddings for all nodes, left rows first.
    pub fn encode_embeddings(&self, rows: &SpectralRows<T>) -> Matrix<T> {
        let mut tape = Tape::new();
        let all = Matrix::from_rows(&[rows.left.to_rows(), rows.right.to_rows()].concat(), rows.width())
            .expect("consistent widths");
        let v = self.encode(&mut tape, &all, &rows.eigenvalues);
        tape.value(v).clone()
    }

    fn feature_stream(&self, tape: &mut Tape<T>, lin: (Linear, Linear), noised: Matrix<T>, parent: &Matrix<T>) -> Var {
        let d = self.config.hidden_dim;
        let x = tape.constant(noised);
        let stream = tape.linear(&self.params, lin.0, x);
        let p = tape.constant(parent.clone());
        let gb = tape.linear(&self.params, lin.1, p);
        let gamma = tape.columns(gb, 0, d);
        let beta = tape.columns(gb, d, d);
        let ones = tape.constant(Matrix::filled(parent.rows(), d, T::one()));
        let scale = tape.add(gamma, ones);
        let modulated = tape.mul(stream, scale);
        tape.add(modulated, beta)
    }

    /// Records the forward pass on `tape`.
    pub fn forward_tape(&self, tape: &mut Tape<T>, x: &DenoiserInput<T>) -> Result<OutputVars> {
        self.check_input(x)?;
        let (nl, nr) = (x.graph.num_left(), x.graph.num_right());
        let src: Vec<usize> = x.graph.edges().iter().map(|e| e.0).collect();
        let dst: Vec<usize> = x.graph.edges().iter().map(|e| e.1).collect();
        let cond_row = [x.t, x.reduction, T::of((x.target_size.max(1) as f64).ln() / 8.0)];
        let cond = |n: usize| Matrix::from_fn(n, COND_DIM, |_, c| cond_row[c]);

        let all_rows = Matrix::from_rows(&[x.embeddings.left.to_rows(), x.embeddings.right.to_rows()].concat(), self.config.embedding_width())
            .ok_or(Error::DimensionMismatch { what: "embedding rows", expected: self.config.embedding_width(), actual: 0 })?;
        let emb = self.encode(tape, &all_rows, &x.embeddings.eigenvalues);
        let emb_l = tape.gather(emb, &(0..nl).collect::<Vec<_>>());
        let emb_r = tape.gather(emb, &(nl..nl + nr).collect::<Vec<_>>());

        let la = tape.constant(x.left_state.columns(0, 2));
        let la = tape.linear(&self.params, self.layout.left_attr, la);
        let mut left_parts = vec![la];
        if let Some(lin) = self.layout.left_feat {
            let f = x.left_state.columns(2, self.left_feature_dim);
            left_parts.push(self.feature_stream(tape, lin, f, &x.parent_left_features));
        }
        let be = tape.constant(x.budget_encoding.clone());
        let cl = tape.constant(cond(nl));
        left_parts.extend([emb_l, be, cl]);
        let hl = tape.hcat(&left_parts);
        let mut hl = tape.linear(&self.params, self.layout.left_mix, hl);

        let ra = tape.constant(x.right_state.columns(0, 1));
        let ra = tape.linear(&self.params, self.layout.right_attr, ra);
        let mut right_parts = vec![ra];
        if let Some(lin) = self.layout.right_feat {
            let f = x.right_state.columns(1, self.right_feature_dim);
            right_parts.push(self.feature_stream(tape, lin, f, &x.parent_right_features));
        }
        let cr = tape.constant(cond(nr));
        right_parts.extend([emb_r, cr]);
        let hr = tape.hcat(&right_parts);
        let mut hr = tape.linear(&self.params, self.layout.right_mix, hr);

        let ea = tape.constant(x.edge_state.clone());
        let ea = tape.linear(&self.params, self.layout.edge_attr, ea);
        let es = tape.gather(emb_l, &src);
        let ed = tape.gather(emb_r, &dst);
        let ce = tape.constant(cond(src.len()));
        let he = tape.hcat(&[ea, es, ed, ce]);
        let mut he = tape.linear(&self.params, self.layout.edge_mix, he);

        for block in &self.layout.blocks {
            let hs = tape.gather(hl, &src);
            let hd = tape.gather(hr, &dst);
            let m = tape.hcat(&[he, hs, hd]);
            let upd = self.mlp(tape, block.edge_in, block.edge_out, m);
            he = tape.add(he, upd);
            let agg_l = tape.scatter_sum(he, &src, nl);
            let agg_r = tape.scatter_sum(he, &dst, nr);
            let l_in = tape.hcat(&[hl, agg_l]);
            let upd = self.mlp(tape, block.left_in, block.left_out, l_in);
            hl = tape.add(hl, upd);
            let r_in = tape.hcat(&[hr, agg_r]);
            let upd = self.mlp(tape, block.right_in, block.right_out, r_in);
            hr = tape.add(hr, upd);
        }

        let out = OutputVars {
            left: tape.linear(&self.params, self.layout.left_head, hl),
            right: tape.linear(&self.params, self.layout.right_head, hr),
            edge: tape.linear(&self.params, self.layout.edge_head, he),
        };
        for (what, v) in [("left head", out.left), ("right head", out.right), ("edge head", out.edge)] {
            if !tape.value(v).is_finite() {
                return Err(Error::NonFinite(format!("{what} activations")));
            }
        }
        Ok(out)
    }

    pub fn forward(&self, x: &DenoiserInput<T>) -> Result<DenoiserOutput<T>> {
        let mut tape = Tape::new();
        let v = self.forward_tape(&mut tape, x)?;
        Ok(DenoiserOutput { left: tape.value(v.left).clone(), right: tape.value(v.right).clone(), edge: tape.value(v.edge).clone() })
    }

    /// Sum of the per-head mean squared errors, unit weights. Heads are the
    /// left expansion, split, left features, right expansion, right features
    /// and edge columns.
    pub fn loss_tape(&self, tape: &mut Tape<T>, out: OutputVars, targets: &HeadTargets<T>) -> Result<Var> {
        let mut parts = Vec::new();
        let mut head = |tape: &mut Tape<T>, v: Var, target: &Matrix<T>, start: usize, width: usize| -> Result<()> {
            if width == 0 {
                return Ok(());
            }
            let p = tape.columns(v, start, width);
            parts.push(tape.masked_mse(p, &target.columns(start, width), None)?);
            Ok(())
        };
        head(tape, out.left, &targets.left, 0, 1)?;
        head(tape, out.left, &targets.left, 1, 1)?;
        head(tape, out.left, &targets.left, 2, self.left_feature_dim)?;
        head(tape, out.right, &targets.right, 0, 1)?;
        head(tape, out.right, &targets.right, 1, self.right_feature_dim)?;
        head(tape, out.edge, &targets.edge, 0, 1)?;
        Ok(tape.sum_scalars(&parts))
    }

    /// Forward, loss and backward for one example; gradients are added to
    /// the parameter store. Returns the loss.
    pub fn accumulate_gradients(&mut self, x: &DenoiserInput<T>, targets: &HeadTargets<T>) -> Result<T> {
        let mut tape = Tape::new();
        let out = self.forward_tape(&mut tape, x)?;
        let loss = self.loss_tape(&mut tape, out, targets)?;
        let value = tape.value(loss)[(0, 0)];
        if !value.is_finite() {
            return Err(Error::NonFinite("training loss".into()));
        }
        tape.backward(loss, &mut self.params)?;
        Ok(value)
    }

    /// Writes a JSON manifest to `path` and the little-endian parameter data
    /// next to it with a `.bin` extension.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut data = Vec::with_capacity(self.params.num_scalars() * T::WIDTH);
        let mut tensors = Vec::with_capacity(self.params.len());
        for p in self.params.iter() {
            tensors.push(TensorEntry { name: p.name.clone(), shape: [p.value.rows(), p.value.cols()], offset: data.len() });
            for &x in p.value.as_slice() {
                data.extend(x.to_le_bytes_vec());
            }
        }
        let manifest = Manifest {
            version: CHECKPOINT_VERSION,
            dtype: T::DTYPE.to_string(),
            config: self.config.clone(),
            left_feature_dim: self.left_feature_dim,
            right_feature_dim: self.right_feature_dim,
            step: self.params.step(),
            tensors,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, serde_json::to_vec_pretty(&manifest)?)?;
        let mut f = fs::File::create(data_path(path))?;
        f.write_all(&data)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_slice(&fs::read(path)?)?;
        if manifest.version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!("checkpoint version {} (expected {CHECKPOINT_VERSION})", manifest.version)));
        }
        if manifest.dtype != T::DTYPE {
            return Err(Error::Parse(format!("checkpoint dtype {} (expected {})", manifest.dtype, T::DTYPE)));
        }
        let data = fs::read(data_path(path))?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut model = Self::new(manifest.config, manifest.left_feature_dim, manifest.right_feature_dim, &mut rng)?;
        if manifest.tensors.len() != model.params.len() {
            return Err(Error::Parse(format!("checkpoint has {} tensors, model {}", manifest.tensors.len(), model.params.len())));
        }
        for entry in &manifest.tensors {
            let id = model.params.id(&entry.name).ok_or_else(|| Error::Parse(format!("unknown tensor {}", entry.name)))?;
            let shape = model.params.get(id).value.shape();
            if shape != (entry.shape[0], entry.shape[1]) {
                return Err(Error::Parse(format!("tensor {} has shape {:?}, model {:?}", entry.name, entry.shape, shape)));
            }
            let len = shape.0 * shape.1 * T::WIDTH;
            let bytes = data
                .get(entry.offset..entry.offset + len)
                .ok_or_else(|| Error::Parse(format!("tensor {} overruns the data file", entry.name)))?;
            let values: Vec<T> = bytes.chunks_exact(T::WIDTH).map(T::from_le_slice).collect();
            *model.params.value_mut(id) = Matrix::from_vec(shape.0, shape.1, values);
        }
        model.params.set_step(manifest.step);
        Ok(model)
    }
}

fn data_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".bin");
    PathBuf::from(p)
}
