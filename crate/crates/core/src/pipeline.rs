//! End-to-end training and sampling, inpainting, plain-text configuration
//! and artifact export.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::AdamConfig;
use crate::coarsening::{refinement_targets, sample_coarsening_sequence, CoarseningCache, CoarseningParams, CoarseningSequence};
use crate::data::{load_graph_dir, load_mesh, write_dot, write_obj, Dataset, GraphKind};
use crate::denoiser::{budget_encoding, spectral_rows, Denoiser, DenoiserConfig, DenoiserInput, HeadTargets, SpectralRows};
use crate::error::{Error, Result};
use crate::expansion::{expand, perturb_expand, refine, ExpansionVectors, RefinementDecision};
use crate::flow::{integrate, interpolate, project_split_groups, sample_prior, FlowHeadSpec, HeadKind};
use crate::hypergraph::{collapse_bipartite, read_jsonl, write_jsonl, BipartiteGraph, Hypergraph, UnionFind};
use crate::matrix::Matrix;
use crate::metrics::{chamfer_nearest, evaluate_sets, MetricReport};
use crate::scalar::Scalar;

pub const DEFAULT_FLOW_STEPS: usize = 25;

/// Right expansion scores below the first bound give one child, below the
/// second two, otherwise three.
pub const RIGHT_FACTOR_THRESHOLDS: (f64, f64) = (1.66, 2.33);

/// Edges whose keep probability exceeds this survive refinement.
pub const EDGE_KEEP_THRESHOLD: f64 = 0.5;

/// Decay of the exponential moving average used as the running loss.
pub const LOSS_SMOOTHING: f64 = 0.98;

/// Learning-rate schedule over the optimizer steps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine decay from `lr` to zero over the run.
    Cosine,
}

impl LrSchedule {
    /// Rate for 1-based `step` of `steps`.
    pub fn rate(self, lr: f64, step: usize, steps: usize) -> f64 {
        match self {
            Self::Constant => lr,
            Self::Cosine => {
                let progress = (step - 1) as f64 / steps.max(1) as f64;
                0.5 * lr * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        }
    }
}

impl FromStr for LrSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Self::Constant),
            "cosine" => Ok(Self::Cosine),
            other => Err(Error::UnknownKind { what: "lr schedule", name: other.to_string() }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Directory written by [`Dataset::save`].
    pub dataset: PathBuf,
    pub coarsening: CoarseningParams,
    pub denoiser: DenoiserConfig,
    pub flow_steps: usize,
    pub lr: f64,
    pub lr_schedule: LrSchedule,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub perturb_radius: usize,
    pub perturb_prob: f64,
    pub checkpoint: Option<PathBuf>,
    /// Steps between checkpoints; 0 saves only at the end.
    pub checkpoint_every: usize,
    pub loss_log: Option<PathBuf>,
    /// Steps between validation runs; 0 disables validation.
    pub val_every: usize,
    pub val_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::from("data"),
            coarsening: CoarseningParams::default(),
            denoiser: DenoiserConfig::default(),
            flow_steps: DEFAULT_FLOW_STEPS,
            lr: 1e-3,
            lr_schedule: LrSchedule::Constant,
            steps: 1000,
            batch_size: 4,
            seed: 0,
            perturb_radius: 2,
            perturb_prob: 0.5,
            checkpoint: None,
            checkpoint_every: 0,
            loss_log: None,
            val_every: 0,
            val_samples: 16,
        }
    }
}

fn parse_field<V: FromStr>(key: &str, raw: &str) -> Result<V>
where
    V::Err: fmt::Display,
{
    raw.parse().map_err(|e| Error::Parse(format!("{key} = {raw}: {e}")))
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidParameter("steps must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidParameter(format!("lr must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 || self.flow_steps == 0 {
            return Err(Error::InvalidParameter("batch_size and flow_steps must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.perturb_prob) {
            return Err(Error::InvalidProbability(self.perturb_prob));
        }
        self.coarsening.validate()?;
        self.denoiser.validate()
    }

    /// Reads a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut c: Self = fs::read_to_string(path)?.parse()?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut c.dataset);
        c.checkpoint.as_mut().map(resolve);
        c.loss_log.as_mut().map(resolve);
        Ok(c)
    }

    fn perturbation(&self) -> Option<(usize, f64)> {
        (self.perturb_prob > 0.0).then_some((self.perturb_radius, self.perturb_prob))
    }
}

/// `key = value` lines; `#` starts a comment. Unlisted keys keep their
/// defaults.
impl FromStr for TrainConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut c = Self::default();
        for (ln, line) in s.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| Error::Parse(format!("line {}: expected key = value", ln + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let d = &mut c.denoiser;
            let cp = &mut c.coarsening;
            match key {
                "dataset" => c.dataset = PathBuf::from(value),
                "steps" => c.steps = parse_field(key, value)?,
                "lr" => c.lr = parse_field(key, value)?,
                "lr_schedule" => c.lr_schedule = value.parse()?,
                "batch_size" => c.batch_size = parse_field(key, value)?,
                "seed" => c.seed = parse_field(key, value)?,
                "flow_steps" => c.flow_steps = parse_field(key, value)?,
                "perturb_radius" => c.perturb_radius = parse_field(key, value)?,
                "perturb_prob" => c.perturb_prob = parse_field(key, value)?,
                "checkpoint" => c.checkpoint = Some(PathBuf::from(value)),
                "checkpoint_every" => c.checkpoint_every = parse_field(key, value)?,
                "loss_log" => c.loss_log = Some(PathBuf::from(value)),
                "val_every" => c.val_every = parse_field(key, value)?,
                "val_samples" => c.val_samples = parse_field(key, value)?,
                "rho_min" => cp.rho_min = parse_field(key, value)?,
                "rho_max" => cp.rho_max = parse_field(key, value)?,
                "lambda" => cp.lambda = parse_field(key, value)?,
                "preserve_k" => cp.preserve_k = parse_field(key, value)?,
                "small_graph_cutoff" => cp.small_graph_cutoff = parse_field(key, value)?,
                "hidden_dim" => d.hidden_dim = parse_field(key, value)?,
                "num_layers" => d.num_layers = parse_field(key, value)?,
                "spectral_k" => d.spectral_k = parse_field(key, value)?,
                "mlp_hidden" => d.mlp_hidden = parse_field(key, value)?,
                "phi_dim" => d.phi_dim = parse_field(key, value)?,
                "budget_encoding_dim" => d.budget_encoding_dim = parse_field(key, value)?,
                "budget_base_freq" => d.budget_base_freq = parse_field(key, value)?,
                other => return Err(Error::UnknownKind { what: "config key", name: other.to_string() }),
            }
        }
        c.validate()?;
        Ok(c)
    }
}

/// Left factor 2 maps to 1, factor 1 to -1.
pub fn encode_left_factor(factor: usize) -> f64 {
    if factor >= 2 {
        1.0
    } else {
        -1.0
    }
}

/// Right factors 1, 2, 3 map to -1, 0, 1.
pub fn encode_right_factor(factor: usize) -> f64 {
    factor as f64 - 2.0
}

/// Right factor from a score on the factor scale (encoded value + 2).
pub fn decode_right_factor(score: f64) -> usize {
    let (lo, hi) = RIGHT_FACTOR_THRESHOLDS;
    if score < lo {
        1
    } else if score < hi {
        2
    } else {
        3
    }
}

/// Keep decision from an encoded edge value.
pub fn decode_edge(encoded: f64) -> bool {
    (encoded + 1.0) / 2.0 > EDGE_KEEP_THRESHOLD
}

/// Nodes allowed to split: refined budget of at least 2.
pub fn expansion_eligible(budgets: &[usize]) -> Vec<bool> {
    budgets.iter().map(|&b| b >= 2).collect()
}

/// Expansion vector giving factor 2 to the `n_plus` highest-scoring eligible
/// nodes; ties go to the lower index.
pub fn select_top(scores: &[f64], eligible: &[bool], n_plus: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).filter(|&i| eligible[i]).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut v = vec![1; scores.len()];
    for &i in order.iter().take(n_plus) {
        v[i] = 2;
    }
    v
}

/// Smallest `n_plus` with `n_plus >= rho (n + n_plus)`, capped at `target - n`,
/// and at least 1 while the target is not reached.
pub fn expansion_count(n: usize, target: usize, rho: f64) -> usize {
    if n >= target {
        return 0;
    }
    let raw = (rho * n as f64 / (1.0 - rho) - 1e-9).ceil().max(1.0) as usize;
    raw.min(target - n)
}

/// One supervised denoising problem taken from a coarsening sequence.
#[derive(Clone, Debug)]
pub struct TrainingExample<T> {
    /// Graph whose expansion the network sees.
    pub coarse: BipartiteGraph<T>,
    pub expansion: ExpansionVectors,
    pub expanded: BipartiteGraph<T>,
    pub targets: HeadTargets<T>,
    pub target_size: usize,
    pub reduction: f64,
}

/// Builds the example for level `l`: the expansion of level `l + 1` (or of
/// the minimal graph when `l` is the coarsest level) is refined into level
/// `l`, and level `l`'s own expansion factors are predicted alongside.
pub fn training_example<T: Scalar, R: Rng + ?Sized>(
    seq: &CoarseningSequence<T>,
    l: usize,
    perturb: Option<(usize, f64)>,
    rng: &mut R,
) -> Result<TrainingExample<T>> {
    let depth = seq.depth();
    if l > depth {
        return Err(Error::InvalidParameter(format!("level {l} beyond depth {depth}")));
    }
    let finer = &seq.levels[l].bipartite;
    let (coarse, expansion) = if l == depth {
        if (finer.num_left(), finer.num_right(), finer.num_edges()) != (1, 1, 1) {
            return Err(Error::InvalidParameter("coarsest level must be a single incidence".into()));
        }
        let minimal = BipartiteGraph::minimal(finer.total_budget(), finer.left_feature_dim(), finer.right_feature_dim());
        (minimal, ExpansionVectors::ones(1, 1))
    } else {
        (seq.levels[l + 1].bipartite.clone(), seq.levels[l + 1].expansion.clone())
    };
    let expanded = match perturb {
        Some((radius, p)) => perturb_expand(&coarse, &expansion, radius, p, rng)?,
        None => expand(&coarse, &expansion)?,
    };
    let decision = refinement_targets(&expanded, finer);
    let next = &seq.levels[l].expansion;
    let (fl, fr) = (finer.left_feature_dim().unwrap_or(0), finer.right_feature_dim().unwrap_or(0));
    let lf = finer.left_features();
    let rf = finer.right_features();
    let left = Matrix::from_fn(expanded.num_left(), 2 + fl, |i, c| match c {
        0 => T::of(encode_left_factor(next.left[i])),
        1 => T::of(2.0) * decision.budget_split[i] - T::one(),
        _ => lf.expect("feature columns imply features")[(i, c - 2)],
    });
    let right = Matrix::from_fn(expanded.num_right(), 1 + fr, |i, c| match c {
        0 => T::of(encode_right_factor(next.right[i])),
        _ => rf.expect("feature columns imply features")[(i, c - 1)],
    });
    let edge = Matrix::from_fn(expanded.num_edges(), 1, |e, _| if decision.edge_keep[e] { T::one() } else { -T::one() });
    Ok(TrainingExample {
        coarse,
        expansion,
        expanded,
        targets: HeadTargets { left, right, edge },
        target_size: seq.levels[0].bipartite.num_left(),
        reduction: seq.reduction_fraction(l),
    })
}

/// Prior draws for the three heads of an expanded graph.
pub fn sample_head_priors<T: Scalar, R: Rng + ?Sized>(
    expanded: &BipartiteGraph<T>,
    left_feature_dim: usize,
    right_feature_dim: usize,
    rng: &mut R,
) -> Result<[Matrix<T>; 3]> {
    let (nl, nr, ne) = (expanded.num_left(), expanded.num_right(), expanded.num_edges());
    let gauss = FlowHeadSpec::for_kind(HeadKind::LeftExpansion);
    let lexp = sample_prior(&gauss, nl, 1, &[], rng)?;
    let split = sample_prior(&FlowHeadSpec::for_kind(HeadKind::BudgetSplit), nl, 1, &expanded.left_groups(), rng)?;
    let lfeat = sample_prior(&gauss, nl, left_feature_dim, &[], rng)?;
    let right = sample_prior(&gauss, nr, 1 + right_feature_dim, &[], rng)?;
    let edge = sample_prior(&gauss, ne, 1, &[], rng)?;
    Ok([Matrix::hcat(&[&lexp, &split, &lfeat]), right, edge])
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn swap_rows<T: Scalar>(m: &mut Matrix<T>, i: usize, j: usize) {
    let ri = m.row(i).to_vec();
    let rj = m.row(j).to_vec();
    m.row_mut(i).copy_from_slice(&rj);
    m.row_mut(j).copy_from_slice(&ri);
}

/// Per-cluster OT coupling of prior noise against targets.
///
/// A sibling pair swaps its two node rows together with the noise of its
/// mirrored incidences (edges to a common neighbor) when that lowers the
/// total squared distance. Left pairs are coupled first, then right pairs.
/// Singletons and triples are left alone. Targets never move.
pub fn couple_noise<T: Scalar>(
    expanded: &BipartiteGraph<T>,
    noise: &mut [Matrix<T>; 3],
    targets: &HeadTargets<T>,
) -> Result<()> {
    if noise[0].shape() != targets.left.shape()
        || noise[1].shape() != targets.right.shape()
        || noise[2].shape() != targets.edge.shape()
    {
        return Err(Error::DimensionMismatch { what: "coupling noise", expected: targets.left.rows(), actual: noise[0].rows() });
    }
    let left_adj = expanded.left_neighbors();
    for g in expanded.left_groups() {
        let [i, j] = g[..] else { continue };
        let mirrored: Vec<(usize, usize)> = left_adj[i]
            .iter()
            .filter_map(|&r| Some((expanded.edge_index(i, r)?, expanded.edge_index(j, r)?)))
            .collect();
        couple_pair(noise, 0, &targets.left, &targets.edge, (i, j), &mirrored);
    }
    let right_adj = expanded.right_neighbors();
    for g in expanded.right_groups() {
        let [i, j] = g[..] else { continue };
        let mirrored: Vec<(usize, usize)> = right_adj[i]
            .iter()
            .filter_map(|&l| Some((expanded.edge_index(l, i)?, expanded.edge_index(l, j)?)))
            .collect();
        couple_pair(noise, 1, &targets.right, &targets.edge, (i, j), &mirrored);
    }
    Ok(())
}

fn couple_pair<T: Scalar>(
    noise: &mut [Matrix<T>; 3],
    head: usize,
    node_targets: &Matrix<T>,
    edge_targets: &Matrix<T>,
    (i, j): (usize, usize),
    mirrored: &[(usize, usize)],
) {
    let (z, ze) = (&noise[head], &noise[2]);
    let mut keep = sq_dist(z.row(i), node_targets.row(i)) + sq_dist(z.row(j), node_targets.row(j));
    let mut swap = sq_dist(z.row(j), node_targets.row(i)) + sq_dist(z.row(i), node_targets.row(j));
    for &(a, b) in mirrored {
        keep += sq_dist(ze.row(a), edge_targets.row(a)) + sq_dist(ze.row(b), edge_targets.row(b));
        swap += sq_dist(ze.row(b), edge_targets.row(a)) + sq_dist(ze.row(a), edge_targets.row(b));
    }
    if swap < keep {
        swap_rows(&mut noise[head], i, j);
        for &(a, b) in mirrored {
            swap_rows(&mut noise[2], a, b);
        }
    }
}

/// Assembles the network input for an expanded graph in flow state `state`.
#[allow(clippy::too_many_arguments)]
pub fn build_input<T: Scalar>(
    config: &DenoiserConfig,
    expanded: &BipartiteGraph<T>,
    state: [Matrix<T>; 3],
    t: T,
    embeddings: SpectralRows<T>,
    target_size: usize,
    reduction: f64,
) -> Result<DenoiserInput<T>> {
    let [left_state, right_state, edge_state] = state;
    let parent = |m: Option<&Matrix<T>>, rows: usize| m.cloned().unwrap_or_else(|| Matrix::zeros(rows, 0));
    Ok(DenoiserInput {
        t,
        left_state,
        right_state,
        edge_state,
        parent_left_features: parent(expanded.left_features(), expanded.num_left()),
        parent_right_features: parent(expanded.right_features(), expanded.num_right()),
        embeddings,
        budget_encoding: budget_encoding(expanded.left_budgets(), config.budget_encoding_dim, config.budget_base_freq)?,
        target_size,
        reduction: T::of(reduction),
        graph: expanded.clone(),
    })
}

/// Input and targets for one training step: uniform `t`, OT-coupled noise,
/// linear interpolation towards the targets.
pub fn noised_example<T: Scalar, R: Rng + ?Sized>(
    model: &Denoiser<T>,
    ex: &TrainingExample<T>,
    rng: &mut R,
) -> Result<(DenoiserInput<T>, HeadTargets<T>)> {
    let cfg = model.config();
    let embeddings = spectral_rows(&ex.coarse, cfg.spectral_k, &ex.expansion, rng)?;
    let mut noise = sample_head_priors(&ex.expanded, model.left_feature_dim(), model.right_feature_dim(), rng)?;
    couple_noise(&ex.expanded, &mut noise, &ex.targets)?;
    let t = T::of(rng.random::<f64>());
    let [zl, zr, ze] = &noise;
    let state = [
        interpolate(zl, &ex.targets.left, t)?,
        interpolate(zr, &ex.targets.right, t)?,
        interpolate(ze, &ex.targets.edge, t)?,
    ];
    let input = build_input(cfg, &ex.expanded, state, t, embeddings, ex.target_size, ex.reduction)?;
    Ok((input, ex.targets.clone()))
}

/// Running loss: the bias-corrected exponential moving average
/// `m_t = beta m_{t-1} + (1 - beta) x_t`, reported as `m_t / (1 - beta^t)`,
/// so the first entry equals the first loss.
pub fn smoothed_losses(losses: &[f64], beta: f64) -> Vec<f64> {
    let mut m = 0.0;
    let mut decay = 1.0;
    losses
        .iter()
        .map(|&x| {
            m = beta * m + (1.0 - beta) * x;
            decay *= beta;
            m / (1.0 - decay)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Mean loss over the batch, one entry per optimizer step.
    pub losses: Vec<f64>,
    /// Validation score per validation run (lower is better).
    pub validation: Vec<(usize, f64)>,
    pub best_validation: Option<f64>,
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Degree Wasserstein distance plus the invalid fraction when a kind is known.
fn validation_score<T: Scalar>(
    model: &Denoiser<T>,
    val: &[Hypergraph<T>],
    count: usize,
    kind: Option<GraphKind>,
    options: &SampleOptions,
    seed: u64,
) -> Result<f64> {
    let sizes: Vec<usize> = (0..count).map(|i| val[i % val.len()].num_nodes()).collect();
    let generated: Vec<Hypergraph<T>> =
        sample_sizes(model, &sizes, seed, options)?.into_iter().map(|(h, _)| h).collect();
    let report = evaluate_sets(&generated, val, &sizes, kind)?;
    Ok(report.degree_wasserstein + report.validity_fraction.map_or(0.0, |v| 1.0 - v))
}

/// Trains a fresh model on in-memory graphs. Checkpoints, the loss log and
/// validation follow `config`; `config.dataset` is ignored.
pub fn train_model<T: Scalar>(
    config: &TrainConfig,
    train: &[Hypergraph<T>],
    val: &[Hypergraph<T>],
    kind: Option<GraphKind>,
) -> Result<(Denoiser<T>, TrainReport)> {
    config.validate()?;
    let first = train.first().ok_or(Error::Empty("training set"))?;
    let fl = first.node_features().map_or(0, Matrix::cols);
    let fr = first.hyperedge_features().map_or(0, Matrix::cols);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = Denoiser::new(config.denoiser.clone(), fl, fr, &mut rng)?;
    let cache = CoarseningCache::new(train.to_vec(), config.coarsening.clone())?;
    let adam = AdamConfig::default();
    let options = SampleOptions::from_coarsening(&config.coarsening, config.flow_steps);
    let mut log = match &config.loss_log {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            let mut w = BufWriter::new(fs::File::create(p)?);
            writeln!(w, "step,loss")?;
            Some(w)
        }
        None => None,
    };
    let mut report = TrainReport { losses: Vec::with_capacity(config.steps), validation: Vec::new(), best_validation: None };
    for step in 1..=config.steps {
        model.params.zero_grad();
        let mut total = 0.0;
        for _ in 0..config.batch_size {
            let id = rng.random_range(0..cache.num_graphs());
            let cached = cache.take(id, &mut rng)?;
            let ex = training_example(&cached.sequence, cached.level, config.perturbation(), &mut rng)?;
            let (input, targets) = noised_example(&model, &ex, &mut rng)?;
            match model.accumulate_gradients(&input, &targets) {
                Ok(loss) => total += loss.as_f64(),
                Err(e @ Error::NonFinite(_)) => return Err(dump_state(&model, config, step, e)),
                Err(e) => return Err(e),
            }
        }
        if let Err(e) = model.params.optimizer_step(config.lr_schedule.rate(config.lr, step, config.steps), &adam) {
            return Err(dump_state(&model, config, step, e));
        }
        let loss = total / config.batch_size as f64;
        report.losses.push(loss);
        if let Some(w) = log.as_mut() {
            writeln!(w, "{step},{loss}")?;
        }
        if let Some(ckpt) = &config.checkpoint {
            if config.checkpoint_every > 0 && step % config.checkpoint_every == 0 {
                model.save(ckpt)?;
            }
        }
        if config.val_every > 0 && step % config.val_every == 0 && !val.is_empty() && config.val_samples > 0 {
            let score = validation_score(&model, val, config.val_samples, kind, &options, config.seed ^ step as u64)?;
            report.validation.push((step, score));
            if report.best_validation.is_none_or(|b| score < b) {
                report.best_validation = Some(score);
                if let Some(ckpt) = &config.checkpoint {
                    model.save(&suffixed(ckpt, ".best"))?;
                }
            }
        }
    }
    if let Some(w) = log.as_mut() {
        w.flush()?;
    }
    if let Some(ckpt) = &config.checkpoint {
        model.save(ckpt)?;
    }
    Ok((model, report))
}

/// Saves the model next to the checkpoint (or loss log) on a fatal
/// numerical error and returns the error annotated with the dump location.
fn dump_state<T: Scalar>(model: &Denoiser<T>, config: &TrainConfig, step: usize, err: Error) -> Error {
    let Some(base) = config.checkpoint.as_ref().or(config.loss_log.as_ref()) else {
        return Error::NonFinite(format!("{err} at step {step}"));
    };
    let path = suffixed(base, ".crash");
    match model.save(&path) {
        Ok(()) => Error::NonFinite(format!("{err} at step {step}; state saved to {}", path.display())),
        Err(save) => Error::NonFinite(format!("{err} at step {step}; state dump failed: {save}")),
    }
}

/// Loads the dataset named by the config and trains in double precision.
pub fn train(config: &TrainConfig) -> Result<(Denoiser<f64>, TrainReport)> {
    let data: Dataset<f64> = Dataset::load(&config.dataset)?;
    train_model(config, &data.train, &data.val, Some(data.spec.kind))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleOptions {
    pub rho_min: f64,
    pub rho_max: f64,
    /// Below this many left nodes the reduction fraction is fixed to
    /// `rho_max`, mirroring the coarsening schedule.
    pub small_graph_cutoff: usize,
    pub flow_steps: usize,
}

impl Default for SampleOptions {
    fn default() -> Self {
        let c = CoarseningParams::default();
        Self::from_coarsening(&c, DEFAULT_FLOW_STEPS)
    }
}

impl SampleOptions {
    pub fn from_coarsening(c: &CoarseningParams, flow_steps: usize) -> Self {
        Self { rho_min: c.rho_min, rho_max: c.rho_max, small_graph_cutoff: c.small_graph_cutoff, flow_steps }
    }

    fn draw_rho<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> f64 {
        if n < self.small_graph_cutoff || self.rho_min == self.rho_max {
            self.rho_max
        } else {
            rng.random_range(self.rho_min..=self.rho_max)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho_min > 0.0 && self.rho_min <= self.rho_max && self.rho_max < 1.0) {
            return Err(Error::InvalidParameter(format!("reduction range [{}, {}]", self.rho_min, self.rho_max)));
        }
        if self.flow_steps == 0 {
            return Err(Error::InvalidParameter("flow_steps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleRequest {
    pub n_nodes: usize,
    pub count: usize,
    pub seed: u64,
    pub checkpoint: PathBuf,
    pub options: SampleOptions,
}

/// Per-iteration record of one sampling run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleTrace {
    /// Sum of left budgets after each refinement.
    pub budget_sums: Vec<usize>,
    pub left_counts: Vec<usize>,
    pub right_counts: Vec<usize>,
    pub edge_counts: Vec<usize>,
    /// Connected components among left nodes after each refinement.
    pub components: Vec<usize>,
}

impl SampleTrace {
    pub fn iterations(&self) -> usize {
        self.budget_sums.len()
    }
}

/// Sampling iteration limit for target size `n`.
pub fn iteration_cap(n: usize) -> usize {
    4 * (n.max(1) as f64).log2().ceil() as usize + 16
}

/// Enforces the known parts of a refinement on head values
/// `[left, right, edge]` of an expanded graph: singleton clusters keep their
/// whole budget and their parent's features, and pairs sharing a budget of 2
/// split it equally.
pub fn apply_inpainting<T: Scalar>(state: &mut [Matrix<T>; 3], expanded: &BipartiteGraph<T>) -> Result<()> {
    let (nl, nr) = (expanded.num_left(), expanded.num_right());
    if state[0].rows() != nl || state[1].rows() != nr || state[2].rows() != expanded.num_edges() {
        return Err(Error::DimensionMismatch { what: "inpainting state", expected: nl, actual: state[0].rows() });
    }
    let fl = state[0].cols() - 2;
    let fr = state[1].cols() - 1;
    let budgets = expanded.left_budgets();
    for g in expanded.left_groups() {
        match g[..] {
            [i] => {
                state[0][(i, 1)] = T::one();
                if let Some(f) = expanded.left_features() {
                    state[0].row_mut(i)[2..2 + fl].copy_from_slice(f.row(i));
                }
            }
            [i, j] if budgets[i] == 2 => {
                state[0][(i, 1)] = T::zero();
                state[0][(j, 1)] = T::zero();
            }
            _ => {}
        }
    }
    if let Some(f) = expanded.right_features() {
        for g in expanded.right_groups() {
            if let [i] = g[..] {
                state[1].row_mut(i)[1..1 + fr].copy_from_slice(f.row(i));
            }
        }
    }
    Ok(())
}

fn project_split_column<T: Scalar>(left: &mut Matrix<T>, groups: &[Vec<usize>]) -> Result<()> {
    let mut col = left.columns(1, 1);
    project_split_groups(&mut col, groups)?;
    for i in 0..left.rows() {
        left[(i, 1)] = col[(i, 0)];
    }
    Ok(())
}

/// Turns terminal head values into a refinement of `expanded`.
pub fn decode_refinement<T: Scalar>(expanded: &BipartiteGraph<T>, values: &[Matrix<T>; 3]) -> RefinementDecision<T> {
    let [left, right, edge] = values;
    let two = T::of(2.0);
    RefinementDecision {
        edge_keep: (0..edge.rows()).map(|e| decode_edge(edge[(e, 0)].as_f64())).collect(),
        budget_split: (0..left.rows()).map(|i| (left[(i, 1)] + T::one()) / two).collect(),
        left_features: expanded.left_features().map(|f| left.columns(2, f.cols())),
        right_features: expanded.right_features().map(|f| right.columns(1, f.cols())),
    }
}

/// Removes right nodes without incident edges; returns the kept original
/// right indices.
pub fn drop_empty_right<T: Scalar>(b: &BipartiteGraph<T>) -> Result<(BipartiteGraph<T>, Vec<usize>)> {
    let deg = b.right_degrees();
    let kept: Vec<usize> = (0..b.num_right()).filter(|&r| deg[r] > 0).collect();
    let mut new_index = vec![usize::MAX; b.num_right()];
    for (k, &r) in kept.iter().enumerate() {
        new_index[r] = k;
    }
    let edges = b.edges().iter().map(|&(l, r)| (l, new_index[r])).collect();
    let out = BipartiteGraph::new(
        b.num_left(),
        kept.len(),
        edges,
        b.left_budgets().to_vec(),
        b.left_features().cloned(),
        b.right_features().map(|f| f.gather_rows(&kept)),
    )?;
    Ok((out, kept))
}

fn left_components<T: Scalar>(b: &BipartiteGraph<T>) -> usize {
    let nl = b.num_left();
    let mut uf = UnionFind::new(nl + b.num_right());
    for &(l, r) in b.edges() {
        uf.union(l, nl + r);
    }
    let roots: std::collections::HashSet<usize> = (0..nl).map(|l| uf.find(l)).collect();
    roots.len()
}

/// Collapses to a hypergraph, keeping the first of any right nodes with
/// identical neighborhoods.
pub fn collapse_distinct<T: Scalar>(b: &BipartiteGraph<T>) -> Result<Hypergraph<T>> {
    let mut seen = std::collections::HashSet::new();
    let keep: Vec<usize> = b.right_neighbors().into_iter().enumerate().filter(|(_, n)| seen.insert(n.clone())).map(|(r, _)| r).collect();
    if keep.len() == b.num_right() {
        return collapse_bipartite(b);
    }
    let mut index = vec![usize::MAX; b.num_right()];
    for (k, &r) in keep.iter().enumerate() {
        index[r] = k;
    }
    let edges = b.edges().iter().filter(|e| index[e.1] != usize::MAX).map(|&(l, r)| (l, index[r])).collect();
    let pruned = BipartiteGraph::new(
        b.num_left(),
        keep.len(),
        edges,
        b.left_budgets().to_vec(),
        b.left_features().cloned(),
        b.right_features().map(|f| f.gather_rows(&keep)),
    )?;
    collapse_bipartite(&pruned)
}

/// Generates one hypergraph with exactly `n` nodes.
pub fn sample_one<T: Scalar, R: Rng + ?Sized>(
    model: &Denoiser<T>,
    n: usize,
    options: &SampleOptions,
    rng: &mut R,
) -> Result<(Hypergraph<T>, SampleTrace)> {
    if n == 0 {
        return Err(Error::InvalidParameter("target size must be at least 1".into()));
    }
    options.validate()?;
    let cfg = model.config();
    let (fl, fr) = (model.left_feature_dim(), model.right_feature_dim());
    let mut coarse = BipartiteGraph::minimal(n, (fl > 0).then_some(fl), (fr > 0).then_some(fr));
    let mut v = ExpansionVectors::ones(1, 1);
    let mut trace = SampleTrace::default();
    let cap = iteration_cap(n);
    loop {
        if trace.iterations() >= cap {
            return Err(Error::InvalidParameter(format!(
                "sampling stopped after {cap} iterations at {} of {n} nodes",
                trace.left_counts.last().copied().unwrap_or(1)
            )));
        }
        let expanded = expand(&coarse, &v)?;
        let m = expanded.num_left();
        let rho = options.draw_rho(m, rng);
        let mut n_plus = expansion_count(m, n, rho);
        let reduction = 1.0 - m as f64 / (m + n_plus) as f64;
        let embeddings = spectral_rows(&coarse, cfg.spectral_k, &v, rng)?;
        let groups = expanded.left_groups();
        let initial = sample_head_priors(&expanded, fl, fr, rng)?;
        let predict = |state: &crate::flow::FlowState<T>| -> Result<Vec<Matrix<T>>> {
            let current: [Matrix<T>; 3] = state.values.clone().try_into().expect("three heads");
            let input = build_input(cfg, &expanded, current, state.t, embeddings.clone(), n, reduction)?;
            let out = model.forward(&input)?;
            let mut heads = [out.left, out.right, out.edge];
            project_split_column(&mut heads[0], &groups)?;
            apply_inpainting(&mut heads, &expanded)?;
            Ok(heads.into())
        };
        let terminal: [Matrix<T>; 3] =
            integrate(predict, initial.into(), options.flow_steps)?.try_into().expect("three heads");
        let decision = decode_refinement(&expanded, &terminal);
        let (refined, kept_right) = drop_empty_right(&refine(&expanded, &decision)?)?;
        trace.budget_sums.push(refined.total_budget());
        trace.left_counts.push(refined.num_left());
        trace.right_counts.push(refined.num_right());
        trace.edge_counts.push(refined.num_edges());
        trace.components.push(left_components(&refined));
        if refined.num_left() >= n {
            return Ok((collapse_distinct(&refined)?, trace));
        }
        let eligible = expansion_eligible(refined.left_budgets());
        n_plus = n_plus.min(eligible.iter().filter(|&&e| e).count());
        let scores: Vec<f64> = (0..m).map(|i| terminal[0][(i, 0)].as_f64()).collect();
        v = ExpansionVectors {
            left: select_top(&scores, &eligible, n_plus),
            right: kept_right.iter().map(|&r| decode_right_factor(terminal[1][(r, 0)].as_f64() + 2.0)).collect(),
        };
        coarse = refined;
    }
}

/// Samples one graph per requested size, in parallel; sample `i` uses its
/// own random stream derived from `seed`, so results do not depend on the
/// thread count.
pub fn sample_sizes<T: Scalar>(
    model: &Denoiser<T>,
    sizes: &[usize],
    seed: u64,
    options: &SampleOptions,
) -> Result<Vec<(Hypergraph<T>, SampleTrace)>> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(sizes.len().max(1));
    let chunk = sizes.len().div_ceil(threads).max(1);
    let run = |i: usize, n: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        sample_one(model, n, options, &mut rng)
    };
    let results: Vec<Result<(Hypergraph<T>, SampleTrace)>> = std::thread::scope(|s| {
        let handles: Vec<_> = sizes
            .chunks(chunk)
            .enumerate()
            .map(|(c, part)| s.spawn(move || part.iter().enumerate().map(|(k, &n)| run(c * chunk + k, n)).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("sampling thread panicked")).collect()
    });
    results.into_iter().collect()
}

/// Loads the checkpoint and draws `count` hypergraphs of `n_nodes` nodes.
pub fn sample(req: &SampleRequest) -> Result<Vec<Hypergraph<f64>>> {
    if req.n_nodes == 0 {
        return Err(Error::InvalidParameter("n_nodes must be at least 1".into()));
    }
    let model: Denoiser<f64> = Denoiser::load(&req.checkpoint)?;
    let sizes = vec![req.n_nodes; req.count];
    Ok(sample_sizes(&model, &sizes, req.seed, &req.options)?.into_iter().map(|(h, _)| h).collect())
}

/// Metrics of the graphs in `generated` against those in `reference`. Size
/// targets pair generated graph `i` with reference graph `i` (cycling). For
/// meshes (3-D node features, no kind) the mean nearest Chamfer distance is
/// included.
pub fn evaluate(generated: &Path, reference: &Path, kind: Option<GraphKind>) -> Result<MetricReport> {
    let gen: Vec<Hypergraph<f64>> = load_graph_dir(generated)?;
    let reference: Vec<Hypergraph<f64>> = load_graph_dir(reference)?;
    if reference.is_empty() {
        return Err(Error::Empty("reference set"));
    }
    let sizes: Vec<usize> = (0..gen.len()).map(|i| reference[i % reference.len()].num_nodes()).collect();
    let mut report = evaluate_sets(&gen, &reference, &sizes, kind)?;
    let is_mesh = |h: &Hypergraph<f64>| h.node_features().is_some_and(|f| f.cols() == 3);
    if kind.is_none() && gen.iter().chain(&reference).all(is_mesh) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let total = gen.iter().map(|g| chamfer_nearest(g, &reference, &mut rng)).sum::<Result<f64>>()?;
        report.chamfer_nearest = Some(total / gen.len() as f64);
    }
    Ok(report)
}

/// Sizes of one level of a coarsening sequence.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelSummary {
    pub level: usize,
    pub num_left: usize,
    pub num_right: usize,
    pub num_edges: usize,
    pub budget_sum: usize,
    pub max_budget: usize,
    pub reduction: f64,
    /// Whether expanding and refining the next coarser level with its
    /// stored targets reproduces this level exactly.
    pub reconstructs: bool,
}

/// Samples one coarsening sequence of `h` and summarizes every level, finest
/// first.
pub fn coarsening_summary<T: Scalar>(h: &Hypergraph<T>, params: &CoarseningParams, seed: u64) -> Result<Vec<LevelSummary>> {
    let seq = sample_coarsening_sequence(h, params, &mut ChaCha8Rng::seed_from_u64(seed))?;
    summarize_levels(&seq)
}

fn summarize_levels<T: Scalar>(seq: &CoarseningSequence<T>) -> Result<Vec<LevelSummary>> {
    (0..seq.len())
        .map(|l| {
            let b = &seq.levels[l].bipartite;
            let reconstructs = match seq.levels.get(l + 1) {
                Some(_) => seq.reconstruct_finer(l + 1)?.same_content(b),
                None => true,
            };
            Ok(LevelSummary {
                level: l,
                num_left: b.num_left(),
                num_right: b.num_right(),
                num_edges: b.num_edges(),
                budget_sum: b.total_budget(),
                max_budget: b.left_budgets().iter().copied().max().unwrap_or(0),
                reduction: seq.reduction_fraction(l),
                reconstructs,
            })
        })
        .collect()
}

/// Coarsens `h` and writes every level to `out_dir` as `level_{l}.jsonl`
/// (the level collapsed to a hypergraph) and `level_{l}.dot`.
pub fn coarsen_demo<T: Scalar>(h: &Hypergraph<T>, params: &CoarseningParams, seed: u64, out_dir: &Path) -> Result<Vec<LevelSummary>> {
    let seq = sample_coarsening_sequence(h, params, &mut ChaCha8Rng::seed_from_u64(seed))?;
    fs::create_dir_all(out_dir)?;
    for (l, level) in seq.levels.iter().enumerate() {
        let g = collapse_distinct(&level.bipartite)?;
        let mut w = BufWriter::new(fs::File::create(out_dir.join(format!("level_{l}.jsonl")))?);
        write_jsonl(&mut w, std::slice::from_ref(&g))?;
        w.flush()?;
        let mut w = BufWriter::new(fs::File::create(out_dir.join(format!("level_{l}.dot")))?);
        write_dot(&mut w, &g, &format!("level{l}"))?;
        w.flush()?;
    }
    summarize_levels(&seq)
}

/// Hypergraphs from a single file: every line of a `.jsonl` file, or one
/// `.off` / `.obj` mesh.
pub fn load_graph_file<T: Scalar>(path: &Path) -> Result<Vec<Hypergraph<T>>> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("jsonl") => read_jsonl(std::io::BufReader::new(fs::File::open(path)?)),
        Some("off" | "obj") => Ok(vec![load_mesh(path)?]),
        _ => Err(Error::UnknownKind { what: "graph file extension", name: path.display().to_string() }),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportFormat {
    Dot,
    Obj,
    Jsonl,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dot" => Ok(Self::Dot),
            "obj" => Ok(Self::Obj),
            "jsonl" => Ok(Self::Jsonl),
            other => Err(Error::UnknownKind { what: "export format", name: other.to_string() }),
        }
    }
}

/// Writes `graph_{i}.dot` / `graph_{i}.obj` per graph, or one
/// `graphs.jsonl`. Returns the written paths.
pub fn export<T: Scalar>(graphs: &[Hypergraph<T>], format: ExportFormat, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    match format {
        ExportFormat::Jsonl => {
            let path = out_dir.join("graphs.jsonl");
            let mut w = BufWriter::new(fs::File::create(&path)?);
            write_jsonl(&mut w, graphs)?;
            w.flush()?;
            written.push(path);
        }
        ExportFormat::Dot | ExportFormat::Obj => {
            let ext = if format == ExportFormat::Dot { "dot" } else { "obj" };
            for (i, h) in graphs.iter().enumerate() {
                let path = out_dir.join(format!("graph_{i}.{ext}"));
                let mut w = BufWriter::new(fs::File::create(&path)?);
                match format {
                    ExportFormat::Dot => write_dot(&mut w, h, &format!("g{i}"))?,
                    _ => write_obj(&mut w, h)?,
                }
                w.flush()?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coarsening::sample_coarsening_sequence;
    use crate::data::gen_tree_sized;

    fn tiny_config() -> DenoiserConfig {
        DenoiserConfig { hidden_dim: 8, num_layers: 1, spectral_k: 2, mlp_hidden: 8, phi_dim: 4, ..Default::default() }
    }

    fn tiny_model(seed: u64) -> Denoiser<f64> {
        Denoiser::new(tiny_config(), 0, 0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn right_factor_thresholds() {
        assert_eq!(decode_right_factor(1.5), 1);
        assert_eq!(decode_right_factor(2.0), 2);
        assert_eq!(decode_right_factor(2.5), 3);
        for f in 1..=3 {
            assert_eq!(decode_right_factor(encode_right_factor(f) + 2.0), f);
        }
    }

    #[test]
    fn edge_decoding() {
        assert!(decode_edge(1.0));
        assert!(decode_edge(0.01));
        assert!(!decode_edge(0.0));
        assert!(!decode_edge(-1.0));
    }

    #[test]
    fn top_selection_example() {
        assert_eq!(select_top(&[0.9, 0.2, 0.7], &[true; 3], 2), vec![2, 1, 2]);
        assert_eq!(select_top(&[0.5, 0.5, 0.5], &[true; 3], 1), vec![2, 1, 1]);
        assert_eq!(select_top(&[0.9, 0.2, 0.7], &[false, true, true], 2), vec![1, 2, 2]);
        assert_eq!(select_top(&[0.9, 0.2], &[false, false], 2), vec![1, 1]);
    }

    #[test]
    fn expansion_count_respects_cap() {
        assert_eq!(expansion_count(1, 10, 0.3), 1);
        assert_eq!(expansion_count(10, 100, 0.5), 10);
        assert_eq!(expansion_count(10, 12, 0.5), 2);
        assert_eq!(expansion_count(12, 12, 0.5), 0);
        // n+ = ceil(rho (n + n+)) holds for the returned value when uncapped.
        for n in 1..50 {
            for rho in [0.1, 0.2, 0.3] {
                let k = expansion_count(n, 10_000, rho);
                assert_eq!(k, (rho * (n + k) as f64 - 1e-9).ceil() as usize);
            }
        }
    }

    #[test]
    fn config_parses_and_rejects() {
        let c: TrainConfig = "# toy\nsteps = 10\nlr = 0.01 # fast\nhidden_dim=16\nrho_max = 0.4\ncheckpoint = m.json\n".parse().unwrap();
        assert_eq!((c.steps, c.lr, c.denoiser.hidden_dim, c.coarsening.rho_max), (10, 0.01, 16, 0.4));
        assert_eq!(c.checkpoint.as_deref(), Some(Path::new("m.json")));
        assert!("steps = 0".parse::<TrainConfig>().is_err());
        assert!("lr = -1".parse::<TrainConfig>().is_err());
        assert!("bogus = 1".parse::<TrainConfig>().is_err());
        assert!("steps".parse::<TrainConfig>().is_err());
    }

    #[test]
    fn coarsest_level_supervises_first_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h: Hypergraph<f64> = gen_tree_sized(12, &mut rng);
        let seq = sample_coarsening_sequence(&h, &CoarseningParams::default(), &mut rng).unwrap();
        let depth = seq.depth();
        let ex = training_example(&seq, depth, Some((2, 0.5)), &mut rng).unwrap();
        assert_eq!((ex.expanded.num_left(), ex.expanded.num_right(), ex.expanded.num_edges()), (1, 1, 1));
        assert_eq!(ex.expanded.left_budgets(), &[12]);
        assert_eq!(ex.targets.edge[(0, 0)], 1.0);
        assert_eq!(ex.targets.left[(0, 1)], 1.0);
        let v = &seq.levels[depth].expansion;
        assert_eq!(ex.targets.left[(0, 0)], encode_left_factor(v.left[0]));
        assert_eq!(ex.targets.right[(0, 0)], encode_right_factor(v.right[0]));
        assert_eq!(ex.target_size, 12);
        for l in 0..depth {
            let ex = training_example(&seq, l, None, &mut rng).unwrap();
            assert_eq!(ex.expanded.num_left(), seq.levels[l].bipartite.num_left());
            assert!((ex.reduction - seq.reduction_fraction(l)).abs() < 1e-15);
        }
        let ex0 = training_example(&seq, 0, None, &mut rng).unwrap();
        assert!((0..ex0.targets.left.rows()).all(|i| ex0.targets.left[(i, 0)] == -1.0));
    }

    #[test]
    fn coupling_keeps_targets_and_row_multisets() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h: Hypergraph<f64> = gen_tree_sized(14, &mut rng);
        let seq = sample_coarsening_sequence(&h, &CoarseningParams::default(), &mut rng).unwrap();
        let ex = training_example(&seq, 0, None, &mut rng).unwrap();
        let before = sample_head_priors(&ex.expanded, 0, 0, &mut rng).unwrap();
        let mut after = before.clone();
        couple_noise(&ex.expanded, &mut after, &ex.targets).unwrap();
        for (a, b) in before.iter().zip(&after) {
            let mut x = a.as_slice().to_vec();
            let mut y = b.as_slice().to_vec();
            x.sort_by(f64::total_cmp);
            y.sort_by(f64::total_cmp);
            assert_eq!(x, y);
        }
    }

    #[test]
    fn inpainting_rules() {
        let b = BipartiteGraph::<f64>::new(2, 1, vec![(0, 0), (1, 0)], vec![2, 3], Some(Matrix::from_vec(2, 1, vec![4.0, 5.0])), None)
            .unwrap();
        let e = expand(&b, &ExpansionVectors { left: vec![2, 1], right: vec![1] }).unwrap();
        let mut state = [Matrix::filled(3, 3, 0.3), Matrix::zeros(1, 1), Matrix::zeros(e.num_edges(), 1)];
        apply_inpainting(&mut state, &e).unwrap();
        // Budget-2 pair splits equally, the singleton keeps budget and feature.
        assert_eq!((state[0][(0, 1)], state[0][(1, 1)]), (0.0, 0.0));
        assert_eq!((state[0][(2, 1)], state[0][(2, 2)]), (1.0, 5.0));
        let d = decode_refinement(&e, &state);
        let r = refine(&e, &d).unwrap();
        assert_eq!(r.left_budgets(), &[1, 1, 3]);
        assert_eq!(r.left_features().unwrap()[(2, 0)], 5.0);
        assert_eq!(expansion_eligible(r.left_budgets()), vec![false, false, true]);
    }

    #[test]
    fn dropping_empty_right_nodes() {
        let b = BipartiteGraph::<f64>::new(2, 3, vec![(0, 0), (1, 2)], vec![1, 1], None, None).unwrap();
        let (d, kept) = drop_empty_right(&b).unwrap();
        assert_eq!(kept, vec![0, 2]);
        assert_eq!(d.edges(), &[(0, 0), (1, 1)]);
    }

    #[test]
    fn untrained_sampling_hits_size_and_conserves_budget() {
        let model = tiny_model(0);
        let opts = SampleOptions::default();
        for (i, n) in [1usize, 2, 5, 13].into_iter().enumerate() {
            let (h, trace) = sample_one(&model, n, &opts, &mut ChaCha8Rng::seed_from_u64(i as u64)).unwrap();
            assert_eq!(h.num_nodes(), n);
            assert!(trace.budget_sums.iter().all(|&s| s == n));
            assert!(trace.iterations() <= iteration_cap(n));
        }
    }

    #[test]
    fn sampling_is_deterministic_across_threads() {
        let model = tiny_model(1);
        let opts = SampleOptions::default();
        let a = sample_sizes(&model, &[6, 7, 8], 5, &opts).unwrap();
        let b = sample_sizes(&model, &[6, 7, 8], 5, &opts).unwrap();
        assert_eq!(a, b);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        rng.set_stream(1);
        assert_eq!(sample_one(&model, 7, &opts, &mut rng).unwrap(), a[1]);
    }

    #[test]
    fn short_training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let graphs: Vec<Hypergraph<f64>> = (0..4).map(|_| gen_tree_sized(8, &mut rng)).collect();
        let cfg = TrainConfig { steps: 5, batch_size: 2, denoiser: tiny_config(), ..Default::default() };
        let (_, a) = train_model(&cfg, &graphs, &[], None).unwrap();
        let (_, b) = train_model(&cfg, &graphs, &[], None).unwrap();
        assert_eq!(a.losses.len(), 5);
        assert!(a.losses.iter().zip(&b.losses).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn cosine_schedule_decays_to_zero() {
        assert_eq!(LrSchedule::Constant.rate(0.1, 7, 10), 0.1);
        assert_eq!(LrSchedule::Cosine.rate(0.1, 1, 10), 0.1);
        assert!((LrSchedule::Cosine.rate(0.1, 6, 10) - 0.05).abs() < 1e-15);
        assert!(LrSchedule::Cosine.rate(0.1, 10, 10) < 0.003);
        assert_eq!("cosine".parse::<LrSchedule>().unwrap(), LrSchedule::Cosine);
        assert!("linear".parse::<LrSchedule>().is_err());
    }

    #[test]
    fn smoothed_losses_are_debiased() {
        let s = smoothed_losses(&[4.0, 4.0, 4.0], 0.9);
        assert!(s.iter().all(|v| (v - 4.0).abs() < 1e-12));
        let s = smoothed_losses(&[2.0, 0.0], 0.5);
        assert_eq!(s[0], 2.0);
        assert!((s[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!(smoothed_losses(&[], 0.9).is_empty());
    }

    #[test]
    fn export_formats() {
        let dir = tempfile::tempdir().unwrap();
        let h = Hypergraph::<f64>::new(3, vec![vec![0, 1, 2]]).unwrap();
        assert_eq!(export(&[h.clone()], ExportFormat::Dot, dir.path()).unwrap().len(), 1);
        assert_eq!(export(&[h.clone(), h.clone()], ExportFormat::Jsonl, dir.path()).unwrap().len(), 1);
        assert!(export(&[h], ExportFormat::Obj, dir.path()).is_err());
        assert!("png".parse::<ExportFormat>().is_err());
    }
}
