//! Synthetic hypergraph generators, triangle-mesh ingestion and dataset
//! directories.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergraph::{read_jsonl, write_jsonl, Hypergraph};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub const SBM_NODES: usize = 32;
pub const SBM_P_INTRA: f64 = 0.05;
pub const SBM_P_INTER: f64 = 0.001;
pub const EGO_BASE_NODES: (usize, usize) = (150, 200);
pub const EGO_BASE_HYPEREDGES: usize = 3000;
pub const MAX_HYPEREDGE_SIZE: usize = 5;
pub const TREE_NODES: usize = 32;

/// Dataset families with a validity predicate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Sbm,
    Ego,
    Tree,
}

impl FromStr for GraphKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sbm" => Ok(Self::Sbm),
            "ego" => Ok(Self::Ego),
            "tree" => Ok(Self::Tree),
            other => Err(Error::UnknownKind { what: "graph kind", name: other.to_string() }),
        }
    }
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Sbm => "sbm",
            Self::Ego => "ego",
            Self::Tree => "tree",
        })
    }
}

/// Two equal communities of [`SBM_NODES`] nodes; every node triple becomes a
/// hyperedge independently, with a higher rate inside a community.
pub fn gen_sbm<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> Hypergraph<T> {
    let n = SBM_NODES;
    let half = n / 2;
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                let same = (a < half) == (b < half) && (b < half) == (c < half);
                let p = if same { SBM_P_INTRA } else { SBM_P_INTER };
                if rng.random_bool(p) {
                    edges.push(vec![a, b, c]);
                }
            }
        }
    }
    Hypergraph::new(n, edges).expect("distinct triples")
}

/// Ego network of a random base hypergraph: the hyperedges containing one
/// chosen node, restricted to the nodes they touch.
pub fn gen_ego<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> Hypergraph<T> {
    loop {
        let n = rng.random_range(EGO_BASE_NODES.0..=EGO_BASE_NODES.1);
        let nodes: Vec<usize> = (0..n).collect();
        let base: Vec<Vec<usize>> = (0..EGO_BASE_HYPEREDGES)
            .map(|_| {
                let size = rng.random_range(2..=MAX_HYPEREDGE_SIZE);
                nodes.choose_multiple(rng, size).copied().collect()
            })
            .collect();
        let ego = rng.random_range(0..n);
        let kept: Vec<Vec<usize>> = base.into_iter().filter(|he| he.contains(&ego)).collect();
        if kept.is_empty() {
            continue;
        }
        let present: BTreeSet<usize> = kept.iter().flatten().copied().collect();
        let relabel: BTreeMap<usize, usize> = present.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let edges = kept.into_iter().map(|he| he.into_iter().map(|v| relabel[&v]).collect()).collect();
        return Hypergraph::dedup_from(present.len(), edges).expect("relabeled nodes are in range");
    }
}

/// Uniform random labeled tree on `n` nodes via a Pruefer sequence.
pub fn random_tree<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<(usize, usize)> {
    if n < 2 {
        return Vec::new();
    }
    let seq: Vec<usize> = (0..n - 2).map(|_| rng.random_range(0..n)).collect();
    let mut degree = vec![1usize; n];
    for &s in &seq {
        degree[s] += 1;
    }
    let mut leaves: BTreeSet<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    let mut edges = Vec::with_capacity(n - 1);
    for &s in &seq {
        let leaf = leaves.pop_first().expect("a tree always has a leaf");
        edges.push((leaf.min(s), leaf.max(s)));
        degree[s] -= 1;
        if degree[s] == 1 {
            leaves.insert(s);
        }
    }
    let last: Vec<usize> = leaves.into_iter().collect();
    edges.push((last[0], last[1]));
    edges
}

/// Random tree on `n` nodes whose edges are greedily grouped into connected
/// bundles; each bundle's node set (at most [`MAX_HYPEREDGE_SIZE`] nodes)
/// becomes a hyperedge.
pub fn gen_tree_sized<T: Scalar, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Hypergraph<T> {
    if n < 2 {
        return Hypergraph::new(n, Vec::new()).expect("empty hypergraph");
    }
    let tree = random_tree(n, rng);
    let mut incident = vec![Vec::new(); n];
    for (i, &(u, v)) in tree.iter().enumerate() {
        incident[u].push(i);
        incident[v].push(i);
    }
    let mut used = vec![false; tree.len()];
    let mut order: Vec<usize> = (0..tree.len()).collect();
    order.shuffle(rng);
    let mut hyperedges = Vec::new();
    for &start in &order {
        if used[start] {
            continue;
        }
        let target = rng.random_range(2..=MAX_HYPEREDGE_SIZE);
        used[start] = true;
        let mut members: BTreeSet<usize> = [tree[start].0, tree[start].1].into();
        while members.len() < target {
            let frontier: Vec<usize> =
                members.iter().flat_map(|&v| incident[v].iter().copied()).filter(|&e| !used[e]).collect();
            let Some(&e) = frontier.first() else { break };
            used[e] = true;
            members.insert(tree[e].0);
            members.insert(tree[e].1);
        }
        hyperedges.push(members.into_iter().collect());
    }
    Hypergraph::new(n, hyperedges).expect("bundles of distinct tree edges are distinct")
}

pub fn gen_tree<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> Hypergraph<T> {
    gen_tree_sized(TREE_NODES, rng)
}

pub fn generate<T: Scalar, R: Rng + ?Sized>(kind: GraphKind, rng: &mut R) -> Hypergraph<T> {
    match kind {
        GraphKind::Sbm => gen_sbm(rng),
        GraphKind::Ego => gen_ego(rng),
        GraphKind::Tree => gen_tree(rng),
    }
}

fn parse_err(path: &Path, line: usize, msg: impl fmt::Display) -> Error {
    Error::Parse(format!("{}:{line}: {msg}", path.display()))
}

fn mesh_from_parts<T: Scalar>(positions: Vec<[f64; 3]>, faces: Vec<Vec<usize>>) -> Result<Hypergraph<T>> {
    let n = positions.len();
    let feats = Matrix::from_fn(n, 3, |r, c| T::of(positions[r][c]));
    let mut seen = BTreeSet::new();
    let mut kept = Vec::new();
    for mut f in faces {
        let key = {
            f.sort_unstable();
            f.clone()
        };
        if seen.insert(key) {
            kept.push(f);
        }
    }
    Hypergraph::with_features(n, kept, Some(feats), None)
}

/// Reads an OFF or OBJ triangle mesh (chosen by extension). Vertices become
/// nodes with their positions as features, faces become size-3 hyperedges;
/// repeated faces are dropped.
pub fn load_mesh<T: Scalar>(path: &Path) -> Result<Hypergraph<T>> {
    let text = fs::read_to_string(path)?;
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("off") => parse_off(path, &text),
        Some("obj") => parse_obj(path, &text),
        _ => Err(Error::Parse(format!("{}: unsupported mesh extension", path.display()))),
    }
}

fn parse_triangle(path: &Path, line: usize, idx: Vec<usize>, n: usize) -> Result<Vec<usize>> {
    if idx.len() != 3 {
        return Err(parse_err(path, line, format!("face with {} vertices; only triangles are supported", idx.len())));
    }
    if let Some(&v) = idx.iter().find(|&&v| v >= n) {
        return Err(parse_err(path, line, format!("vertex index {v} out of range")));
    }
    if idx[0] == idx[1] || idx[1] == idx[2] || idx[0] == idx[2] {
        return Err(parse_err(path, line, "degenerate face"));
    }
    Ok(idx)
}

fn parse_off<T: Scalar>(path: &Path, text: &str) -> Result<Hypergraph<T>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hl, header) = lines.next().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let counts_line = if header == "OFF" {
        lines.next().ok_or_else(|| parse_err(path, hl, "missing counts"))?
    } else if let Some(rest) = header.strip_prefix("OFF") {
        (hl, rest.trim())
    } else {
        return Err(parse_err(path, hl, "missing OFF header"));
    };
    let counts: Vec<usize> = counts_line
        .1
        .split_whitespace()
        .map(|t| t.parse().map_err(|e| parse_err(path, counts_line.0, e)))
        .collect::<Result<_>>()?;
    let (nv, nf) = match counts.as_slice() {
        [v, f, ..] => (*v, *f),
        _ => return Err(parse_err(path, counts_line.0, "expected vertex and face counts")),
    };
    let mut positions = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines.next().ok_or_else(|| parse_err(path, counts_line.0, "too few vertices"))?;
        let xyz: Vec<f64> =
            l.split_whitespace().take(3).map(|t| t.parse().map_err(|e| parse_err(path, ln, e))).collect::<Result<_>>()?;
        if xyz.len() != 3 {
            return Err(parse_err(path, ln, "vertex needs three coordinates"));
        }
        positions.push([xyz[0], xyz[1], xyz[2]]);
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, l) = lines.next().ok_or_else(|| parse_err(path, counts_line.0, "too few faces"))?;
        let nums: Vec<usize> =
            l.split_whitespace().map(|t| t.parse().map_err(|e| parse_err(path, ln, e))).collect::<Result<_>>()?;
        let (&k, rest) = nums.split_first().ok_or_else(|| parse_err(path, ln, "empty face"))?;
        if rest.len() < k {
            return Err(parse_err(path, ln, "face shorter than its vertex count"));
        }
        faces.push(parse_triangle(path, ln, rest[..k].to_vec(), nv)?);
    }
    mesh_from_parts(positions, faces)
}

fn parse_obj<T: Scalar>(path: &Path, text: &str) -> Result<Hypergraph<T>> {
    let mut positions = Vec::new();
    let mut raw_faces = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let xyz: Vec<f64> =
                    parts.take(3).map(|t| t.parse().map_err(|e| parse_err(path, ln, e))).collect::<Result<_>>()?;
                if xyz.len() != 3 {
                    return Err(parse_err(path, ln, "vertex needs three coordinates"));
                }
                positions.push([xyz[0], xyz[1], xyz[2]]);
            }
            Some("f") => {
                let idx: Vec<i64> = parts
                    .map(|t| t.split('/').next().unwrap_or("").parse().map_err(|e| parse_err(path, ln, e)))
                    .collect::<Result<_>>()?;
                raw_faces.push((ln, idx, positions.len()));
            }
            _ => {}
        }
    }
    let n = positions.len();
    let mut faces = Vec::with_capacity(raw_faces.len());
    for (ln, idx, seen) in raw_faces {
        let resolved: Vec<usize> = idx
            .into_iter()
            .map(|v| match v {
                v if v > 0 => Ok(v as usize - 1),
                v if v < 0 && (-v) as usize <= seen => Ok(seen - (-v) as usize),
                _ => Err(parse_err(path, ln, format!("bad vertex reference {v}"))),
            })
            .collect::<Result<_>>()?;
        faces.push(parse_triangle(path, ln, resolved, n)?);
    }
    mesh_from_parts(positions, faces)
}

/// Writes node positions (first three feature columns) and size-3
/// hyperedges as an OBJ mesh.
pub fn write_obj<T: Scalar, W: Write>(mut out: W, h: &Hypergraph<T>) -> Result<()> {
    let f = h
        .node_features()
        .filter(|f| f.cols() >= 3)
        .ok_or_else(|| Error::InvalidParameter("OBJ export needs 3-D node features".into()))?;
    for r in 0..f.rows() {
        writeln!(out, "v {} {} {}", f[(r, 0)].as_f64(), f[(r, 1)].as_f64(), f[(r, 2)].as_f64())?;
    }
    for he in h.hyperedges().iter().filter(|he| he.len() == 3) {
        writeln!(out, "f {} {} {}", he[0] + 1, he[1] + 1, he[2] + 1)?;
    }
    Ok(())
}

/// Writes the hypergraph as an undirected DOT graph of its star expansion.
pub fn write_dot<T: Scalar, W: Write>(mut out: W, h: &Hypergraph<T>, name: &str) -> Result<()> {
    writeln!(out, "graph {name} {{")?;
    for v in 0..h.num_nodes() {
        writeln!(out, "  n{v} [shape=circle];")?;
    }
    for (e, he) in h.hyperedges().iter().enumerate() {
        writeln!(out, "  e{e} [shape=box];")?;
        for v in he {
            writeln!(out, "  n{v} -- e{e};")?;
        }
    }
    writeln!(out, "}}")?;
    Ok(())
}

/// Split sizes of a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self { train: 128, val: 32, test: 40 }
    }
}

/// What to generate and how much of it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub kind: GraphKind,
    pub splits: SplitSizes,
    pub seed: u64,
    /// Node count for tree datasets; ignored otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree_nodes: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    pub spec: DatasetSpec,
    pub train: Vec<Hypergraph<T>>,
    pub val: Vec<Hypergraph<T>>,
    pub test: Vec<Hypergraph<T>>,
}

impl<T: Scalar> Dataset<T> {
    /// Deterministic in `spec.seed`.
    pub fn generate(spec: &DatasetSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut draw = |count: usize| -> Vec<Hypergraph<T>> {
            (0..count)
                .map(|_| match (spec.kind, spec.tree_nodes) {
                    (GraphKind::Tree, Some(n)) => gen_tree_sized(n, &mut rng),
                    (kind, _) => generate(kind, &mut rng),
                })
                .collect()
        };
        let train = draw(spec.splits.train);
        let val = draw(spec.splits.val);
        let test = draw(spec.splits.test);
        Self { spec: spec.clone(), train, val, test }
    }

    /// Writes `train.jsonl`, `val.jsonl`, `test.jsonl` and `manifest.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (name, graphs) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            let f = fs::File::create(dir.join(format!("{name}.jsonl")))?;
            let mut w = BufWriter::new(f);
            write_jsonl(&mut w, graphs)?;
            w.flush()?;
        }
        fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&self.spec)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let spec: DatasetSpec = serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
        let split = |name: &str| -> Result<Vec<Hypergraph<T>>> {
            let path = dir.join(format!("{name}.jsonl"));
            if !path.exists() {
                return Ok(Vec::new());
            }
            read_jsonl(BufReader::new(fs::File::open(path)?))
        };
        Ok(Self { train: split("train")?, val: split("val")?, test: split("test")?, spec })
    }
}

/// Every hypergraph in a directory: all `*.jsonl` files in name order, or
/// all `*.off` / `*.obj` meshes when there are no JSONL files.
pub fn load_graph_dir<T: Scalar>(dir: &Path) -> Result<Vec<Hypergraph<T>>> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<std::io::Result<Vec<_>>>()?.into_iter().map(|e| e.path()).collect();
    entries.sort();
    let ext = |p: &Path| p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    let jsonl: Vec<_> = entries.iter().filter(|p| ext(p).as_deref() == Some("jsonl")).collect();
    if !jsonl.is_empty() {
        let mut out = Vec::new();
        for p in jsonl {
            out.extend(read_jsonl(BufReader::new(fs::File::open(p)?))?);
        }
        return Ok(out);
    }
    entries.iter().filter(|p| matches!(ext(p).as_deref(), Some("off" | "obj"))).map(|p| load_mesh(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    type H = Hypergraph<f64>;

    #[test]
    fn sbm_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..5 {
            let h: H = gen_sbm(&mut rng);
            assert_eq!(h.num_nodes(), 32);
            assert!(h.hyperedge_sizes().iter().all(|&s| s == 3));
        }
    }

    #[test]
    fn sbm_intra_count_matches_expectation() {
        // 2 * 0.05 * C(16, 3) = 56 expected intra-community hyperedges.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws = 200;
        let mut total = 0usize;
        for _ in 0..draws {
            let h: H = gen_sbm(&mut rng);
            total += h.hyperedges().iter().filter(|he| he.iter().all(|&v| v < 16) || he.iter().all(|&v| v >= 16)).count();
        }
        let mean = total as f64 / draws as f64;
        assert!((mean - 56.0).abs() < 5.6, "mean {mean}");
    }

    #[test]
    fn ego_contains_center() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..3 {
            let h: H = gen_ego(&mut rng);
            assert!(h.hyperedge_sizes().iter().all(|&s| s <= 5));
            let common = (0..h.num_nodes()).any(|v| h.hyperedges().iter().all(|he| he.contains(&v)));
            assert!(common);
        }
    }

    #[test]
    fn tree_covers_every_edge() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let h: H = gen_tree(&mut rng);
            assert_eq!(h.num_nodes(), 32);
            assert!(h.is_connected());
            assert!(h.hyperedge_sizes().iter().all(|&s| (2..=5).contains(&s)));
            // A bundle of s nodes carries s - 1 tree edges.
            let tree_edges: usize = h.hyperedge_sizes().iter().map(|s| s - 1).sum();
            assert_eq!(tree_edges, 31);
        }
    }

    #[test]
    fn pruefer_tree_is_spanning() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let edges = random_tree(10, &mut rng);
        assert_eq!(edges.len(), 9);
        let h = H::new(10, edges.iter().map(|&(u, v)| vec![u, v]).collect()).unwrap();
        assert!(h.is_connected());
    }

    const TETRA_OFF: &str = "OFF\n4 4 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 1 2\n3 0 1 3\n3 0 2 3\n3 1 2 3\n";

    #[test]
    fn off_tetrahedron_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.off");
        fs::write(&p, TETRA_OFF).unwrap();
        let h: H = load_mesh(&p).unwrap();
        assert_eq!((h.num_nodes(), h.num_hyperedges()), (4, 4));
        fs::write(&p, TETRA_OFF.replace("4 4 0", "4 5 0") + "3 2 1 0\n").unwrap();
        let h: H = load_mesh(&p).unwrap();
        assert_eq!(h.num_hyperedges(), 4);
        fs::write(&p, "OFF\n4 1 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n4 0 1 2 3\n").unwrap();
        let err = load_mesh::<f64>(&p).unwrap_err();
        assert!(err.to_string().contains("only triangles"), "{err}");
    }

    #[test]
    fn obj_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.off");
        fs::write(&p, "OFF\n3 1 0\n0.1 -2.5e-7 3.3333333333333335\n1e10 0 0\n0 0.7 0\n3 0 1 2\n").unwrap();
        let h: H = load_mesh(&p).unwrap();
        let q = dir.path().join("t.obj");
        write_obj(fs::File::create(&q).unwrap(), &h).unwrap();
        let back: H = load_mesh(&q).unwrap();
        let (a, b) = (h.node_features().unwrap(), back.node_features().unwrap());
        assert!(a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(back.hyperedges(), h.hyperedges());
    }

    #[test]
    fn dataset_is_seed_deterministic_and_round_trips() {
        let spec = DatasetSpec { kind: GraphKind::Tree, splits: SplitSizes { train: 4, val: 2, test: 1 }, seed: 9, tree_nodes: Some(12) };
        let a = Dataset::<f64>::generate(&spec);
        assert_eq!(a, Dataset::generate(&spec));
        let dir = tempfile::tempdir().unwrap();
        a.save(dir.path()).unwrap();
        assert_eq!(Dataset::<f64>::load(dir.path()).unwrap(), a);
    }

    #[test]
    fn unknown_kind_is_rejected() {
        assert!(matches!("grid".parse::<GraphKind>(), Err(Error::UnknownKind { .. })));
    }
}
