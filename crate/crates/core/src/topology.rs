//! Communication graphs and gossip matrices.
//!
//! All matrices are dense `m × m`. A [`GossipMatrix`] is produced from a
//! [`Graph`] with Metropolis–Hastings weights and then shifted into the
//! positive-definite cone with [`psd_shift`]; the algorithms only ever touch
//! the shifted matrix `W = (1 − c) I + c W̃`.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Mat, Result};

/// Default shift coefficient for [`psd_shift`].
pub const DEFAULT_SHIFT: f64 = 0.4;

const ER_MAX_ATTEMPTS: usize = 100_000;
const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

/// Undirected, connected simple graph on agents `0..m`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    m: usize,
    /// Unordered pairs stored as `(i, j)` with `i < j`.
    edges: BTreeSet<(usize, usize)>,
}

impl Graph {
    /// Builds a graph from an edge list, rejecting self-loops, duplicates,
    /// out-of-range endpoints and disconnected inputs.
    pub fn new(m: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidSize(format!("graph needs at least 2 agents, got {m}")));
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i == j {
                return Err(Error::Parameter(format!("self-loop at agent {i}")));
            }
            if i >= m || j >= m {
                return Err(Error::Parameter(format!("edge ({i}, {j}) out of range for m={m}")));
            }
            if !set.insert((i.min(j), i.max(j))) {
                return Err(Error::Parameter(format!("duplicate edge ({i}, {j})")));
            }
        }
        let graph = Graph { m, edges: set };
        if !graph.is_connected() {
            return Err(Error::Parameter("graph is not connected".into()));
        }
        Ok(graph)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    /// Open neighborhoods, sorted.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.m];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.m];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    fn bfs_depths(&self, adj: &[Vec<usize>], source: usize) -> Vec<Option<usize>> {
        let mut depth = vec![None; self.m];
        depth[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let du = depth[u].unwrap();
            for &v in &adj[u] {
                if depth[v].is_none() {
                    depth[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        depth
    }

    /// Traversal from agent 0.
    pub fn is_connected(&self) -> bool {
        let adj = self.neighbors();
        self.bfs_depths(&adj, 0).iter().all(Option::is_some)
    }

    /// Longest shortest path. Only meaningful for connected graphs.
    pub fn diameter(&self) -> usize {
        let adj = self.neighbors();
        (0..self.m)
            .map(|s| self.bfs_depths(&adj, s).into_iter().flatten().max().unwrap_or(0))
            .max()
            .unwrap_or(0)
    }

    /// Edge-list text: first line `m`, then one `i j` pair per line (0-indexed).
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{}\n", self.m);
        for &(i, j) in &self.edges {
            writeln!(out, "{i} {j}").unwrap();
        }
        out
    }

    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let m = lines
            .next()
            .ok_or_else(|| Error::Format("empty edge list".into()))?
            .parse::<usize>()
            .map_err(|e| Error::Format(format!("bad agent count: {e}")))?;
        let mut edges = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let mut parts = line.split_whitespace();
            let parse = |s: Option<&str>| -> Result<usize> {
                s.ok_or_else(|| Error::Format(format!("edge line {} incomplete", lineno + 2)))?
                    .parse()
                    .map_err(|e| Error::Format(format!("edge line {}: {e}", lineno + 2)))
            };
            let i = parse(parts.next())?;
            let j = parse(parts.next())?;
            if parts.next().is_some() {
                return Err(Error::Format(format!("edge line {} has extra fields", lineno + 2)));
            }
            edges.push((i, j));
        }
        Graph::new(m, edges)
    }
}

/// Path graph `0 – 1 – … – (m−1)`.
pub fn make_line_graph(m: usize) -> Result<Graph> {
    if m < 2 {
        return Err(Error::InvalidSize(format!("line graph needs m >= 2, got {m}")));
    }
    Graph::new(m, (0..m - 1).map(|i| (i, i + 1)))
}

/// Cycle graph; for `m = 2` this is the single edge.
pub fn make_ring_graph(m: usize) -> Result<Graph> {
    if m < 2 {
        return Err(Error::InvalidSize(format!("ring graph needs m >= 2, got {m}")));
    }
    let mut edges: Vec<_> = (0..m - 1).map(|i| (i, i + 1)).collect();
    if m > 2 {
        edges.push((m - 1, 0));
    }
    Graph::new(m, edges)
}

pub fn make_complete_graph(m: usize) -> Result<Graph> {
    if m < 2 {
        return Err(Error::InvalidSize(format!("complete graph needs m >= 2, got {m}")));
    }
    Graph::new(m, (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))))
}

/// G(m, p) conditioned on connectivity: the whole graph is redrawn from the
/// same RNG stream until it is connected.
pub fn make_erdos_renyi(m: usize, p: f64, seed: u64) -> Result<Graph> {
    if m < 2 {
        return Err(Error::InvalidSize(format!("Erdos-Renyi graph needs m >= 2, got {m}")));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Parameter(format!("edge probability must lie in (0, 1], got {p}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..ER_MAX_ATTEMPTS {
        let mut edges = BTreeSet::new();
        for i in 0..m {
            for j in i + 1..m {
                if rng.random_bool(p) {
                    edges.insert((i, j));
                }
            }
        }
        let graph = Graph { m, edges };
        if graph.is_connected() {
            return Ok(graph);
        }
    }
    Err(Error::GenerationFailure { m, p, attempts: ER_MAX_ATTEMPTS })
}

/// Symmetric doubly stochastic weights compliant with a graph, plus the
/// positive-definite shift once [`psd_shift`] has been applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GossipMatrix {
    w_tilde: Mat,
    shift: Option<(f64, Mat)>,
}

impl GossipMatrix {
    /// Wraps a user-provided `W̃` after checking symmetry and stochasticity.
    pub fn from_weights(w_tilde: Mat) -> Result<Self> {
        let m = w_tilde.nrows();
        if m == 0 || w_tilde.ncols() != m {
            return Err(Error::Shape(format!(
                "gossip matrix must be square, got {}x{}",
                w_tilde.nrows(),
                w_tilde.ncols()
            )));
        }
        if symmetry_error(&w_tilde) > 1e-12 || row_sum_error(&w_tilde) > 1e-12 {
            return Err(Error::Parameter("weights are not symmetric doubly stochastic".into()));
        }
        Ok(GossipMatrix { w_tilde, shift: None })
    }

    pub fn m(&self) -> usize {
        self.w_tilde.nrows()
    }

    pub fn w_tilde(&self) -> &Mat {
        &self.w_tilde
    }

    pub fn c(&self) -> Option<f64> {
        self.shift.as_ref().map(|(c, _)| *c)
    }

    /// The shifted matrix `W`, if [`psd_shift`] has been applied.
    pub fn w(&self) -> Option<&Mat> {
        self.shift.as_ref().map(|(_, w)| w)
    }

    fn shifted(&self) -> Result<&Mat> {
        self.w().ok_or_else(|| Error::Parameter("gossip matrix has not been shifted".into()))
    }

    /// Checks the compliance invariants of `W̃` (and of `W`, when present)
    /// against `graph`.
    pub fn check_compliance(&self, graph: &Graph) -> Result<()> {
        let m = self.m();
        if graph.m() != m {
            return Err(Error::Shape(format!("graph has {} agents, matrix {m}", graph.m())));
        }
        let mut mats = vec![("W~", &self.w_tilde)];
        if let Some((_, w)) = &self.shift {
            mats.push(("W", w));
        }
        for (name, w) in mats {
            if symmetry_error(w) > 1e-12 {
                return Err(Error::Numeric(format!("{name} is not symmetric")));
            }
            if row_sum_error(w) > 1e-12 {
                return Err(Error::Numeric(format!("{name} rows do not sum to 1")));
            }
            for i in 0..m {
                if w[(i, i)] <= 0.0 {
                    return Err(Error::Numeric(format!("{name} has non-positive diagonal at {i}")));
                }
                for j in 0..m {
                    if i != j && (w[(i, j)] > 0.0) != graph.has_edge(i, j) {
                        return Err(Error::Numeric(format!(
                            "{name} sparsity mismatch at ({i}, {j})"
                        )));
                    }
                    if w[(i, j)] < 0.0 {
                        return Err(Error::Numeric(format!("{name} has negative entry ({i}, {j})")));
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn symmetry_error(w: &Mat) -> f64 {
    (w - w.transpose()).abs().max()
}

pub fn row_sum_error(w: &Mat) -> f64 {
    w.row_iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max)
}

/// Metropolis–Hastings weights `w̃_ij = 1 / (1 + max(deg_i, deg_j))`.
pub fn metropolis_hastings(graph: &Graph) -> GossipMatrix {
    let m = graph.m();
    let deg = graph.degrees();
    let mut w = Mat::zeros(m, m);
    for (i, j) in graph.edges() {
        let weight = 1.0 / (1.0 + deg[i].max(deg[j]) as f64);
        w[(i, j)] = weight;
        w[(j, i)] = weight;
    }
    for i in 0..m {
        let off: f64 = (0..m).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    GossipMatrix { w_tilde: w, shift: None }
}

/// `W = (1 − c) I + c W̃` with `c ∈ (0, 1/2)`.
pub fn psd_shift(gossip: &GossipMatrix, c: f64) -> Result<GossipMatrix> {
    if !(c > 0.0 && c < 0.5) {
        return Err(Error::Parameter(format!("c must lie in (0, 1/2), got {c}")));
    }
    let m = gossip.m();
    let w = Mat::identity(m, m) * (1.0 - c) + &gossip.w_tilde * c;
    Ok(GossipMatrix { w_tilde: gossip.w_tilde.clone(), shift: Some((c, w)) })
}

/// Eigenvalue diagnostics of the shifted matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralSummary {
    pub lambda2: f64,
    pub lambda_m: f64,
    pub spectral_gap: f64,
    /// All eigenvalues, nonincreasing.
    pub eigenvalues: Vec<f64>,
}

fn symmetric_eigen(a: &Mat) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    SymmetricEigen::try_new(a.clone(), EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or_else(|| Error::Numeric("symmetric eigensolver did not converge".into()))
}

/// Eigenvalues of a symmetric matrix, sorted nonincreasing.
pub fn sorted_eigenvalues(a: &Mat) -> Result<Vec<f64>> {
    let mut ev: Vec<f64> = symmetric_eigen(a)?.eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    Ok(ev)
}

pub fn spectral_summary(gossip: &GossipMatrix) -> Result<SpectralSummary> {
    let w = gossip.shifted()?;
    let ev = sorted_eigenvalues(w)?;
    if (ev[0] - 1.0).abs() > 1e-10 {
        return Err(Error::Numeric(format!("leading eigenvalue {} differs from 1", ev[0])));
    }
    // m ≥ 2 for any matrix built from a Graph.
    let lambda2 = ev.get(1).copied().unwrap_or(ev[0]);
    Ok(SpectralSummary {
        lambda2,
        lambda_m: *ev.last().unwrap(),
        spectral_gap: 1.0 - lambda2,
        eigenvalues: ev,
    })
}

/// Spectral factors of `I − W`: the PSD square root and the pseudoinverse of
/// that root. Eigenvalues below `1e-12` are treated as the null space.
pub fn laplacian_factors(w: &Mat) -> Result<(Mat, Mat)> {
    let m = w.nrows();
    let lap = Mat::identity(m, m) - w;
    let eig = symmetric_eigen(&lap)?;
    let v = &eig.eigenvectors;
    let mut root = Mat::zeros(m, m);
    let mut pinv = Mat::zeros(m, m);
    for (idx, &lambda) in eig.eigenvalues.iter().enumerate() {
        let col = v.column(idx);
        let outer = col * col.transpose();
        if lambda > 1e-12 {
            root += &outer * lambda.sqrt();
            pinv += &outer / lambda.sqrt();
        }
    }
    Ok((symmetrize(root), symmetrize(pinv)))
}

fn symmetrize(a: Mat) -> Mat {
    (&a + a.transpose()) * 0.5
}

/// `Ł = (I − W)^{1/2}` for the shifted matrix.
pub fn graph_laplacian_sqrt(gossip: &GossipMatrix) -> Result<Mat> {
    Ok(laplacian_factors(gossip.shifted()?)?.0)
}
