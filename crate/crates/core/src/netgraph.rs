//! Communication topologies, Metropolis mixing matrices and the consensus
//! operator `Z = (I - W) ⊗ I_d`.
//!
//! Everything that touches `Z` in solver code goes through [`apply_z`] or
//! [`quadratic_z`], which only read a block's own value and its graph
//! neighbours. Dense spectral work is confined to [`validate_mixing`].

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, MixingError, Result};
use crate::linalg::{axpy, dist_sq, dot, StackedVector};

/// Maximum number of redraws before a random topology is declared too sparse.
pub const MAX_REDRAWS: u64 = 1000;

/// Topology family used by [`build_topology`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Topology {
    Ring,
    ErdosRenyi { p: f64 },
    /// Random geometric graph in the unit square. `None` selects
    /// `sqrt(2 ln n / n)`.
    Geometric { radius: Option<f64> },
}

impl Topology {
    pub fn label(&self) -> &'static str {
        match self {
            Topology::Ring => "ring",
            Topology::ErdosRenyi { .. } => "erdos_renyi",
            Topology::Geometric { .. } => "geometric",
        }
    }
}

/// Undirected simple graph on agents `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    /// Sorted, each pair stored once with `i < j`.
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    seed: u64,
}

impl Graph {
    /// Build from an edge list, normalizing orientation and rejecting
    /// self-loops and duplicates.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], seed: u64) -> Result<Self> {
        let mut norm: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge ({a},{b}) out of range for {n} agents"
                )));
            }
            if a == b {
                return Err(Error::InvalidArgument(format!("self-loop at agent {a}")));
            }
            norm.push((a.min(b), a.max(b)));
        }
        norm.sort_unstable();
        let before = norm.len();
        norm.dedup();
        if norm.len() != before {
            return Err(Error::InvalidArgument("duplicate edge".into()));
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in &norm {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        neighbors.iter_mut().for_each(|v| v.sort_unstable());
        Ok(Self {
            n,
            edges: norm,
            neighbors,
            seed,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return false;
        }
        let mut uf = UnionFind::new(self.n);
        for &(a, b) in &self.edges {
            uf.union(a, b);
        }
        uf.components == 1
    }

    /// Edge-list text: a header `n m`, then one `i j` line per edge, 1-based.
    pub fn to_edge_list(&self) -> String {
        let mut s = format!("{} {}\n", self.n, self.edges.len());
        for &(a, b) in &self.edges {
            let _ = writeln!(s, "{} {}", a + 1, b + 1);
        }
        s
    }

    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidArgument("empty edge list".into()))?;
        let (n, m) = parse_pair(header)?;
        let mut edges = Vec::with_capacity(m);
        for line in lines {
            let (a, b) = parse_pair(line)?;
            if a == 0 || b == 0 {
                return Err(Error::InvalidArgument(format!(
                    "edge list is 1-based, got `{line}`"
                )));
            }
            edges.push((a - 1, b - 1));
        }
        if edges.len() != m {
            return Err(Error::InvalidArgument(format!(
                "header announces {m} edges, found {}",
                edges.len()
            )));
        }
        Self::from_edges(n, &edges, 0)
    }
}

fn parse_pair(line: &str) -> Result<(usize, usize)> {
    let mut it = line.split_whitespace().map(str::parse::<usize>);
    match (it.next(), it.next(), it.next()) {
        (Some(Ok(a)), Some(Ok(b)), None) => Ok((a, b)),
        _ => Err(Error::InvalidArgument(format!("malformed line `{line}`"))),
    }
}

struct UnionFind {
    parent: Vec<usize>,
    components: usize,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            components: n,
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
            self.components -= 1;
        }
    }
}

/// Generate a connected topology. Random families redraw on a fresh stream of
/// the same seed until connected.
pub fn build_topology(kind: Topology, n: usize, seed: u64) -> Result<Graph> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 agents, got {n}")));
    }
    match kind {
        Topology::Ring => {
            let edges: Vec<_> = if n == 2 {
                vec![(0, 1)]
            } else {
                (0..n).map(|i| (i, (i + 1) % n)).collect()
            };
            Graph::from_edges(n, &edges, seed)
        }
        Topology::ErdosRenyi { p } => {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidArgument(format!("edge probability {p} not in (0,1]")));
            }
            redraw_until_connected(n, seed, |rng| {
                let mut edges = Vec::new();
                for i in 0..n {
                    for j in i + 1..n {
                        if rng.random::<f64>() < p {
                            edges.push((i, j));
                        }
                    }
                }
                edges
            })
        }
        Topology::Geometric { radius } => {
            let r = radius.unwrap_or_else(|| (2.0 * (n as f64).ln() / n as f64).sqrt());
            if !(r > 0.0) {
                return Err(Error::InvalidArgument(format!("radius {r} must be positive")));
            }
            redraw_until_connected(n, seed, |rng| {
                let pts: Vec<(f64, f64)> =
                    (0..n).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
                let mut edges = Vec::new();
                for i in 0..n {
                    for j in i + 1..n {
                        let (dx, dy) = (pts[i].0 - pts[j].0, pts[i].1 - pts[j].1);
                        if (dx * dx + dy * dy).sqrt() <= r {
                            edges.push((i, j));
                        }
                    }
                }
                edges
            })
        }
    }
}

fn redraw_until_connected(
    n: usize,
    seed: u64,
    mut draw: impl FnMut(&mut ChaCha8Rng) -> Vec<(usize, usize)>,
) -> Result<Graph> {
    for attempt in 0..MAX_REDRAWS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt);
        let g = Graph::from_edges(n, &draw(&mut rng), seed)?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::Disconnected {
        attempts: MAX_REDRAWS as usize,
    })
}

/// Mixing matrix aligned with a graph. Entries are stored densely (agent
/// counts are small); neighbour lists drive all products.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    n: usize,
    entries: Vec<f64>,
    neighbors: Vec<Vec<usize>>,
}

impl MixingMatrix {
    /// Wrap arbitrary dense weights over `graph` without validation.
    pub fn from_dense(graph: &Graph, rows: &[Vec<f64>]) -> Result<Self> {
        let n = graph.n();
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(MixingError::NotSquare {
                rows: rows.len(),
                cols: rows.first().map_or(0, Vec::len),
            }
            .into());
        }
        Ok(Self {
            n,
            entries: rows.iter().flatten().copied().collect(),
            neighbors: graph.neighbors.clone(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    /// One row per line, entries in shortest round-trip decimal form.
    pub fn to_dense_text(&self) -> String {
        let mut s = String::new();
        for row in self.entries.chunks(self.n) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_dense_text(graph: &Graph, text: &str) -> Result<Self> {
        let rows = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split_whitespace()
                    .map(|t| {
                        t.parse::<f64>()
                            .map_err(|e| Error::InvalidArgument(format!("bad entry `{t}`: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_dense(graph, &rows)
    }
}

/// Metropolis weights: `w_ij = 1/(1 + max(deg_i, deg_j))` on edges, the
/// diagonal absorbs the remainder of each row.
pub fn metropolis_weights(g: &Graph) -> MixingMatrix {
    let n = g.n();
    let mut entries = vec![0.0; n * n];
    for &(i, j) in g.edges() {
        let w = 1.0 / (1.0 + g.degree(i).max(g.degree(j)) as f64);
        entries[i * n + j] = w;
        entries[j * n + i] = w;
    }
    for i in 0..n {
        let off: f64 = g.neighbors(i).iter().map(|&j| entries[i * n + j]).sum();
        entries[i * n + i] = 1.0 - off;
    }
    MixingMatrix {
        n,
        entries,
        neighbors: g.neighbors.clone(),
    }
}

/// Spectral summary of a valid mixing matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralReport {
    /// `max(|λ₂(W)|, |λ_n(W)|)`
    pub varsigma: f64,
    /// `(1 + ς) / (1 - ς)`
    pub kappa_w: f64,
    /// Smallest positive eigenvalue of `Z`, `1 - λ₂(W)`.
    pub lambda_min_plus_z: f64,
    /// Largest eigenvalue of `Z`, `1 - λ_n(W)`.
    pub lambda_max_z: f64,
}

const ROW_SUM_TOL: f64 = 1e-12;
const SPECTRUM_TOL: f64 = 1e-12;

/// Check nonnegativity, graph alignment, symmetry, stochasticity and the
/// spectral bounds `-I ≺ W ⪯ I`, then report the spectral quantities.
pub fn validate_mixing(w: &MixingMatrix) -> Result<SpectralReport, MixingError> {
    let n = w.n;
    if w.entries.len() != n * n {
        return Err(MixingError::NotSquare {
            rows: n,
            cols: w.entries.len() / n.max(1),
        });
    }
    for i in 0..n {
        for j in 0..n {
            let v = w.get(i, j);
            if v < 0.0 {
                return Err(MixingError::NegativeEntry { i, j, value: v });
            }
            if i != j && v != 0.0 && w.neighbors[i].binary_search(&j).is_err() {
                return Err(MixingError::OffGraph { i, j, value: v });
            }
            if v != w.get(j, i) {
                return Err(MixingError::Asymmetric {
                    i,
                    j,
                    a: v,
                    b: w.get(j, i),
                });
            }
        }
        let sum: f64 = (0..n).map(|j| w.get(i, j)).sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(MixingError::RowSum { row: i, sum });
        }
    }
    let dense = DMatrix::from_row_slice(n, n, &w.entries);
    let mut eig: Vec<f64> = dense.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    for &value in &eig {
        if value <= -1.0 + SPECTRUM_TOL || value > 1.0 + SPECTRUM_TOL {
            return Err(MixingError::Spectrum { value });
        }
    }
    let lambda2 = eig.get(1).copied().unwrap_or(0.0);
    let lambda_n = *eig.last().unwrap_or(&1.0);
    let varsigma = lambda2.abs().max(lambda_n.abs());
    if varsigma >= 1.0 - SPECTRUM_TOL {
        return Err(MixingError::NoSpectralGap { varsigma });
    }
    Ok(SpectralReport {
        varsigma,
        kappa_w: (1.0 + varsigma) / (1.0 - varsigma),
        lambda_min_plus_z: 1.0 - lambda2,
        lambda_max_z: 1.0 - lambda_n,
    })
}

fn check_shape(x: &StackedVector, w: &MixingMatrix) -> Result<()> {
    if x.blocks() != w.n {
        return Err(Error::DimensionMismatch {
            expected: w.n,
            got: x.blocks(),
        });
    }
    Ok(())
}

/// `[Zx]_i = x_i - Σ_{j ∈ N_i ∪ {i}} w_ij x_j` given the blocks agent `i`
/// can see. Both [`apply_z`] and the network layer call this, so the two
/// paths agree bitwise.
pub(crate) fn combine_z<'a>(
    w: &MixingMatrix,
    i: usize,
    own: &[f64],
    received: impl Iterator<Item = (usize, &'a [f64])>,
    out: &mut [f64],
) {
    let mut acc = vec![0.0; own.len()];
    combine_w(w, i, own, received, &mut acc);
    for ((o, x), a) in out.iter_mut().zip(own).zip(&acc) {
        *o = x - a;
    }
}

/// `[Wx]_i = Σ_{j ∈ N_i ∪ {i}} w_ij x_j`, own block first then neighbours in
/// index order.
pub(crate) fn combine_w<'a>(
    w: &MixingMatrix,
    i: usize,
    own: &[f64],
    received: impl Iterator<Item = (usize, &'a [f64])>,
    out: &mut [f64],
) {
    out.iter_mut().for_each(|v| *v = 0.0);
    axpy(w.get(i, i), own, out);
    for (j, xj) in received {
        axpy(w.get(i, j), xj, out);
    }
}

/// Apply `Z = (I - W) ⊗ I_d` block-wise using neighbour blocks only.
pub fn apply_z(x: &StackedVector, w: &MixingMatrix) -> Result<StackedVector> {
    check_shape(x, w)?;
    let mut out = StackedVector::zeros(x.blocks(), x.dim());
    for i in 0..w.n {
        let received = w.neighbors[i].iter().map(|&j| (j, x.block(j)));
        combine_z(w, i, x.block(i), received, out.block_mut(i));
    }
    Ok(out)
}

/// Apply `W ⊗ I_d` block-wise using neighbour blocks only.
pub fn apply_w(x: &StackedVector, w: &MixingMatrix) -> Result<StackedVector> {
    check_shape(x, w)?;
    let mut out = StackedVector::zeros(x.blocks(), x.dim());
    for i in 0..w.n {
        let received = w.neighbors[i].iter().map(|&j| (j, x.block(j)));
        combine_w(w, i, x.block(i), received, out.block_mut(i));
    }
    Ok(out)
}

/// Agent `i`'s share `½ Σ_{j ∈ N_i} w_ij ‖x_i - x_j‖²` of `⟨x, Zx⟩`.
///
/// The shares are nonnegative and sum to `⟨x, Zx⟩` without the cancellation
/// that `Σ_i ⟨x_i, [Zx]_i⟩` suffers near consensus.
pub(crate) fn disagreement_local<'a>(
    w: &MixingMatrix,
    i: usize,
    own: &[f64],
    received: impl Iterator<Item = (usize, &'a [f64])>,
) -> f64 {
    let mut s = 0.0;
    for (j, xj) in received {
        s += w.get(i, j) * dist_sq(own, xj);
    }
    0.5 * s
}

/// `⟨x, Zx⟩ = ‖√Z x‖²`, accumulated from per-agent disagreement shares.
pub fn quadratic_z(x: &StackedVector, w: &MixingMatrix) -> Result<f64> {
    check_shape(x, w)?;
    Ok((0..w.n)
        .map(|i| {
            let received = w.neighbors[i].iter().map(|&j| (j, x.block(j)));
            disagreement_local(w, i, x.block(i), received)
        })
        .sum())
}

/// `⟨x, Zx⟩` from an already computed product, summed block by block.
pub fn quadratic_from_product(x: &StackedVector, zx: &StackedVector) -> f64 {
    let s: f64 = x
        .iter_blocks()
        .zip(zx.iter_blocks())
        .map(|(a, b)| dot(a, b))
        .sum();
    s.max(0.0)
}
