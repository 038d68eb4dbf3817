//! Synchronous round-based message passing.
//!
//! Solvers never index another agent's block directly: every cross-agent
//! read goes through [`Network::neighbor_exchange`] (one vector round) or
//! [`Network::scalar_allreduce`] (one scalar round). Stopping tests use the
//! `monitor_*` entry points, which are tallied separately so that the
//! algorithmic round counts stay comparable across solvers.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::StackedVector;
use crate::netgraph::{
    combine_w, combine_z, disagreement_local, metropolis_weights, validate_mixing, Graph, MixingMatrix, SpectralReport,
};

/// Largest tuple a single scalar aggregation may carry.
pub const MAX_SCALAR_ARITY: usize = 8;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RoundCounts {
    pub vector_rounds: u64,
    pub scalar_rounds: u64,
}

/// Communication counters. `vector_rounds` is the headline round count.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommStats {
    pub vector_rounds: u64,
    pub scalar_rounds: u64,
    /// Rounds spent on stopping tests and diagnostics.
    pub monitor_vector_rounds: u64,
    pub monitor_scalar_rounds: u64,
    /// Algorithmic rounds keyed by the tag active when they were spent.
    pub per_solver: BTreeMap<String, RoundCounts>,
}

/// What each agent received in one exchange: `(sender, block)` pairs in
/// ascending sender order.
pub struct NeighborViews<'a> {
    views: Vec<Vec<(usize, &'a [f64])>>,
}

impl<'a> NeighborViews<'a> {
    pub fn agent(&self, i: usize) -> &[(usize, &'a [f64])] {
        &self.views[i]
    }
}

#[derive(Debug, Clone)]
pub struct Network {
    graph: Graph,
    mixing: MixingMatrix,
    spectral: SpectralReport,
    d: usize,
    stats: CommStats,
    tag: String,
}

impl Network {
    /// Validates `mixing` against its assumptions before accepting it.
    pub fn new(graph: Graph, mixing: MixingMatrix, d: usize) -> Result<Self> {
        if mixing.n() != graph.n() {
            return Err(Error::DimensionMismatch {
                expected: graph.n(),
                got: mixing.n(),
            });
        }
        let spectral = validate_mixing(&mixing)?;
        Ok(Self {
            graph,
            mixing,
            spectral,
            d,
            stats: CommStats::default(),
            tag: String::from("default"),
        })
    }

    pub fn metropolis(graph: Graph, d: usize) -> Result<Self> {
        let w = metropolis_weights(&graph);
        Self::new(graph, w, d)
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn mixing(&self) -> &MixingMatrix {
        &self.mixing
    }

    pub fn spectral(&self) -> &SpectralReport {
        &self.spectral
    }

    /// Attribute subsequent algorithmic rounds to `tag`.
    pub fn set_solver_tag(&mut self, tag: &str) {
        self.tag = tag.to_string();
    }

    pub fn comm_report(&self) -> CommStats {
        self.stats.clone()
    }

    pub fn reset_counters(&mut self) {
        self.stats = CommStats::default();
    }

    fn check(&self, x: &StackedVector) {
        assert_eq!(x.blocks(), self.n(), "stacked vector has wrong block count");
        assert_eq!(x.dim(), self.d, "stacked vector has wrong block dimension");
    }

    fn views<'a>(&self, x: &'a StackedVector) -> NeighborViews<'a> {
        let views = (0..self.n())
            .map(|i| {
                self.graph
                    .neighbors(i)
                    .iter()
                    .map(|&j| (j, x.block(j)))
                    .collect()
            })
            .collect();
        NeighborViews { views }
    }

    /// Each agent sends its block to all neighbours. One vector round.
    pub fn neighbor_exchange<'a>(&mut self, x: &'a StackedVector) -> NeighborViews<'a> {
        self.check(x);
        self.stats.vector_rounds += 1;
        self.stats
            .per_solver
            .entry(self.tag.clone())
            .or_default()
            .vector_rounds += 1;
        self.views(x)
    }

    fn combine(
        &self,
        x: &StackedVector,
        views: &NeighborViews<'_>,
        z: bool,
    ) -> StackedVector {
        let mut out = StackedVector::zeros(x.blocks(), x.dim());
        for i in 0..self.n() {
            let recv = views.agent(i).iter().copied();
            if z {
                combine_z(&self.mixing, i, x.block(i), recv, out.block_mut(i));
            } else {
                combine_w(&self.mixing, i, x.block(i), recv, out.block_mut(i));
            }
        }
        out
    }

    /// `Zx` via one exchange followed by local Metropolis combination.
    pub fn apply_z(&mut self, x: &StackedVector) -> StackedVector {
        let views = self.neighbor_exchange(x);
        self.combine(x, &views, true)
    }

    /// `Wx` via one exchange followed by local combination.
    pub fn apply_w(&mut self, x: &StackedVector) -> StackedVector {
        let views = self.neighbor_exchange(x);
        self.combine(x, &views, false)
    }

    /// Per-agent shares of `⟨x, Zx⟩` (see [`crate::netgraph::quadratic_z`]),
    /// computed from the neighbour blocks delivered when `x` was last
    /// exchanged. Spends no round; callers must only pass a vector that has
    /// just gone through [`Network::neighbor_exchange`] or one of the
    /// products built on it.
    pub fn disagreement_shares(&self, x: &StackedVector) -> Vec<f64> {
        self.check(x);
        (0..self.n())
            .map(|i| {
                let recv = self.graph.neighbors(i).iter().map(|&j| (j, x.block(j)));
                disagreement_local(&self.mixing, i, x.block(i), recv)
            })
            .collect()
    }

    fn reduce<const K: usize>(&self, locals: &[[f64; K]]) -> [f64; K] {
        assert!(K <= MAX_SCALAR_ARITY, "scalar tuple arity {K} exceeds {MAX_SCALAR_ARITY}");
        assert_eq!(locals.len(), self.n(), "one tuple per agent");
        let mut sum = [0.0; K];
        for t in locals {
            for (s, v) in sum.iter_mut().zip(t) {
                *s += v;
            }
        }
        sum
    }

    /// Network-wide sum of small per-agent tuples, accumulated in agent
    /// index order. One scalar round.
    pub fn scalar_allreduce<const K: usize>(&mut self, locals: &[[f64; K]]) -> [f64; K] {
        let sum = self.reduce(locals);
        self.stats.scalar_rounds += 1;
        self.stats
            .per_solver
            .entry(self.tag.clone())
            .or_default()
            .scalar_rounds += 1;
        sum
    }

    /// Aggregation for stopping tests and diagnostics.
    pub fn monitor_allreduce<const K: usize>(&mut self, locals: &[[f64; K]]) -> [f64; K] {
        let sum = self.reduce(locals);
        self.stats.monitor_scalar_rounds += 1;
        sum
    }

    /// `Zx` for stopping tests and diagnostics.
    pub fn monitor_apply_z(&mut self, x: &StackedVector) -> StackedVector {
        self.check(x);
        self.stats.monitor_vector_rounds += 1;
        let views = self.views(x);
        self.combine(x, &views, true)
    }

    /// Network average `(1/n) Σ_i x_i` made available to every agent;
    /// charged as one monitor vector round.
    pub fn monitor_average(&mut self, x: &StackedVector) -> Vec<f64> {
        self.check(x);
        self.stats.monitor_vector_rounds += 1;
        x.block_mean()
    }
}
