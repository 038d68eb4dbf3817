//! Decentralized consensus optimization over a simulated multi-agent network.
//!
//! The crate is organized around the double-loop proximal augmented Lagrangian
//! solver in [`dripalm`], which accepts inexact subproblem solutions through a
//! relative-type error test evaluated with three scalars per agent. Supporting
//! modules provide topologies and mixing matrices ([`netgraph`]), local
//! objective oracles and synthetic instances ([`objectives`]), the synchronous
//! message-passing layer with communication accounting ([`simnet`]), inner
//! solvers ([`subsolvers`]), reference methods ([`baselines`]) and stopping
//! metrics ([`metrics`]).

pub mod baselines;
pub mod dripalm;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod netgraph;
pub mod objectives;
pub mod result;
pub mod simnet;
pub mod subsolvers;

pub use error::{Error, MixingError, Result};
pub use linalg::{DenseMatrix, StackedVector};
pub use netgraph::{Graph, MixingMatrix, SpectralReport, Topology};
pub use objectives::{LocalObjective, ProblemInstance};
pub use result::{SolveResult, SolveStatus};
pub use simnet::{CommStats, Network};
