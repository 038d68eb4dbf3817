use std::fmt;

use crate::linalg::StackedVector;
use crate::metrics::KktReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    /// The vector-round budget ran out.
    MaxComm,
    MaxOuter,
    /// An inner solve hit its iteration cap before its acceptance test held.
    InnerCap,
    Diverged,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxComm => "max_comm",
            SolveStatus::MaxOuter => "max_outer",
            SolveStatus::InnerCap => "inner_cap",
            SolveStatus::Diverged => "diverged",
        }
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-outer-iteration record for double-loop solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord {
    /// Index of the produced iterate (`x^k`, k ≥ 1).
    pub k: usize,
    pub sigma: f64,
    pub tau: f64,
    pub inner_iters: usize,
    pub norm_delta: f64,
    pub norm_p: f64,
    pub norm_u: f64,
    pub objective: f64,
    pub kkt: f64,
    pub vector_rounds: u64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub solver: String,
    pub x: StackedVector,
    /// Transformed dual `√Z y`, for methods that carry one.
    pub omega: Option<StackedVector>,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub vector_rounds: u64,
    pub scalar_rounds: u64,
    pub kkt: KktReport,
    pub kkt_history: Vec<f64>,
    pub history: Vec<OuterRecord>,
    pub status: SolveStatus,
}

impl SolveResult {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    /// Diagnostic history as CSV with a header line.
    pub fn history_csv(&self) -> String {
        let mut s =
            String::from("k,sigma_k,tau_k,norm_delta,norm_p,norm_u,kkt,vector_rounds\n");
        for r in &self.history {
            s.push_str(&format!(
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{}\n",
                r.k, r.sigma, r.tau, r.norm_delta, r.norm_p, r.norm_u, r.kkt, r.vector_rounds
            ));
        }
        s
    }
}
