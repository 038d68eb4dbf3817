//! KKT residuals used as stopping rules, and outer-loop diagnostics.
//!
//! All communication performed here is charged to the network's monitor
//! counters.

use crate::linalg::{axpy, norm, norm_sq, StackedVector};
use crate::objectives::{soft_threshold, Family, ProblemInstance};
use crate::result::OuterRecord;
use crate::simnet::Network;

/// Relative magnitude below which an averaged coordinate is zeroed before the
/// LASSO residual is evaluated.
pub const REFINE_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KktReport {
    /// `‖√Z x‖`
    pub consensus_res: f64,
    pub stationarity_res: f64,
    /// `max(consensus_res, stationarity_res)`
    pub kkt: f64,
}

impl KktReport {
    fn new(consensus_res: f64, stationarity_res: f64) -> Self {
        Self {
            consensus_res,
            stationarity_res,
            kkt: consensus_res.max(stationarity_res),
        }
    }
}

/// Per-agent shares of `⟨x, Zx⟩`. A cached `Zx` means `x` was just exchanged,
/// so the neighbour blocks are already at hand; otherwise one monitor
/// exchange is spent.
fn shares(x: &StackedVector, net: &mut Network, zx: Option<&StackedVector>) -> Vec<f64> {
    if zx.is_none() {
        net.monitor_apply_z(x);
    }
    net.disagreement_shares(x)
}

/// `max{‖√Z x‖, ‖∇F(x) + Ω‖}` for smooth problems, with `Ω = √Z y`.
///
/// Pass the cached `Zx` when the caller already holds it; otherwise one
/// monitor exchange is spent.
pub fn kkt_smooth(
    x: &StackedVector,
    omega: &StackedVector,
    problem: &ProblemInstance,
    net: &mut Network,
    zx: Option<&StackedVector>,
) -> KktReport {
    let q = shares(x, net, zx);
    let mut g = vec![0.0; x.dim()];
    let parts: Vec<[f64; 2]> = (0..x.blocks())
        .map(|i| {
            problem.locals[i].smooth.value_grad(x.block(i), &mut g);
            axpy(1.0, omega.block(i), &mut g);
            [q[i], norm_sq(&g)]
        })
        .collect();
    let [quad, stat] = net.monitor_allreduce(&parts);
    KktReport::new(quad.max(0.0).sqrt(), stat.max(0.0).sqrt())
}

/// `max{‖√Z x‖, ‖Σ_i ∇f_i(x̄)‖}` for smooth problems solved by methods
/// without an explicit transformed dual.
pub fn kkt_smooth_averaged(
    x: &StackedVector,
    problem: &ProblemInstance,
    net: &mut Network,
    zx: Option<&StackedVector>,
) -> KktReport {
    let quad: f64 = shares(x, net, zx).iter().sum();
    let xbar = net.monitor_average(x);
    let grad = problem.smooth_grad_at(&xbar);
    KktReport::new(quad.max(0.0).sqrt(), norm(&grad))
}

/// Zero coordinates of `v` whose magnitude relative to `‖v‖_∞` is below
/// [`REFINE_THRESHOLD`]. A zero vector is left untouched.
pub fn refine_average(v: &mut [f64]) {
    let inf = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if inf == 0.0 {
        return;
    }
    for x in v.iter_mut() {
        if x.abs() / inf < REFINE_THRESHOLD {
            *x = 0.0;
        }
    }
}

/// Relative prox residual of the refined average for least squares plus ℓ₁:
/// `‖x̄ - prox_{λ‖·‖₁}(x̄ - Aᵀ(Ax̄ - b))‖ / (1 + ‖Ax̄ - b‖ + ‖x̄‖)`.
///
/// `Aᵀ(Ax̄ - b)` and `‖Ax̄ - b‖² = 2 Σ_i ½‖A_i x̄ - b_i‖²` are assembled from
/// the agents' least-squares oracles.
pub fn lasso_prox_residual(xbar: &[f64], problem: &ProblemInstance) -> f64 {
    let lambda = problem.total_l1_weight().unwrap_or(0.0);
    let mut grad = vec![0.0; xbar.len()];
    let mut g = vec![0.0; xbar.len()];
    let mut half_sq = 0.0;
    for l in &problem.locals {
        half_sq += l.smooth.value_grad(xbar, &mut g);
        axpy(1.0, &g, &mut grad);
    }
    let resid_norm = (2.0 * half_sq).max(0.0).sqrt();
    let diff: f64 = xbar
        .iter()
        .zip(&grad)
        .map(|(x, g)| {
            let p = soft_threshold(x - g, lambda);
            (x - p) * (x - p)
        })
        .sum::<f64>()
        .sqrt();
    diff / (1.0 + resid_norm + norm(xbar))
}

/// LASSO stopping residual: consensus error of the stacked iterate and the
/// relative prox residual of the refined network average.
pub fn kkt_lasso(
    x: &StackedVector,
    problem: &ProblemInstance,
    net: &mut Network,
    zx: Option<&StackedVector>,
) -> KktReport {
    let parts: Vec<[f64; 1]> = shares(x, net, zx).into_iter().map(|q| [q]).collect();
    let [quad] = net.monitor_allreduce(&parts);
    let mut xbar = net.monitor_average(x);
    refine_average(&mut xbar);
    KktReport::new(quad.max(0.0).sqrt(), lasso_prox_residual(&xbar, problem))
}

/// Stopping residual appropriate for the problem family. LASSO instances use
/// [`kkt_lasso`]; smooth instances use [`kkt_smooth`] when a transformed dual
/// is available and [`kkt_smooth_averaged`] otherwise.
pub fn evaluate(
    x: &StackedVector,
    omega: Option<&StackedVector>,
    problem: &ProblemInstance,
    net: &mut Network,
    zx: Option<&StackedVector>,
) -> KktReport {
    if problem.meta.family == Family::Lasso || problem.total_l1_weight().is_some() {
        return kkt_lasso(x, problem, net, zx);
    }
    match omega {
        Some(o) => kkt_smooth(x, o, problem, net, zx),
        None => kkt_smooth_averaged(x, problem, net, zx),
    }
}

/// First and last values of the outer-loop residual sequences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticSummary {
    pub first: [f64; 3],
    pub last: [f64; 3],
}

impl DiagnosticSummary {
    /// Every final norm is below `tol` and below its first recorded value.
    pub fn decayed_below(&self, tol: f64) -> bool {
        self.first
            .iter()
            .zip(&self.last)
            .all(|(f, l)| *l < tol && *l < *f)
    }
}

/// Summarize `(‖Δ^k‖, ‖p^k‖, ‖u^k‖)` over a run. `None` for an empty history.
pub fn theorem1_diagnostics(history: &[OuterRecord]) -> Option<DiagnosticSummary> {
    let first = history.first()?;
    let last = history.last()?;
    Some(DiagnosticSummary {
        first: [first.norm_delta, first.norm_p, first.norm_u],
        last: [last.norm_delta, last.norm_p, last.norm_u],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::{build_topology, Topology};
    use crate::objectives::{quadratic_local, ProblemInstance};

    fn net(n: usize, d: usize) -> Network {
        Network::metropolis(build_topology(Topology::Ring, n, 0).unwrap(), d).unwrap()
    }

    #[test]
    fn consensus_zero_objective_gives_zero() {
        let locals = (0..3).map(|_| quadratic_local(vec![0.0; 2], 0.0)).collect();
        let p = ProblemInstance::from_locals(locals).unwrap();
        let mut nw = net(3, 2);
        let x = StackedVector::replicate(3, &[1.0, -4.0]);
        let rep = kkt_smooth(&x, &StackedVector::zeros(3, 2), &p, &mut nw, None);
        assert_eq!(rep.kkt, 0.0);
        assert_eq!(nw.comm_report().vector_rounds, 0);
        assert_eq!(nw.comm_report().monitor_vector_rounds, 1);
    }

    #[test]
    fn consensus_res_squared_is_quadratic_form() {
        let locals = (0..4).map(|_| quadratic_local(vec![0.0], 1.0)).collect();
        let p = ProblemInstance::from_locals(locals).unwrap();
        let mut nw = net(4, 1);
        let x = StackedVector::from_vec(4, 1, vec![1.0, 2.0, -1.0, 0.5]).unwrap();
        let rep = kkt_smooth(&x, &StackedVector::zeros(4, 1), &p, &mut nw, None);
        let q = crate::netgraph::quadratic_z(&x, nw.mixing()).unwrap();
        assert!((rep.consensus_res * rep.consensus_res - q).abs() <= 4.0 * f64::EPSILON * q);
        assert!(q > 0.0);
    }

    #[test]
    fn refinement_threshold() {
        let mut v = vec![1.0, 1e-12];
        refine_average(&mut v);
        assert_eq!(v, vec![1.0, 0.0]);
        let mut z = vec![0.0, 0.0];
        refine_average(&mut z);
        assert_eq!(z, vec![0.0, 0.0]);
    }

    #[test]
    fn lasso_residual_zero_at_zero_data() {
        use crate::linalg::DenseMatrix;
        use crate::objectives::lasso_local;
        let locals = (0..2)
            .map(|_| lasso_local(DenseMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap(), vec![0.0], 1.0, 2).unwrap())
            .collect();
        let p = ProblemInstance::from_locals(locals).unwrap();
        let mut nw = net(2, 2);
        let rep = kkt_lasso(&StackedVector::zeros(2, 2), &p, &mut nw, None);
        assert_eq!(rep.kkt, 0.0);
    }
}
