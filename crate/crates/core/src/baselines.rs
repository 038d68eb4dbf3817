//! Reference decentralized solvers: PG-EXTRA, NIDS and an IDEAL-style
//! augmented Lagrangian method with an absolute inner tolerance.
//!
//! All three talk only through [`Network`], so their round counts are
//! directly comparable with [`crate::dripalm`].

use crate::dripalm::{ProximalAlSubproblem, Schedule};
use crate::error::{Error, Result};
use crate::linalg::{norm_sq, StackedVector};
use crate::metrics::{self, KktReport};
use crate::objectives::ProblemInstance;
use crate::result::{SolveResult, SolveStatus};
use crate::simnet::Network;
use crate::subsolvers::{self, lipschitz_bound, InnerStatus, SubsolverConfig, Verdict};

/// Iterates with a larger sup-norm are declared divergent.
pub const DIVERGENCE_BOUND: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineConfig {
    /// Step size; `None` selects the method's default from the Lipschitz
    /// constants.
    pub step: Option<f64>,
    pub kkt_tol: f64,
    pub max_comm: u64,
    /// Single-loop methods evaluate the stopping rule every this many
    /// iterations.
    pub check_every: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            step: None,
            kkt_tol: 1e-6,
            max_comm: 30_000,
            check_every: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdealConfig {
    pub eps0: f64,
    pub alpha_tol: f64,
    /// Strong-convexity modulus; `None` takes the instance's ridge weight.
    pub strong_convexity: Option<f64>,
    pub sigma: Schedule,
    pub kkt_tol: f64,
    pub max_comm: u64,
    pub max_outer: usize,
    pub subsolver: SubsolverConfig,
}

impl Default for IdealConfig {
    fn default() -> Self {
        Self {
            eps0: 1e-2,
            alpha_tol: 0.2,
            strong_convexity: None,
            sigma: Schedule::Geometric {
                base: 1.0,
                ratio: 1.5,
                cap: 1e4,
            },
            kkt_tol: 1e-6,
            max_comm: 30_000,
            max_outer: 1000,
            subsolver: SubsolverConfig {
                max_inner: 30_000,
                ..SubsolverConfig::default()
            },
        }
    }
}

fn check_shapes(problem: &ProblemInstance, net: &Network) -> Result<()> {
    if net.n() != problem.n || net.dim() != problem.d {
        return Err(Error::DimensionMismatch {
            expected: problem.n * problem.d,
            got: net.n() * net.dim(),
        });
    }
    Ok(())
}

fn default_step(problem: &ProblemInstance, cfg: &BaselineConfig, factor: f64) -> Result<f64> {
    let step = match cfg.step {
        Some(a) => a,
        None => {
            let l = problem.max_lipschitz().ok_or_else(|| {
                Error::Config("no Lipschitz hint available; pass an explicit step".into())
            })?;
            factor / l
        }
    };
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Config(format!("step must be positive, got {step}")));
    }
    Ok(step)
}

fn local_grads(problem: &ProblemInstance, x: &StackedVector, out: &mut StackedVector) {
    for i in 0..problem.n {
        problem.locals[i].smooth.value_grad(x.block(i), out.block_mut(i));
    }
}

fn local_prox(problem: &ProblemInstance, v: &StackedVector, step: f64, out: &mut StackedVector) {
    for i in 0..problem.n {
        problem.locals[i].prox(v.block(i), step, out.block_mut(i));
    }
}

struct Loop {
    name: &'static str,
    kkt_history: Vec<f64>,
    iters: usize,
}

impl Loop {
    fn finish(
        self,
        x: StackedVector,
        kkt: KktReport,
        net: &Network,
        base: &crate::simnet::CommStats,
        status: SolveStatus,
    ) -> SolveResult {
        let end = net.comm_report();
        let mut kkt_history = self.kkt_history;
        if kkt_history.last() != Some(&kkt.kkt) {
            kkt_history.push(kkt.kkt);
        }
        SolveResult {
            solver: self.name.into(),
            x,
            omega: None,
            outer_iters: self.iters,
            inner_iters: self.iters,
            vector_rounds: end.vector_rounds - base.vector_rounds,
            scalar_rounds: end.scalar_rounds - base.scalar_rounds,
            kkt,
            kkt_history,
            history: Vec::new(),
            status,
        }
    }
}

/// PG-EXTRA with `W̃ = (I + W)/2`:
///
/// `x^{1/2} = W x⁰ - α∇s(x⁰)`, and for `k ≥ 0`
/// `x^{k+3/2} = W x^{k+1} + x^{k+1/2} - W̃ x^k - α(∇s(x^{k+1}) - ∇s(x^k))`,
/// each followed by `x = prox_{αh}(·)`. One exchange per iteration.
pub fn pg_extra_run(problem: &ProblemInstance, net: &mut Network, cfg: &BaselineConfig) -> Result<SolveResult> {
    check_shapes(problem, net)?;
    let alpha = default_step(problem, cfg, 0.5)?;
    let (n, d) = (problem.n, problem.d);
    let base = net.comm_report();
    let mut lp = Loop {
        name: "pg_extra",
        kkt_history: Vec::new(),
        iters: 0,
    };

    let mut x_old = StackedVector::zeros(n, d);
    // W·0 = 0 is known locally, so the start costs no exchange.
    let mut wx_old = StackedVector::zeros(n, d);
    let mut g_old = StackedVector::zeros(n, d);
    local_grads(problem, &x_old, &mut g_old);
    let mut half = wx_old.clone();
    for (h, g) in half.as_mut_slice().iter_mut().zip(g_old.as_slice()) {
        *h -= alpha * g;
    }
    let mut x = StackedVector::zeros(n, d);
    local_prox(problem, &half, alpha, &mut x);
    lp.iters = 1;
    let mut g = StackedVector::zeros(n, d);

    let rounds = |net: &Network| net.comm_report().vector_rounds - base.vector_rounds;
    loop {
        let wx = net.apply_w(&x);
        local_grads(problem, &x, &mut g);
        if lp.iters % cfg.check_every.max(1) == 0 || rounds(net) >= cfg.max_comm {
            let zx = zx_from_w(&x, &wx);
            let kkt = metrics::evaluate(&x, None, problem, net, Some(&zx));
            lp.kkt_history.push(kkt.kkt);
            if kkt.kkt <= cfg.kkt_tol {
                return Ok(lp.finish(x, kkt, net, &base, SolveStatus::Converged));
            }
            if rounds(net) >= cfg.max_comm {
                return Ok(lp.finish(x, kkt, net, &base, SolveStatus::MaxComm));
            }
        }
        {
            let h = half.as_mut_slice();
            let xo = x_old.as_slice();
            let (ws, wo) = (wx.as_slice(), wx_old.as_slice());
            let (gs, go) = (g.as_slice(), g_old.as_slice());
            for j in 0..h.len() {
                h[j] += ws[j] - 0.5 * (xo[j] + wo[j]) - alpha * (gs[j] - go[j]);
            }
        }
        std::mem::swap(&mut x_old, &mut x);
        wx_old = wx;
        std::mem::swap(&mut g_old, &mut g);
        local_prox(problem, &half, alpha, &mut x);
        lp.iters += 1;
        if x.norm_inf() > DIVERGENCE_BOUND || !x.norm_inf().is_finite() {
            let kkt = metrics::evaluate(&x, None, problem, net, None);
            return Ok(lp.finish(x, kkt, net, &base, SolveStatus::Diverged));
        }
    }
}

fn zx_from_w(x: &StackedVector, wx: &StackedVector) -> StackedVector {
    let data = x.as_slice().iter().zip(wx.as_slice()).map(|(a, b)| a - b).collect();
    StackedVector::from_vec(x.blocks(), x.dim(), data).expect("shapes agree")
}

/// NIDS with `W̃ = (I + W)/2`:
///
/// `z¹ = x⁰ - α∇s(x⁰)`, and for `k ≥ 1`
/// `z^{k+1} = z^k - x^k + W̃(2x^k - x^{k-1} - α(∇s(x^k) - ∇s(x^{k-1})))`,
/// each followed by `x = prox_{αh}(z)`. One exchange per iteration.
pub fn nids_run(problem: &ProblemInstance, net: &mut Network, cfg: &BaselineConfig) -> Result<SolveResult> {
    check_shapes(problem, net)?;
    let alpha = default_step(problem, cfg, 1.0)?;
    let (n, d) = (problem.n, problem.d);
    let base = net.comm_report();
    let mut lp = Loop {
        name: "nids",
        kkt_history: Vec::new(),
        iters: 0,
    };

    let mut x_old = StackedVector::zeros(n, d);
    let mut g_old = StackedVector::zeros(n, d);
    local_grads(problem, &x_old, &mut g_old);
    let mut z = x_old.clone();
    for (zi, gi) in z.as_mut_slice().iter_mut().zip(g_old.as_slice()) {
        *zi -= alpha * gi;
    }
    let mut x = StackedVector::zeros(n, d);
    local_prox(problem, &z, alpha, &mut x);
    lp.iters = 1;
    let mut g = StackedVector::zeros(n, d);
    let mut u = StackedVector::zeros(n, d);

    let rounds = |net: &Network| net.comm_report().vector_rounds - base.vector_rounds;
    loop {
        if lp.iters % cfg.check_every.max(1) == 0 || rounds(net) >= cfg.max_comm {
            let kkt = metrics::evaluate(&x, None, problem, net, None);
            lp.kkt_history.push(kkt.kkt);
            if kkt.kkt <= cfg.kkt_tol {
                return Ok(lp.finish(x, kkt, net, &base, SolveStatus::Converged));
            }
            if rounds(net) >= cfg.max_comm {
                return Ok(lp.finish(x, kkt, net, &base, SolveStatus::MaxComm));
            }
        }
        local_grads(problem, &x, &mut g);
        {
            let us = u.as_mut_slice();
            let (xs, xo) = (x.as_slice(), x_old.as_slice());
            let (gs, go) = (g.as_slice(), g_old.as_slice());
            for j in 0..us.len() {
                us[j] = 2.0 * xs[j] - xo[j] - alpha * (gs[j] - go[j]);
            }
        }
        let wu = net.apply_w(&u);
        {
            let zs = z.as_mut_slice();
            let (xs, us, ws) = (x.as_slice(), u.as_slice(), wu.as_slice());
            for j in 0..zs.len() {
                zs[j] += 0.5 * (us[j] + ws[j]) - xs[j];
            }
        }
        std::mem::swap(&mut x_old, &mut x);
        std::mem::swap(&mut g_old, &mut g);
        local_prox(problem, &z, alpha, &mut x);
        lp.iters += 1;
        if x.norm_inf() > DIVERGENCE_BOUND || !x.norm_inf().is_finite() {
            let kkt = metrics::evaluate(&x, None, problem, net, None);
            return Ok(lp.finish(x, kkt, net, &base, SolveStatus::Diverged));
        }
    }
}

/// IDEAL-style inexact ALM. Each outer step runs FISTA on
/// `L_σ(x, y) = F(x) + ⟨Ω,x⟩ + (σ/2)⟨x,Zx⟩` until
/// `(1/λ²)‖∇_x L_σ‖² ≤ ε₀ α^k`, then sets `Ω ← Ω + σZx`.
pub fn ideal_run(problem: &ProblemInstance, net: &mut Network, cfg: &IdealConfig) -> Result<SolveResult> {
    check_shapes(problem, net)?;
    if !problem.is_smooth() {
        return Err(Error::Config(
            "the absolute-criterion ALM needs a smooth strongly convex problem".into(),
        ));
    }
    let lambda = cfg.strong_convexity.unwrap_or(problem.meta.lambda);
    if !(lambda > 0.0) {
        return Err(Error::Config(format!(
            "strong convexity modulus must be positive, got {lambda}"
        )));
    }
    if !(cfg.eps0 > 0.0) || !(cfg.alpha_tol > 0.0 && cfg.alpha_tol < 1.0) {
        return Err(Error::Config(format!(
            "need eps0 > 0 and alpha in (0, 1), got ({}, {})",
            cfg.eps0, cfg.alpha_tol
        )));
    }
    let (n, d) = (problem.n, problem.d);
    let base = net.comm_report();
    let rounds = |net: &Network| net.comm_report().vector_rounds - base.vector_rounds;
    let mut x = StackedVector::zeros(n, d);
    let mut zx = StackedVector::zeros(n, d);
    let mut omega = StackedVector::zeros(n, d);
    let mut kkt_history = Vec::new();
    let mut inner_total = 0;
    let mut k = 0;
    let inv_l2 = 1.0 / (lambda * lambda);

    let (kkt, status) = loop {
        if k >= cfg.max_outer {
            let kkt = metrics::kkt_smooth(&x, &omega, problem, net, Some(&zx));
            break (kkt, SolveStatus::MaxOuter);
        }
        let sigma = cfg.sigma.at(k);
        let eps = cfg.eps0 * cfg.alpha_tol.powi(k as i32);
        let sub = ProximalAlSubproblem {
            problem,
            omega: &omega,
            anchor: &x,
            sigma,
            tau: 0.0,
            lipschitz: lipschitz_bound(problem, sigma, 0.0, net.spectral()),
        };
        let outcome = subsolvers::solve(&sub, net, &x, &zx, &cfg.subsolver, Some(base.vector_rounds + cfg.max_comm), |c, net| {
            let parts: Vec<[f64; 3]> = (0..c.x.blocks())
                .map(|i| [norm_sq(c.grad.block(i)), c.local_values[i], c.probes[i]])
                .collect();
            let [g2, objective, probe] = net.scalar_allreduce(&parts);
            Verdict {
                accept: inv_l2 * g2 <= eps,
                objective,
                probe,
            }
        });
        inner_total += outcome.iterations;
        match outcome.status {
            InnerStatus::Accepted => {
                x = outcome.x;
                zx = outcome.zx;
                for (o, z) in omega.as_mut_slice().iter_mut().zip(zx.as_slice()) {
                    *o += sigma * z;
                }
                k += 1;
                let kkt = metrics::kkt_smooth(&x, &omega, problem, net, Some(&zx));
                kkt_history.push(kkt.kkt);
                if kkt.kkt <= cfg.kkt_tol {
                    break (kkt, SolveStatus::Converged);
                }
                if x.norm_inf() > DIVERGENCE_BOUND || !kkt.kkt.is_finite() {
                    break (kkt, SolveStatus::Diverged);
                }
                if rounds(net) >= cfg.max_comm {
                    break (kkt, SolveStatus::MaxComm);
                }
            }
            InnerStatus::BudgetExhausted | InnerStatus::IterationCap => {
                x = outcome.x;
                zx = outcome.zx;
                let kkt = metrics::kkt_smooth(&x, &omega, problem, net, Some(&zx));
                kkt_history.push(kkt.kkt);
                let status = if outcome.status == InnerStatus::IterationCap {
                    SolveStatus::InnerCap
                } else {
                    SolveStatus::MaxComm
                };
                break (kkt, status);
            }
        }
    };
    if kkt_history.is_empty() {
        kkt_history.push(kkt.kkt);
    }
    let end = net.comm_report();
    Ok(SolveResult {
        solver: "ideal".into(),
        x,
        omega: Some(omega),
        outer_iters: k,
        inner_iters: inner_total,
        vector_rounds: end.vector_rounds - base.vector_rounds,
        scalar_rounds: end.scalar_rounds - base.scalar_rounds,
        kkt,
        kkt_history,
        history: Vec::new(),
        status,
    })
}
