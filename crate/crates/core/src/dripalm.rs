//! Decentralized relative-type inexact proximal augmented Lagrangian method.
//!
//! The dual is carried in transformed form `Ω = √Z y` and updated as
//! `Ω ← Ω + σ Z x⁺`, so `√Z` is never formed. Inner solves are accepted by a
//! relative test verified with a single scalar aggregation of per-agent
//! stacks `(E¹, E², E³)`.

use crate::error::{Error, Result};
use crate::linalg::{axpy, dist_sq, dot, norm_sq, StackedVector};
use crate::metrics;
use crate::objectives::ProblemInstance;
use crate::result::{OuterRecord, SolveResult, SolveStatus};
use crate::simnet::Network;
use crate::subsolvers::{
    self, lipschitz_bound, CompositeSubproblem, InnerStatus, SubsolverConfig, Verdict,
};

/// A positive parameter sequence indexed by the outer counter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    Constant(f64),
    /// `min(base · ratio^k, cap)`
    Geometric { base: f64, ratio: f64, cap: f64 },
}

impl Schedule {
    pub fn at(&self, k: usize) -> f64 {
        match *self {
            Schedule::Constant(v) => v,
            Schedule::Geometric { base, ratio, cap } => {
                (base * ratio.powi(k.min(i32::MAX as usize) as i32)).min(cap)
            }
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let ok = match *self {
            Schedule::Constant(v) => v > 0.0 && v.is_finite(),
            Schedule::Geometric { base, ratio, cap } => {
                base > 0.0 && ratio >= 1.0 && cap >= base && cap.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("{name} schedule must be positive and bounded: {self:?}")))
        }
    }
}

/// When to reset the auxiliary point `w^{k+1} ← x^{k+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestartSchedule {
    Never,
    Always,
    /// Every outer step for `k ≤ 3`, every second for `4 ≤ k ≤ 10`, every
    /// third afterwards.
    Default,
}

impl RestartSchedule {
    pub fn fires(&self, k: usize) -> bool {
        match self {
            RestartSchedule::Never => false,
            RestartSchedule::Always => true,
            RestartSchedule::Default => restart_decision(k),
        }
    }
}

/// Phase-anchored restart cadence: `k ∈ {0,1,2,3}`, then `{4,6,8,10}`, then
/// `{11, 14, 17, ...}`.
pub fn restart_decision(k: usize) -> bool {
    match k {
        0..=3 => true,
        4..=10 => (k - 4) % 2 == 0,
        _ => (k - 11) % 3 == 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DripalmConfig {
    pub rho: f64,
    pub sigma: Schedule,
    pub tau: Schedule,
    pub restart: RestartSchedule,
    pub max_outer: usize,
    /// Budget on algorithmic vector rounds.
    pub max_total_comm: u64,
    pub kkt_tol: f64,
    pub subsolver: SubsolverConfig,
}

impl Default for DripalmConfig {
    fn default() -> Self {
        Self {
            rho: 0.99,
            sigma: Schedule::Geometric {
                base: 1.0,
                ratio: 1.5,
                cap: 1e4,
            },
            tau: Schedule::Constant(1e-3),
            restart: RestartSchedule::Default,
            max_outer: 1000,
            max_total_comm: 30_000,
            kkt_tol: 1e-6,
            // Late LASSO subproblems at the σ cap need more than the generic
            // inner default; the round budget is the real safety valve.
            subsolver: SubsolverConfig {
                max_inner: 30_000,
                ..SubsolverConfig::default()
            },
        }
    }
}

impl DripalmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::Config(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        if self.rho == 0.0 {
            return Err(Error::Config(
                "rho = 0 requires an exact subsolver; the inner solvers are iterative".into(),
            ));
        }
        self.sigma.validate("sigma")?;
        self.tau.validate("tau")?;
        if self.subsolver.max_inner == 0 {
            return Err(Error::Config("max_inner must be at least 1".into()));
        }
        if !(self.kkt_tol >= 0.0) {
            return Err(Error::Config(format!("kkt_tol must be nonnegative, got {}", self.kkt_tol)));
        }
        Ok(())
    }
}

/// Iterate state between outer steps.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub k: usize,
    pub x: StackedVector,
    pub w: StackedVector,
    /// Transformed dual `√Z y^k`.
    pub omega: StackedVector,
    /// Cached `Z x^k`.
    pub zx: StackedVector,
}

impl SolverState {
    /// `x⁰ = w⁰ = 0`, `Ω⁰ = 0`. No communication is needed since `Z·0 = 0`.
    pub fn zero(n: usize, d: usize) -> Self {
        let z = StackedVector::zeros(n, d);
        Self {
            k: 0,
            x: z.clone(),
            w: z.clone(),
            omega: z.clone(),
            zx: z,
        }
    }

    /// Start from `x⁰` with `w⁰ = x⁰`; one exchange forms `Z x⁰`.
    pub fn from_initial(x0: StackedVector, net: &mut Network) -> Self {
        let zx = net.apply_z(&x0);
        Self {
            k: 0,
            w: x0.clone(),
            omega: StackedVector::zeros(x0.blocks(), x0.dim()),
            x: x0,
            zx,
        }
    }
}

/// `Ψ_k(x) = F(x) + ⟨Ω,x⟩ + (σ/2)⟨x,Zx⟩ + (τ/2σ)‖x - x^k‖²`, split per agent.
pub struct ProximalAlSubproblem<'a> {
    pub problem: &'a ProblemInstance,
    pub omega: &'a StackedVector,
    pub anchor: &'a StackedVector,
    pub sigma: f64,
    pub tau: f64,
    pub lipschitz: Option<f64>,
}

impl CompositeSubproblem for ProximalAlSubproblem<'_> {
    fn blocks(&self) -> usize {
        self.problem.n
    }

    fn dim(&self) -> usize {
        self.problem.d
    }

    fn smooth_local(&self, i: usize, x_i: &[f64], zx_i: &[f64], grad: &mut [f64]) -> f64 {
        let f = self.problem.locals[i].smooth.value_grad(x_i, grad);
        let om = self.omega.block(i);
        let anchor = self.anchor.block(i);
        let ratio = self.tau / self.sigma;
        for (j, g) in grad.iter_mut().enumerate() {
            *g += om[j] + self.sigma * zx_i[j] + ratio * (x_i[j] - anchor[j]);
        }
        f + dot(om, x_i) + 0.5 * self.sigma * dot(x_i, zx_i) + 0.5 * ratio * dist_sq(x_i, anchor)
    }

    fn nonsmooth_local(&self, i: usize, x_i: &[f64]) -> f64 {
        self.problem.locals[i].nonsmooth_value(x_i)
    }

    fn prox_local(&self, i: usize, v: &[f64], step: f64, out: &mut [f64]) {
        self.problem.locals[i].prox(v, step, out);
    }

    fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }
}

/// Error term at a candidate: `∇s(x⁺) + (v - x⁺)/η` when `x⁺ = prox_{ηh}(v)`,
/// which is the smooth gradient itself when there is no prox input.
pub fn compute_delta(
    grad: &StackedVector,
    x_plus: &StackedVector,
    prox_input: Option<(&StackedVector, f64)>,
) -> StackedVector {
    let mut delta = grad.clone();
    if let Some((v, eta)) = prox_input {
        let inv = 1.0 / eta;
        for ((d, vi), xi) in delta
            .as_mut_slice()
            .iter_mut()
            .zip(v.as_slice())
            .zip(x_plus.as_slice())
        {
            *d += (vi - xi) * inv;
        }
    }
    delta
}

/// Agent `i`'s stack `(E¹, E², E³)`. `share` is the agent's part of
/// `⟨x⁺, Zx⁺⟩` from [`Network::disagreement_shares`].
#[allow(clippy::too_many_arguments)]
pub fn estack(
    i: usize,
    sigma: f64,
    tau: f64,
    w: &StackedVector,
    x_k: &StackedVector,
    x_plus: &StackedVector,
    share: f64,
    delta: &StackedVector,
) -> [f64; 3] {
    let (wi, xk, xp, di) = (w.block(i), x_k.block(i), x_plus.block(i), delta.block(i));
    let mut e1 = 0.0;
    for j in 0..di.len() {
        e1 += (wi[j] - xp[j]) * sigma * di[j];
    }
    let e2 = sigma * sigma * norm_sq(di);
    let e3 = sigma * sigma * share + tau * dist_sq(xp, xk);
    [e1, e2, e3]
}

/// `2|ΣE¹| + ΣE² ≤ ρ ΣE³` on aggregated stacks.
pub fn criterion_holds(rho: f64, sums: [f64; 3]) -> bool {
    2.0 * sums[0].abs() + sums[1] <= rho * sums[2]
}

/// Distributed relative-criterion check on a candidate `x⁺` that has just
/// been exchanged; exactly one scalar aggregation.
#[allow(clippy::too_many_arguments)]
pub fn check_criterion(
    rho: f64,
    sigma: f64,
    tau: f64,
    w: &StackedVector,
    x_k: &StackedVector,
    x_plus: &StackedVector,
    delta: &StackedVector,
    net: &mut Network,
) -> bool {
    let shares = net.disagreement_shares(x_plus);
    let parts: Vec<[f64; 3]> = (0..x_plus.blocks())
        .map(|i| estack(i, sigma, tau, w, x_k, x_plus, shares[i], delta))
        .collect();
    criterion_holds(rho, net.scalar_allreduce(&parts))
}

/// What one outer step produced.
#[derive(Debug, Clone)]
pub struct OuterStep {
    pub status: InnerStatus,
    pub inner_iters: usize,
    pub sigma: f64,
    pub tau: f64,
    pub norm_delta: f64,
    pub norm_p: f64,
    pub norm_u: f64,
    /// Last inner iterate and its `Z` product; equals the new state on
    /// acceptance.
    pub x: StackedVector,
    pub zx: StackedVector,
}

/// Steps 1–3 of one outer iteration: inner solve from the warm start `x^k`
/// until the relative test holds, then the dual and auxiliary updates.
///
/// `deadline` is the absolute vector-round count at which the inner loop
/// gives up. On budget exhaustion the state is left unchanged and the last
/// inner iterate is returned. Hitting the inner cap is an error.
pub fn outer_iteration(
    state: &mut SolverState,
    config: &DripalmConfig,
    problem: &ProblemInstance,
    net: &mut Network,
    deadline: Option<u64>,
) -> Result<OuterStep> {
    let k = state.k;
    let sigma = config.sigma.at(k);
    let tau = config.tau.at(k);
    let sub = ProximalAlSubproblem {
        problem,
        omega: &state.omega,
        anchor: &state.x,
        sigma,
        tau,
        lipschitz: lipschitz_bound(problem, sigma, tau, net.spectral()),
    };
    let rho = config.rho;
    let (w, x_k) = (&state.w, &state.x);
    let outcome = subsolvers::solve(
        &sub,
        net,
        &state.x,
        &state.zx,
        &config.subsolver,
        deadline,
        |c, net| {
            let shares = net.disagreement_shares(c.x);
            let parts: Vec<[f64; 5]> = (0..c.x.blocks())
                .map(|i| {
                    let [e1, e2, e3] = estack(i, sigma, tau, w, x_k, c.x, shares[i], c.delta);
                    [e1, e2, e3, c.local_values[i], c.probes[i]]
                })
                .collect();
            let [e1, e2, e3, objective, probe] = net.scalar_allreduce(&parts);
            Verdict {
                accept: criterion_holds(rho, [e1, e2, e3]),
                objective,
                probe,
            }
        },
    );
    match outcome.status {
        InnerStatus::IterationCap => {
            return Err(Error::InnerCapExceeded {
                rho,
                outer: k,
                inner: outcome.iterations,
            })
        }
        InnerStatus::BudgetExhausted => {
            return Ok(OuterStep {
                status: outcome.status,
                inner_iters: outcome.iterations,
                sigma,
                tau,
                norm_delta: f64::NAN,
                norm_p: f64::NAN,
                norm_u: f64::NAN,
                x: outcome.x,
                zx: outcome.zx,
            })
        }
        InnerStatus::Accepted => {}
    }

    let (x_new, zx_new, delta) = (outcome.x, outcome.zx, outcome.delta);
    let ratio = tau / sigma;
    let shares = net.disagreement_shares(&x_new);
    let diag: Vec<[f64; 3]> = (0..x_new.blocks())
        .map(|i| {
            let (di, xn, xo) = (delta.block(i), x_new.block(i), state.x.block(i));
            let p_sq: f64 = (0..di.len())
                .map(|j| {
                    let p = di[j] - ratio * (xn[j] - xo[j]);
                    p * p
                })
                .sum();
            [norm_sq(di), p_sq, shares[i]]
        })
        .collect();
    let [d_sq, p_sq, u_sq] = net.monitor_allreduce(&diag);

    axpy(sigma, zx_new.as_slice(), state.omega.as_mut_slice());
    if config.restart.fires(k) {
        state.w.as_mut_slice().copy_from_slice(x_new.as_slice());
    } else {
        axpy(-sigma, delta.as_slice(), state.w.as_mut_slice());
    }
    state.x = x_new.clone();
    state.zx = zx_new.clone();
    state.k = k + 1;

    Ok(OuterStep {
        status: InnerStatus::Accepted,
        inner_iters: outcome.iterations,
        sigma,
        tau,
        norm_delta: d_sq.sqrt(),
        norm_p: p_sq.sqrt(),
        norm_u: u_sq.max(0.0).sqrt(),
        x: x_new,
        zx: zx_new,
    })
}

/// Run outer iterations from the zero start until the KKT residual drops to
/// `kkt_tol`, the vector-round budget is spent, or `max_outer` is reached.
pub fn run(config: &DripalmConfig, problem: &ProblemInstance, net: &mut Network) -> Result<SolveResult> {
    let state = SolverState::zero(problem.n, problem.d);
    run_from(config, problem, net, state)
}

pub fn run_from(
    config: &DripalmConfig,
    problem: &ProblemInstance,
    net: &mut Network,
    mut state: SolverState,
) -> Result<SolveResult> {
    config.validate()?;
    if net.n() != problem.n || net.dim() != problem.d {
        return Err(Error::DimensionMismatch {
            expected: problem.n * problem.d,
            got: net.n() * net.dim(),
        });
    }
    let base = net.comm_report();
    let deadline = base.vector_rounds + config.max_total_comm;
    let mut history = Vec::new();
    let mut kkt_history = Vec::new();
    let mut inner_total = 0;
    let mut last_kkt = metrics::evaluate(&state.x, Some(&state.omega), problem, net, Some(&state.zx));
    let status = loop {
        if last_kkt.kkt <= config.kkt_tol && state.k > 0 {
            break SolveStatus::Converged;
        }
        if state.k >= config.max_outer {
            break SolveStatus::MaxOuter;
        }
        if net.comm_report().vector_rounds - base.vector_rounds >= config.max_total_comm {
            break SolveStatus::MaxComm;
        }
        let step = match outer_iteration(&mut state, config, problem, net, Some(deadline)) {
            Ok(s) => s,
            Err(Error::InnerCapExceeded { .. }) => break SolveStatus::InnerCap,
            Err(e) => return Err(e),
        };
        inner_total += step.inner_iters;
        if step.status == InnerStatus::BudgetExhausted {
            last_kkt = metrics::evaluate(&step.x, Some(&state.omega), problem, net, Some(&step.zx));
            kkt_history.push(last_kkt.kkt);
            state.x = step.x;
            state.zx = step.zx;
            break SolveStatus::MaxComm;
        }
        last_kkt = metrics::evaluate(&state.x, Some(&state.omega), problem, net, Some(&state.zx));
        kkt_history.push(last_kkt.kkt);
        history.push(OuterRecord {
            k: state.k,
            sigma: step.sigma,
            tau: step.tau,
            inner_iters: step.inner_iters,
            norm_delta: step.norm_delta,
            norm_p: step.norm_p,
            norm_u: step.norm_u,
            objective: problem.stacked_value(&state.x),
            kkt: last_kkt.kkt,
            vector_rounds: net.comm_report().vector_rounds - base.vector_rounds,
        });
        if state.x.norm_inf() > 1e12 || !last_kkt.kkt.is_finite() {
            break SolveStatus::Diverged;
        }
    };
    if kkt_history.is_empty() {
        kkt_history.push(last_kkt.kkt);
    }
    let end = net.comm_report();
    Ok(SolveResult {
        solver: "dripalm".into(),
        x: state.x,
        omega: Some(state.omega),
        outer_iters: state.k,
        inner_iters: inner_total,
        vector_rounds: end.vector_rounds - base.vector_rounds,
        scalar_rounds: end.scalar_rounds - base.scalar_rounds,
        kkt: last_kkt,
        kkt_history,
        history,
        status,
    })
}
