//! Inner solvers for composite subproblems `s(x) + h(x)` whose smooth part
//! couples agents only through `Zx`.
//!
//! Each iteration spends exactly one neighbour exchange (with a fixed step):
//! the candidate `x⁺` is exchanged to form `Zx⁺`, which serves the error term
//! at `x⁺` and, by linearity, the product at the next extrapolated point.

use crate::dripalm::compute_delta;
use crate::linalg::{axpy, dist_sq, dot, StackedVector};
use crate::netgraph::SpectralReport;
use crate::objectives::ProblemInstance;
use crate::simnet::Network;

/// A block-separable composite objective. The smooth part of agent `i` may
/// depend on its own block and on `[Zx]_i`.
pub trait CompositeSubproblem {
    fn blocks(&self) -> usize;

    fn dim(&self) -> usize;

    /// Value of agent `i`'s smooth share at `x_i`; overwrites `grad` with its
    /// gradient.
    fn smooth_local(&self, i: usize, x_i: &[f64], zx_i: &[f64], grad: &mut [f64]) -> f64;

    fn nonsmooth_local(&self, i: usize, x_i: &[f64]) -> f64;

    fn prox_local(&self, i: usize, v: &[f64], step: f64, out: &mut [f64]);

    /// Global Lipschitz constant of the smooth gradient, if known.
    fn lipschitz(&self) -> Option<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsolverKind {
    Fista,
    ProxGrad,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// `1/L` from [`CompositeSubproblem::lipschitz`]; falls back to
    /// backtracking from `L = 1` when no bound is available.
    Fixed,
    /// Start at `l0`, divide `L` by `beta` on each failed decrease test.
    Backtracking { beta: f64, l0: f64 },
}

/// Momentum reset test for FISTA.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Restart {
    Off,
    /// Reset when the composite objective increases beyond rounding noise.
    FunctionValue,
    /// Reset when the prox-gradient step points against the momentum
    /// direction, `⟨y - x⁺, x⁺ - x_prev⟩ > 0`. Insensitive to the objective's
    /// magnitude, so it keeps working once decreases fall below rounding.
    GradientMapping,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsolverConfig {
    pub kind: SubsolverKind,
    pub step_rule: StepRule,
    pub max_inner: usize,
    pub restart: Restart,
}

impl Default for SubsolverConfig {
    fn default() -> Self {
        Self {
            kind: SubsolverKind::Fista,
            step_rule: StepRule::Fixed,
            max_inner: 5000,
            restart: Restart::GradientMapping,
        }
    }
}

/// `L_k = max_i L_i + σ_k λ_max(Z) + τ_k/σ_k`.
pub fn lipschitz_bound(
    problem: &ProblemInstance,
    sigma: f64,
    tau: f64,
    spectral: &SpectralReport,
) -> Option<f64> {
    problem
        .max_lipschitz()
        .map(|l| l + sigma * spectral.lambda_max_z + tau / sigma)
}

/// Nesterov momentum sequence `t_{j+1} = (1 + √(1 + 4t_j²))/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FistaMomentum {
    pub t: f64,
}

impl Default for FistaMomentum {
    fn default() -> Self {
        Self { t: 1.0 }
    }
}

impl FistaMomentum {
    /// Advance and return the extrapolation weight `(t_j - 1)/t_{j+1}`.
    pub fn advance(&mut self) -> f64 {
        let next = 0.5 * (1.0 + (1.0 + 4.0 * self.t * self.t).sqrt());
        let beta = (self.t - 1.0) / next;
        self.t = next;
        beta
    }

    pub fn reset(&mut self) {
        self.t = 1.0;
    }
}

/// Relative size of an objective increase below which it is treated as
/// rounding noise rather than a genuine ascent.
pub const RESTART_NOISE: f64 = 1e-12;

/// Function-value restart test. Increases within [`RESTART_NOISE`] of the
/// objective's magnitude do not trigger a reset.
pub fn momentum_reset_policy(previous: f64, current: f64) -> bool {
    current - previous > RESTART_NOISE * previous.abs().max(1.0)
}

/// Gradient-mapping restart test on the aggregated probe
/// `Σ_i ⟨y_i - x⁺_i, x⁺_i - x_prev_i⟩`.
pub fn gradient_restart(probe: f64) -> bool {
    probe > 0.0
}

/// A candidate produced by one inner iteration, handed to the acceptance
/// test.
pub struct Candidate<'a> {
    pub inner: usize,
    pub x: &'a StackedVector,
    pub zx: &'a StackedVector,
    /// `∇s(x⁺)`
    pub grad: &'a StackedVector,
    /// `∇s(x⁺) + (v - x⁺)/η`, an element of `∂(s + h)(x⁺)`.
    pub delta: &'a StackedVector,
    /// Per-agent composite values `s_i(x⁺) + h_i(x⁺)`.
    pub local_values: &'a [f64],
    /// Per-agent restart probes `⟨y_i - x⁺_i, x⁺_i - x_prev_i⟩`.
    pub probes: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub accept: bool,
    /// Network-wide composite objective at the candidate.
    pub objective: f64,
    /// Network-wide sum of [`Candidate::probes`].
    pub probe: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerStatus {
    Accepted,
    IterationCap,
    BudgetExhausted,
}

#[derive(Debug, Clone)]
pub struct InnerOutcome {
    pub x: StackedVector,
    pub zx: StackedVector,
    pub delta: StackedVector,
    pub grad: StackedVector,
    pub iterations: usize,
    pub restarts: usize,
    pub status: InnerStatus,
    /// Composite objective after each iteration.
    pub objectives: Vec<f64>,
}

fn smooth_eval<P: CompositeSubproblem + ?Sized>(
    p: &P,
    x: &StackedVector,
    zx: &StackedVector,
    grad: &mut StackedVector,
    values: &mut [f64],
) {
    for i in 0..p.blocks() {
        values[i] = p.smooth_local(i, x.block(i), zx.block(i), grad.block_mut(i));
    }
}

/// Run FISTA or proximal gradient from `x0` (with `zx0 = Z x0` already known)
/// until `check` accepts a candidate, the iteration cap is hit, or the
/// network's vector-round count reaches `budget`.
pub fn solve<P, C>(
    problem: &P,
    net: &mut Network,
    x0: &StackedVector,
    zx0: &StackedVector,
    cfg: &SubsolverConfig,
    budget: Option<u64>,
    mut check: C,
) -> InnerOutcome
where
    P: CompositeSubproblem + ?Sized,
    C: FnMut(&Candidate<'_>, &mut Network) -> Verdict,
{
    let (n, d) = (problem.blocks(), problem.dim());
    let (mut lip, backtrack) = match (cfg.step_rule, problem.lipschitz()) {
        (StepRule::Fixed, Some(l)) => (l, None),
        (StepRule::Fixed, None) => (1.0, Some(0.5)),
        (StepRule::Backtracking { beta, l0 }, _) => (l0, Some(beta)),
    };

    let mut x_prev = x0.clone();
    let mut zx_prev = zx0.clone();
    let mut y = x0.clone();
    let mut zy = zx0.clone();
    let mut momentum = FistaMomentum::default();
    let mut prev_obj = f64::INFINITY;
    let mut restarts = 0;
    let mut objectives = Vec::new();

    let mut grad_y = StackedVector::zeros(n, d);
    let mut vals_y = vec![0.0; n];
    let mut v = StackedVector::zeros(n, d);
    let mut x_new = StackedVector::zeros(n, d);
    let mut grad_x = StackedVector::zeros(n, d);
    let mut vals_x = vec![0.0; n];

    let exhausted = |net: &Network| budget.is_some_and(|b| net.comm_report().vector_rounds >= b);

    for j in 1..=cfg.max_inner {
        if exhausted(net) {
            return InnerOutcome {
                x: x_prev,
                zx: zx_prev,
                delta: StackedVector::zeros(n, d),
                grad: grad_x,
                iterations: j - 1,
                restarts,
                status: InnerStatus::BudgetExhausted,
                objectives,
            };
        }
        smooth_eval(problem, &y, &zy, &mut grad_y, &mut vals_y);
        let step;
        let zx_new;
        loop {
            let eta = 1.0 / lip;
            for i in 0..n {
                let vi = v.block_mut(i);
                vi.copy_from_slice(y.block(i));
                axpy(-eta, grad_y.block(i), vi);
                problem.prox_local(i, v.block(i), eta, x_new.block_mut(i));
            }
            let zx_try = net.apply_z(&x_new);
            smooth_eval(problem, &x_new, &zx_try, &mut grad_x, &mut vals_x);
            if let Some(beta) = backtrack {
                // s(x⁺) ≤ s(y) + ⟨∇s(y), x⁺ - y⟩ + (L/2)‖x⁺ - y‖²
                let parts: Vec<[f64; 1]> = (0..n)
                    .map(|i| {
                        let diff: Vec<f64> = x_new
                            .block(i)
                            .iter()
                            .zip(y.block(i))
                            .map(|(a, b)| a - b)
                            .collect();
                        [vals_x[i]
                            - vals_y[i]
                            - dot(grad_y.block(i), &diff)
                            - 0.5 * lip * dist_sq(x_new.block(i), y.block(i))]
                    })
                    .collect();
                let [excess] = net.scalar_allreduce(&parts);
                let scale: f64 = vals_y.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
                if excess > 1e-12 * scale && !exhausted(net) {
                    lip /= beta;
                    continue;
                }
            }
            step = eta;
            zx_new = zx_try;
            break;
        }
        let delta = compute_delta(&grad_x, &x_new, Some((&v, step)));
        let local_values: Vec<f64> = (0..n)
            .map(|i| vals_x[i] + problem.nonsmooth_local(i, x_new.block(i)))
            .collect();
        let probes: Vec<f64> = (0..n)
            .map(|i| {
                let (yi, xn, xp) = (y.block(i), x_new.block(i), x_prev.block(i));
                (0..d).map(|j| (yi[j] - xn[j]) * (xn[j] - xp[j])).sum()
            })
            .collect();
        let verdict = check(
            &Candidate {
                inner: j,
                x: &x_new,
                zx: &zx_new,
                grad: &grad_x,
                delta: &delta,
                local_values: &local_values,
                probes: &probes,
            },
            net,
        );
        objectives.push(verdict.objective);
        if verdict.accept {
            return InnerOutcome {
                x: x_new,
                zx: zx_new,
                delta,
                grad: grad_x,
                iterations: j,
                restarts,
                status: InnerStatus::Accepted,
                objectives,
            };
        }

        let beta = match cfg.kind {
            SubsolverKind::ProxGrad => 0.0,
            SubsolverKind::Fista => {
                let reset = match cfg.restart {
                    Restart::Off => false,
                    Restart::FunctionValue => momentum_reset_policy(prev_obj, verdict.objective),
                    Restart::GradientMapping => gradient_restart(verdict.probe),
                };
                if reset {
                    momentum.reset();
                    restarts += 1;
                    0.0
                } else {
                    momentum.advance()
                }
            }
        };
        prev_obj = verdict.objective;
        // y = x⁺ + β(x⁺ - x_prev), and the same combination for Zy
        for (((yv, zyv), (xn, xp)), (zn, zp)) in y
            .as_mut_slice()
            .iter_mut()
            .zip(zy.as_mut_slice().iter_mut())
            .zip(x_new.as_slice().iter().zip(x_prev.as_slice()))
            .zip(zx_new.as_slice().iter().zip(zx_prev.as_slice()))
        {
            *yv = xn + beta * (xn - xp);
            *zyv = zn + beta * (zn - zp);
        }
        x_prev.as_mut_slice().copy_from_slice(x_new.as_slice());
        zx_prev = zx_new;
    }
    let delta = StackedVector::zeros(n, d);
    InnerOutcome {
        x: x_prev,
        zx: zx_prev,
        delta,
        grad: grad_x,
        iterations: cfg.max_inner,
        restarts,
        status: InnerStatus::IterationCap,
        objectives,
    }
}
