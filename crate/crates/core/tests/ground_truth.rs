mod common;

use common::*;
use dripalm_core::baselines::{ideal_run, nids_run, pg_extra_run, BaselineConfig, IdealConfig};
use dripalm_core::dripalm::{run, DripalmConfig};
use dripalm_core::metrics::{kkt_lasso, theorem1_diagnostics};
use dripalm_core::objectives::{gen_lasso, gen_logreg, quadratic_local, LassoParams, LogregParams};
use dripalm_core::{Network, ProblemInstance, SolveResult, StackedVector, Topology};

fn logreg20() -> ProblemInstance {
    gen_logreg(LogregParams { n: 6, d: 20, m_total: 60, lambda: 1e-2, noise: 0.1 }, 21).unwrap()
}

fn lasso20() -> ProblemInstance {
    gen_lasso(LassoParams { n: 6, d: 20, m_total: 30, lambda_c: 0.1, ..LassoParams::default() }, 22).unwrap()
}

fn network(p: &ProblemInstance, seed: u64) -> Network {
    let g = dripalm_core::netgraph::build_topology(Topology::ErdosRenyi { p: 0.5 }, p.n, seed).unwrap();
    Network::metropolis(g, p.d).unwrap()
}

fn average(x: &StackedVector) -> Vec<f64> {
    let (n, d) = (x.blocks(), x.dim());
    (0..d).map(|j| (0..n).map(|i| x.block(i)[j]).sum::<f64>() / n as f64).collect()
}

fn check_diagnostics(r: &SolveResult) {
    let diag = theorem1_diagnostics(&r.history).unwrap();
    println!("diagnostics first {:?} last {:?}", diag.first, diag.last);
    assert!(diag.decayed_below(1e-4), "{diag:?}");
}

#[test]
fn logistic_matches_newton() {
    let p = logreg20();
    let xs = newton_logreg(&p);
    let mut net = network(&p, 1);
    let r = run(&DripalmConfig::default(), &p, &mut net).unwrap();
    assert!(r.converged(), "{}", r.status);
    let xbar = average(&r.x);
    let err = max_abs_diff(&xbar, &xs);
    let fstar = logreg_value(&p, &xs);
    let gap = (logreg_value(&p, &xbar) - fstar).abs();
    println!("logistic: outer {} rounds {} err {err:e} gap {gap:e}", r.outer_iters, r.vector_rounds);
    assert!(err <= 1e-5, "‖x̄ - x*‖∞ = {err}");
    assert!(gap <= 1e-4 * (1.0 + fstar.abs()));
    check_diagnostics(&r);
}

#[test]
fn lasso_matches_coordinate_descent() {
    let p = lasso20();
    let xs = cd_lasso(&p);
    assert!(lasso_residual(&p, &xs) <= 1e-12);
    let mut net = network(&p, 2);
    let r = run(&DripalmConfig::default(), &p, &mut net).unwrap();
    assert!(r.converged(), "{}", r.status);
    let xbar = average(&r.x);
    let err = max_abs_diff(&xbar, &xs);
    let fstar = lasso_value(&p, &xs);
    let gap = (lasso_value(&p, &xbar) - fstar).abs();
    println!("lasso: outer {} rounds {} err {err:e} gap {gap:e}", r.outer_iters, r.vector_rounds);
    assert!(err <= 1e-5, "‖x̄ - x*‖∞ = {err}");
    assert!(gap <= 1e-4 * (1.0 + fstar.abs()));
    check_diagnostics(&r);
}

#[test]
fn lasso_residual_vanishes_at_the_centralized_optimum() {
    let p = lasso20();
    let xs = cd_lasso(&p);
    let mut net = network(&p, 3);
    let x = StackedVector::replicate(p.n, &xs);
    let rep = kkt_lasso(&x, &p, &mut net, None);
    assert!(rep.consensus_res <= 1e-12);
    assert!(rep.kkt <= 1e-8, "{rep:?}");
}

#[test]
fn single_loop_baselines_match_coordinate_descent() {
    let p = lasso20();
    let xs = cd_lasso(&p);
    let cfg = BaselineConfig { kkt_tol: 1e-8, max_comm: 200_000, ..BaselineConfig::default() };
    type Runner = fn(&ProblemInstance, &mut Network, &BaselineConfig) -> dripalm_core::Result<SolveResult>;
    let runners: [(&str, Runner); 2] = [("pg_extra", pg_extra_run), ("nids", nids_run)];
    for (name, run) in runners {
        let mut net = network(&p, 4);
        let r = run(&p, &mut net, &cfg).unwrap();
        assert!(r.converged(), "{name}: {}", r.status);
        let err = max_abs_diff(&average(&r.x), &xs);
        println!("{name}: rounds {} err {err:e}", r.vector_rounds);
        assert!(err <= 1e-5, "{name}: {err}");
    }
}

#[test]
fn ideal_matches_newton() {
    let p = logreg20();
    let xs = newton_logreg(&p);
    let mut net = network(&p, 5);
    let r = ideal_run(&p, &mut net, &IdealConfig::default()).unwrap();
    assert!(r.converged(), "{}", r.status);
    let err = max_abs_diff(&average(&r.x), &xs);
    println!("ideal: outer {} rounds {} err {err:e}", r.outer_iters, r.vector_rounds);
    assert!(err <= 1e-5);
}

#[test]
fn every_solver_finds_the_mean_of_quadratics() {
    let (n, d) = (5, 3);
    let centers: Vec<Vec<f64>> = (0..n).map(|i| (0..d).map(|j| (i * d + j) as f64 - 4.0).collect()).collect();
    let mean: Vec<f64> = (0..d).map(|j| centers.iter().map(|c| c[j]).sum::<f64>() / n as f64).collect();
    let p = ProblemInstance::from_locals(centers.into_iter().map(|c| quadratic_local(c, 1.0)).collect()).unwrap();
    let results = [
        run(&DripalmConfig::default(), &p, &mut network(&p, 6)).unwrap(),
        pg_extra_run(&p, &mut network(&p, 6), &BaselineConfig::default()).unwrap(),
        nids_run(&p, &mut network(&p, 6), &BaselineConfig::default()).unwrap(),
        ideal_run(&p, &mut network(&p, 6), &IdealConfig { strong_convexity: Some(1.0), ..IdealConfig::default() }).unwrap(),
    ];
    for r in results {
        assert!(r.converged(), "{}: {}", r.solver, r.status);
        for i in 0..n {
            assert!(max_abs_diff(r.x.block(i), &mean) <= 1e-6, "{}", r.solver);
        }
    }
}

#[test]
fn runs_are_deterministic() {
    let p = lasso20();
    let once = || {
        let mut net = network(&p, 7);
        let r = run(&DripalmConfig::default(), &p, &mut net).unwrap();
        (r.x.into_vec(), r.kkt_history, r.vector_rounds, r.scalar_rounds)
    };
    assert_eq!(once(), once());
}

#[test]
fn ideal_rejects_nonsmooth_problems() {
    let p = lasso20();
    assert!(ideal_run(&p, &mut network(&p, 8), &IdealConfig::default()).is_err());
}

#[test]
fn slower_tolerance_decay_costs_more_rounds() {
    let p = logreg20();
    let rounds = |alpha_tol| {
        // At α = 0.8 the tolerance needs about 80 outer steps to reach the
        // KKT target, so the default budget is too small to see convergence.
        let cfg = IdealConfig { eps0: 1.0, alpha_tol, max_comm: 500_000, ..IdealConfig::default() };
        let r = ideal_run(&p, &mut network(&p, 9), &cfg).unwrap();
        assert!(r.converged(), "alpha {alpha_tol}: {}", r.status);
        r.vector_rounds
    };
    let (slow, fast) = (rounds(0.8), rounds(0.2));
    println!("ideal (1, 0.8): {slow}, (1, 0.2): {fast}");
    assert!(slow > fast);
}
