//! Dense, centralized reference computations used only by tests.
#![allow(dead_code)]

use dripalm_core::netgraph::{build_topology, metropolis_weights};
use dripalm_core::objectives::{ProblemData, ProblemInstance};
use dripalm_core::{MixingMatrix, StackedVector, Topology};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_stacked(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> StackedVector {
    let data = (0..n * d).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect();
    StackedVector::from_vec(n, d, data).unwrap()
}

/// Connected random graph with Metropolis weights.
pub fn random_mixing(seed: u64, n: usize) -> (dripalm_core::Graph, MixingMatrix) {
    let g = build_topology(Topology::ErdosRenyi { p: 0.5 }, n, seed).unwrap();
    let w = metropolis_weights(&g);
    (g, w)
}

pub fn dense_w(w: &MixingMatrix) -> DMatrix<f64> {
    let n = w.n();
    DMatrix::from_fn(n, n, |i, j| w.get(i, j))
}

/// `A ⊗ I_d`.
pub fn kron_identity(a: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    let n = a.nrows();
    DMatrix::from_fn(n * d, n * d, |r, c| if r % d == c % d { a[(r / d, c / d)] } else { 0.0 })
}

/// `(I - W) ⊗ I_d` built entrywise.
pub fn dense_z(w: &MixingMatrix, d: usize) -> DMatrix<f64> {
    let n = w.n();
    let i_minus_w = DMatrix::identity(n, n) - dense_w(w);
    kron_identity(&i_minus_w, d)
}

/// Symmetric square root of `I - W`, lifted by `⊗ I_d`. Eigenvalues at
/// roundoff level belong to the consensus direction and are set to exactly
/// zero; taking their square root would leak a `1e-8` component.
pub fn dense_sqrt_z(w: &MixingMatrix, d: usize) -> DMatrix<f64> {
    let n = w.n();
    let eig = SymmetricEigen::new(DMatrix::identity(n, n) - dense_w(w));
    let roots = eig.eigenvalues.map(|l| if l < 1e-12 { 0.0 } else { l.sqrt() });
    let s = &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose();
    kron_identity(&s, d)
}

pub fn dvec(x: &StackedVector) -> DVector<f64> {
    DVector::from_column_slice(x.as_slice())
}

pub fn stacked(v: &DVector<f64>, n: usize, d: usize) -> StackedVector {
    StackedVector::from_vec(n, d, v.as_slice().to_vec()).unwrap()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1.0)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Central finite-difference gradient.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|j| {
            let orig = xp[j];
            xp[j] = orig + h;
            let up = f(&xp);
            xp[j] = orig - h;
            let down = f(&xp);
            xp[j] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn logreg_data(p: &ProblemInstance) -> (Vec<Vec<f64>>, Vec<f64>) {
    let ProblemData::Logreg { features, labels, .. } = &p.meta.data else {
        panic!("not a logistic instance");
    };
    let mut rows = Vec::new();
    let mut ys = Vec::new();
    for (f, l) in features.iter().zip(labels) {
        for r in 0..f.rows() {
            rows.push(f.row(r).to_vec());
            ys.push(l[r]);
        }
    }
    (rows, ys)
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Centralized objective `Σ_j log(1 + exp(-y_j a_jᵀx)) + (nλ/2)‖x‖²`,
/// written independently of the library oracles.
pub fn logreg_value(p: &ProblemInstance, x: &[f64]) -> f64 {
    let (rows, ys) = logreg_data(p);
    let reg = p.n as f64 * p.meta.lambda;
    let loss: f64 = rows
        .iter()
        .zip(&ys)
        .map(|(a, y)| {
            let m = -y * a.iter().zip(x).map(|(u, v)| u * v).sum::<f64>();
            if m > 0.0 {
                m + (-m).exp().ln_1p()
            } else {
                m.exp().ln_1p()
            }
        })
        .sum();
    loss + 0.5 * reg * x.iter().map(|v| v * v).sum::<f64>()
}

/// Damped Newton on the centralized logistic objective.
pub fn newton_logreg(p: &ProblemInstance) -> Vec<f64> {
    let (rows, ys) = logreg_data(p);
    let d = p.d;
    let reg = p.n as f64 * p.meta.lambda;
    let mut x = DVector::zeros(d);
    for _ in 0..100 {
        let mut g = &x * reg;
        let mut h = DMatrix::identity(d, d) * reg;
        for (a, y) in rows.iter().zip(&ys) {
            let a = DVector::from_column_slice(a);
            let m = y * a.dot(&x);
            let s = sigmoid(-m);
            g -= &a * (y * s);
            h += (&a * a.transpose()) * (s * (1.0 - s));
        }
        if g.norm() < 1e-13 {
            break;
        }
        let step = h.cholesky().expect("positive definite").solve(&g);
        let f0 = logreg_value(p, x.as_slice());
        let mut t = 1.0;
        loop {
            let cand = &x - &step * t;
            if logreg_value(p, cand.as_slice()) <= f0 - 0.25 * t * g.dot(&step) || t < 1e-10 {
                x = cand;
                break;
            }
            t *= 0.5;
        }
    }
    x.as_slice().to_vec()
}

fn lasso_data(p: &ProblemInstance) -> (DMatrix<f64>, DVector<f64>) {
    let ProblemData::Lasso { a, b, .. } = &p.meta.data else {
        panic!("not a LASSO instance");
    };
    let m: usize = a.iter().map(|m| m.rows()).sum();
    let mut big = DMatrix::zeros(m, p.d);
    let mut rhs = DVector::zeros(m);
    let mut r0 = 0;
    for (ai, bi) in a.iter().zip(b) {
        for r in 0..ai.rows() {
            for c in 0..p.d {
                big[(r0 + r, c)] = ai.get(r, c);
            }
            rhs[r0 + r] = bi[r];
        }
        r0 += ai.rows();
    }
    (big, rhs)
}

/// `½‖Ax - b‖² + λ‖x‖₁` on the stacked data.
pub fn lasso_value(p: &ProblemInstance, x: &[f64]) -> f64 {
    let (a, b) = lasso_data(p);
    let r = &a * DVector::from_column_slice(x) - b;
    0.5 * r.norm_squared() + p.meta.lambda * x.iter().map(|v| v.abs()).sum::<f64>()
}

/// Cyclic coordinate descent on the centralized LASSO.
pub fn cd_lasso(p: &ProblemInstance) -> Vec<f64> {
    let (a, b) = lasso_data(p);
    let lam = p.meta.lambda;
    let d = p.d;
    let col_sq: Vec<f64> = (0..d).map(|j| a.column(j).norm_squared()).collect();
    let mut x = DVector::<f64>::zeros(d);
    let mut r = b.clone();
    for _ in 0..100_000 {
        let mut biggest = 0.0f64;
        for j in 0..d {
            let aj = a.column(j);
            let rho = aj.dot(&r) + col_sq[j] * x[j];
            let new = rho.signum() * (rho.abs() - lam).max(0.0) / col_sq[j];
            let step = new - x[j];
            if step != 0.0 {
                r -= aj * step;
                x[j] = new;
            }
            biggest = biggest.max(step.abs());
        }
        if biggest < 1e-15 {
            break;
        }
    }
    x.as_slice().to_vec()
}

/// Prox-gradient residual of the centralized LASSO with unit step.
pub fn lasso_residual(p: &ProblemInstance, x: &[f64]) -> f64 {
    let (a, b) = lasso_data(p);
    let xv = DVector::from_column_slice(x);
    let g = a.transpose() * (&a * &xv - b);
    let lam = p.meta.lambda;
    (0..p.d)
        .map(|j| {
            let v = x[j] - g[j];
            let prox = v.signum() * (v.abs() - lam).max(0.0);
            (x[j] - prox).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}
