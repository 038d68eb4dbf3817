//! Per-agent objective oracles and the two synthetic experiment families.

use std::fmt::Debug;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dist_sq, dot, norm_sq, DenseMatrix, StackedVector};

/// Convex differentiable part of a local objective.
pub trait SmoothOracle: Debug + Send + Sync {
    fn dim(&self) -> usize;

    /// Returns `f(x)` and overwrites `grad` with `∇f(x)`.
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;

    fn value(&self, x: &[f64]) -> f64 {
        let mut g = vec![0.0; x.len()];
        self.value_grad(x, &mut g)
    }
}

/// Proper closed convex part with an exact proximal map.
pub trait ProxOracle: Debug + Send + Sync {
    fn value(&self, x: &[f64]) -> f64;

    /// `out = argmin_u h(u) + ‖u - v‖² / (2 step)`
    fn prox(&self, v: &[f64], step: f64, out: &mut [f64]);

    /// Weight of an ℓ₁ term, when the function is one.
    fn l1_weight(&self) -> Option<f64> {
        None
    }
}

/// `Σ_j log(1 + exp(-y_j a_jᵀx)) + (λ/2)‖x‖²`
#[derive(Debug, Clone)]
pub struct LogisticLoss {
    features: DenseMatrix,
    labels: Vec<f64>,
    reg: f64,
}

#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl SmoothOracle for LogisticLoss {
    fn dim(&self) -> usize {
        self.features.cols()
    }

    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let mut margins = vec![0.0; self.features.rows()];
        self.features.matvec(x, &mut margins);
        let mut value = 0.0;
        for (m, &y) in margins.iter_mut().zip(&self.labels) {
            let z = -y * *m;
            value += softplus(z);
            // d/dm log(1+exp(-y m)) = -y σ(-y m)
            *m = -y * sigmoid(z);
        }
        for (g, xi) in grad.iter_mut().zip(x) {
            *g = self.reg * xi;
        }
        self.features.matvec_t_acc(1.0, &margins, grad);
        value + 0.5 * self.reg * norm_sq(x)
    }
}

/// `½‖Ax - b‖²`
#[derive(Debug, Clone)]
pub struct LeastSquares {
    a: DenseMatrix,
    b: Vec<f64>,
}

impl SmoothOracle for LeastSquares {
    fn dim(&self) -> usize {
        self.a.cols()
    }

    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let mut r = vec![0.0; self.a.rows()];
        self.a.matvec(x, &mut r);
        for (ri, bi) in r.iter_mut().zip(&self.b) {
            *ri -= bi;
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        self.a.matvec_t_acc(1.0, &r, grad);
        0.5 * norm_sq(&r)
    }
}

/// `(weight/2)‖x - center‖²`
#[derive(Debug, Clone)]
pub struct ShiftedQuadratic {
    pub center: Vec<f64>,
    pub weight: f64,
}

impl SmoothOracle for ShiftedQuadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        for ((g, xi), c) in grad.iter_mut().zip(x).zip(&self.center) {
            *g = self.weight * (xi - c);
        }
        0.5 * self.weight * dist_sq(x, &self.center)
    }
}

/// The zero function on `R^d`.
#[derive(Debug, Clone)]
pub struct ZeroSmooth(pub usize);

impl SmoothOracle for ZeroSmooth {
    fn dim(&self) -> usize {
        self.0
    }

    fn value_grad(&self, _x: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        0.0
    }
}

/// `weight · ‖x‖₁`
#[derive(Debug, Clone, Copy)]
pub struct L1Norm {
    pub weight: f64,
}

/// Soft threshold `sign(v) max(|v| - t, 0)`.
#[inline]
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

impl ProxOracle for L1Norm {
    fn value(&self, x: &[f64]) -> f64 {
        self.weight * x.iter().map(|v| v.abs()).sum::<f64>()
    }

    fn prox(&self, v: &[f64], step: f64, out: &mut [f64]) {
        let t = step * self.weight;
        for (o, vi) in out.iter_mut().zip(v) {
            *o = soft_threshold(*vi, t);
        }
    }

    fn l1_weight(&self) -> Option<f64> {
        Some(self.weight)
    }
}

/// Oracle bundle held by one agent.
#[derive(Debug, Clone)]
pub struct LocalObjective {
    pub smooth: Arc<dyn SmoothOracle>,
    pub nonsmooth: Option<Arc<dyn ProxOracle>>,
    /// Lipschitz constant of `∇smooth`, when known.
    pub lipschitz_hint: Option<f64>,
}

impl LocalObjective {
    pub fn new(
        smooth: Arc<dyn SmoothOracle>,
        nonsmooth: Option<Arc<dyn ProxOracle>>,
        lipschitz_hint: Option<f64>,
    ) -> Self {
        Self {
            smooth,
            nonsmooth,
            lipschitz_hint,
        }
    }

    pub fn dim(&self) -> usize {
        self.smooth.dim()
    }

    /// `f_i(x) = s_i(x) + h_i(x)`
    pub fn value(&self, x: &[f64]) -> f64 {
        self.smooth.value(x) + self.nonsmooth_value(x)
    }

    pub fn nonsmooth_value(&self, x: &[f64]) -> f64 {
        self.nonsmooth.as_ref().map_or(0.0, |h| h.value(x))
    }

    /// Prox of the nonsmooth part; the identity when there is none.
    pub fn prox(&self, v: &[f64], step: f64, out: &mut [f64]) {
        match &self.nonsmooth {
            Some(h) => h.prox(v, step, out),
            None => out.copy_from_slice(v),
        }
    }
}

/// Logistic loss with ridge term for one agent's samples.
pub fn logreg_local(features: DenseMatrix, labels: Vec<f64>, lambda: f64) -> Result<LocalObjective> {
    if labels.len() != features.rows() {
        return Err(Error::DimensionMismatch {
            expected: features.rows(),
            got: labels.len(),
        });
    }
    if let Some((index, &value)) = labels
        .iter()
        .enumerate()
        .find(|(_, &y)| y != 1.0 && y != -1.0)
    {
        return Err(Error::InvalidLabel { index, value });
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    let lipschitz = 0.25 * features.gram_spectral_norm() + lambda;
    Ok(LocalObjective::new(
        Arc::new(LogisticLoss {
            features,
            labels,
            reg: lambda,
        }),
        None,
        Some(lipschitz),
    ))
}

/// Least squares plus the agent's share `(λ/n)‖x‖₁` of the ℓ₁ penalty.
pub fn lasso_local(a: DenseMatrix, b: Vec<f64>, lambda: f64, n: usize) -> Result<LocalObjective> {
    if b.len() != a.rows() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            got: b.len(),
        });
    }
    if !(lambda > 0.0) || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "need lambda > 0 and n >= 1, got lambda={lambda}, n={n}"
        )));
    }
    let lipschitz = a.gram_spectral_norm();
    Ok(LocalObjective::new(
        Arc::new(LeastSquares { a, b }),
        Some(Arc::new(L1Norm {
            weight: lambda / n as f64,
        })),
        Some(lipschitz),
    ))
}

/// `(weight/2)‖x - center‖²`, smooth only.
pub fn quadratic_local(center: Vec<f64>, weight: f64) -> LocalObjective {
    LocalObjective::new(Arc::new(ShiftedQuadratic { center, weight }), None, Some(weight))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Logreg,
    Lasso,
    Custom,
}

/// Raw data behind a generated instance, kept for centralized oracles and
/// for serialization.
#[derive(Debug, Clone)]
pub enum ProblemData {
    Logreg {
        features: Vec<DenseMatrix>,
        labels: Vec<Vec<f64>>,
        x_true: Vec<f64>,
    },
    Lasso {
        a: Vec<DenseMatrix>,
        b: Vec<Vec<f64>>,
        x_true: Vec<f64>,
    },
    None,
}

#[derive(Debug, Clone)]
pub struct ProblemMeta {
    pub family: Family,
    /// Ridge weight (logreg) or total ℓ₁ weight (LASSO).
    pub lambda: f64,
    pub lambda_c: Option<f64>,
    pub seed: u64,
    pub data: ProblemData,
}

/// `min Σ_i f_i(x)` split over `n` agents.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub n: usize,
    pub d: usize,
    pub locals: Vec<LocalObjective>,
    pub meta: ProblemMeta,
}

impl ProblemInstance {
    pub fn from_locals(locals: Vec<LocalObjective>) -> Result<Self> {
        let d = locals
            .first()
            .map(LocalObjective::dim)
            .ok_or_else(|| Error::InvalidArgument("no agents".into()))?;
        if let Some(bad) = locals.iter().find(|l| l.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bad.dim(),
            });
        }
        Ok(Self {
            n: locals.len(),
            d,
            locals,
            meta: ProblemMeta {
                family: Family::Custom,
                lambda: 0.0,
                lambda_c: None,
                seed: 0,
                data: ProblemData::None,
            },
        })
    }

    pub fn is_smooth(&self) -> bool {
        self.locals.iter().all(|l| l.nonsmooth.is_none())
    }

    /// `max_i L_i`, or `None` if any agent lacks a hint.
    pub fn max_lipschitz(&self) -> Option<f64> {
        self.locals
            .iter()
            .map(|l| l.lipschitz_hint)
            .try_fold(0.0_f64, |m, l| l.map(|l| m.max(l)))
    }

    /// `F(x) = Σ_i f_i(x_i)` on a stacked iterate.
    pub fn stacked_value(&self, x: &StackedVector) -> f64 {
        self.locals
            .iter()
            .zip(x.iter_blocks())
            .map(|(l, xi)| l.value(xi))
            .sum()
    }

    /// `f(v) = Σ_i f_i(v)` at a common point.
    pub fn value_at(&self, v: &[f64]) -> f64 {
        self.locals.iter().map(|l| l.value(v)).sum()
    }

    /// `Σ_i ∇s_i(v)` at a common point.
    pub fn smooth_grad_at(&self, v: &[f64]) -> Vec<f64> {
        let mut total = vec![0.0; self.d];
        let mut g = vec![0.0; self.d];
        for l in &self.locals {
            l.smooth.value_grad(v, &mut g);
            axpy(1.0, &g, &mut total);
        }
        total
    }

    /// Total ℓ₁ weight when every nonsmooth part is an ℓ₁ term.
    pub fn total_l1_weight(&self) -> Option<f64> {
        self.locals
            .iter()
            .map(|l| l.nonsmooth.as_ref().and_then(|h| h.l1_weight()))
            .sum()
    }
}

/// Sample counts per agent: even split, remainder handed out round-robin.
pub fn split_samples(m_total: usize, n: usize) -> Vec<usize> {
    (0..n)
        .map(|i| m_total / n + usize::from(i < m_total % n))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogregParams {
    pub n: usize,
    pub d: usize,
    pub m_total: usize,
    pub lambda: f64,
    pub noise: f64,
}

impl Default for LogregParams {
    fn default() -> Self {
        Self {
            n: 10,
            d: 1000,
            m_total: 400,
            lambda: 1e-2,
            noise: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoParams {
    pub n: usize,
    pub d: usize,
    pub m_total: usize,
    pub lambda_c: f64,
    pub density: f64,
    pub noise: f64,
    /// Standard deviation of the sensing-matrix entries.
    pub feature_scale: f64,
}

impl Default for LassoParams {
    fn default() -> Self {
        Self {
            n: 20,
            d: 1000,
            m_total: 200,
            lambda_c: 1e-1,
            density: 0.1,
            noise: 0.1,
            feature_scale: 1.0,
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| normal(rng)).collect();
    DenseMatrix::from_row_major(rows, cols, data).expect("shape")
}

/// Synthetic ℓ₂-regularized logistic regression with labels
/// `sign(aᵀx_true + ε)`, `sign(0) = +1`.
pub fn gen_logreg(params: LogregParams, seed: u64) -> Result<ProblemInstance> {
    let LogregParams {
        n,
        d,
        m_total,
        lambda,
        noise,
    } = params;
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument("n and d must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x_true: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for m in split_samples(m_total, n) {
        let a = gaussian_matrix(&mut rng, m, d);
        let y = (0..m)
            .map(|r| {
                let s = dot(a.row(r), &x_true) + noise * normal(&mut rng);
                if s >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect::<Vec<_>>();
        features.push(a);
        labels.push(y);
    }
    let locals = features
        .iter()
        .zip(&labels)
        .map(|(a, y)| logreg_local(a.clone(), y.clone(), lambda))
        .collect::<Result<Vec<_>>>()?;
    Ok(ProblemInstance {
        n,
        d,
        locals,
        meta: ProblemMeta {
            family: Family::Logreg,
            lambda,
            lambda_c: None,
            seed,
            data: ProblemData::Logreg {
                features,
                labels,
                x_true,
            },
        },
    })
}

/// `λ_c ‖Aᵀb‖_∞` over the stacked data.
pub fn lasso_regularization(a: &[DenseMatrix], b: &[Vec<f64>], lambda_c: f64) -> Result<f64> {
    let d = a.first().map_or(0, DenseMatrix::cols);
    let mut atb = vec![0.0; d];
    for (ai, bi) in a.iter().zip(b) {
        ai.matvec_t_acc(1.0, bi, &mut atb);
    }
    let inf = atb.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if inf == 0.0 {
        return Err(Error::DegenerateRegularization);
    }
    Ok(lambda_c * inf)
}

/// Sparse ground truth: each coordinate nonzero with probability `density`,
/// values standard normal, at least one nonzero.
fn sparse_normal(rng: &mut ChaCha8Rng, d: usize, density: f64) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..d)
            .map(|_| {
                if rng.random::<f64>() < density {
                    normal(rng)
                } else {
                    0.0
                }
            })
            .collect();
        if x.iter().any(|v| *v != 0.0) {
            return x;
        }
    }
}

/// Synthetic distributed LASSO with `λ = λ_c ‖Aᵀb‖_∞`.
pub fn gen_lasso(params: LassoParams, seed: u64) -> Result<ProblemInstance> {
    let LassoParams {
        n,
        d,
        m_total,
        lambda_c,
        density,
        noise,
        feature_scale,
    } = params;
    if !(lambda_c > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda_c must be positive, got {lambda_c}")));
    }
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument("n and d must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x_true = sparse_normal(&mut rng, d, density);
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for m in split_samples(m_total, n) {
        let mut ai = gaussian_matrix(&mut rng, m, d);
        if feature_scale != 1.0 {
            ai = DenseMatrix::from_row_major(
                m,
                d,
                ai.as_slice().iter().map(|v| v * feature_scale).collect(),
            )?;
        }
        let mut bi = vec![0.0; m];
        ai.matvec(&x_true, &mut bi);
        bi.iter_mut().for_each(|v| *v += noise * normal(&mut rng));
        a.push(ai);
        b.push(bi);
    }
    let lambda = lasso_regularization(&a, &b, lambda_c)?;
    build_lasso(a, b, x_true, lambda, Some(lambda_c), seed)
}

fn build_lasso(
    a: Vec<DenseMatrix>,
    b: Vec<Vec<f64>>,
    x_true: Vec<f64>,
    lambda: f64,
    lambda_c: Option<f64>,
    seed: u64,
) -> Result<ProblemInstance> {
    let n = a.len();
    let locals = a
        .iter()
        .zip(&b)
        .map(|(ai, bi)| lasso_local(ai.clone(), bi.clone(), lambda, n))
        .collect::<Result<Vec<_>>>()?;
    let d = x_true.len();
    Ok(ProblemInstance {
        n,
        d,
        locals,
        meta: ProblemMeta {
            family: Family::Lasso,
            lambda,
            lambda_c,
            seed,
            data: ProblemData::Lasso { a, b, x_true },
        },
    })
}

const MATRIX_MAGIC: &[u8; 8] = b"DMAT\0\0\0\x01";

/// Binary layout: 8-byte magic, rows and cols as little-endian `u64`, then
/// row-major little-endian `f64`.
pub fn write_matrix(path: &Path, m: &DenseMatrix) -> Result<()> {
    let mut buf = Vec::with_capacity(24 + 8 * m.as_slice().len());
    buf.extend_from_slice(MATRIX_MAGIC);
    buf.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    buf.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<DenseMatrix> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    let parse_err = |msg: &str| Error::Parse {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    if buf.len() < 24 || &buf[..8] != MATRIX_MAGIC {
        return Err(parse_err("bad matrix header"));
    }
    let rows = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(buf[16..24].try_into().unwrap()) as usize;
    let body = &buf[24..];
    if body.len() != 8 * rows * cols {
        return Err(parse_err("payload length does not match header"));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DenseMatrix::from_row_major(rows, cols, data)
}

#[derive(Debug, Serialize, Deserialize)]
struct MetaFile {
    family: Family,
    n: usize,
    d: usize,
    lambda: f64,
    lambda_c: Option<f64>,
    seed: u64,
    samples: Vec<usize>,
}

fn column(v: &[f64]) -> DenseMatrix {
    DenseMatrix::from_row_major(v.len(), 1, v.to_vec()).expect("shape")
}

/// Write a generated instance as per-agent binary matrices plus `meta.toml`.
pub fn save_instance(problem: &ProblemInstance, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let (mats, vecs, x_true) = match &problem.meta.data {
        ProblemData::Logreg {
            features,
            labels,
            x_true,
        } => (features, labels, x_true),
        ProblemData::Lasso { a, b, x_true } => (a, b, x_true),
        ProblemData::None => {
            return Err(Error::InvalidArgument(
                "only generated instances can be saved".into(),
            ))
        }
    };
    for (i, (m, v)) in mats.iter().zip(vecs).enumerate() {
        write_matrix(&dir.join(format!("agent_{i:03}_matrix.bin")), m)?;
        write_matrix(&dir.join(format!("agent_{i:03}_vector.bin")), &column(v))?;
    }
    write_matrix(&dir.join("x_true.bin"), &column(x_true))?;
    let meta = MetaFile {
        family: problem.meta.family,
        n: problem.n,
        d: problem.d,
        lambda: problem.meta.lambda,
        lambda_c: problem.meta.lambda_c,
        seed: problem.meta.seed,
        samples: mats.iter().map(DenseMatrix::rows).collect(),
    };
    let text = toml::to_string_pretty(&meta).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(dir.join("meta.toml"), text)?;
    Ok(())
}

pub fn load_instance(dir: &Path) -> Result<ProblemInstance> {
    let meta_path = dir.join("meta.toml");
    let text = fs::read_to_string(&meta_path)?;
    let meta: MetaFile = toml::from_str(&text).map_err(|e| Error::Parse {
        path: meta_path.clone(),
        msg: e.to_string(),
    })?;
    let mut mats = Vec::with_capacity(meta.n);
    let mut vecs = Vec::with_capacity(meta.n);
    for i in 0..meta.n {
        mats.push(read_matrix(&dir.join(format!("agent_{i:03}_matrix.bin")))?);
        vecs.push(
            read_matrix(&dir.join(format!("agent_{i:03}_vector.bin")))?
                .as_slice()
                .to_vec(),
        );
    }
    let x_true = read_matrix(&dir.join("x_true.bin"))?.as_slice().to_vec();
    match meta.family {
        Family::Logreg => {
            let locals = mats
                .iter()
                .zip(&vecs)
                .map(|(a, y)| logreg_local(a.clone(), y.clone(), meta.lambda))
                .collect::<Result<Vec<_>>>()?;
            Ok(ProblemInstance {
                n: meta.n,
                d: meta.d,
                locals,
                meta: ProblemMeta {
                    family: Family::Logreg,
                    lambda: meta.lambda,
                    lambda_c: None,
                    seed: meta.seed,
                    data: ProblemData::Logreg {
                        features: mats,
                        labels: vecs,
                        x_true,
                    },
                },
            })
        }
        Family::Lasso => build_lasso(mats, vecs, x_true, meta.lambda, meta.lambda_c, meta.seed),
        Family::Custom => Err(Error::Parse {
            path: meta_path,
            msg: "custom instances are not serializable".into(),
        }),
    }
}
