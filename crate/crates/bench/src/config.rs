//! Experiment configuration files.
//!
//! A config is TOML: top-level run settings, a `[problem]` table, a
//! `[network]` table and one `[[solver]]` table per solver family. List-valued
//! keys (`lambda_c`, `rho`, `eps0`, `alpha`, `topologies`) are swept as a
//! grid.

use std::fmt;
use std::path::Path;

use dripalm_core::objectives::{LassoParams, LogregParams};
use dripalm_core::Topology;
use serde::Deserialize;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(field: &str, msg: impl fmt::Display) -> ConfigError {
    ConfigError(format!("{field}: {msg}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Logreg,
    Lasso,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyName {
    Ring,
    ErdosRenyi,
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Dripalm,
    PgExtra,
    Nids,
    Ideal,
}

impl SolverKind {
    pub fn label(self) -> &'static str {
        match self {
            SolverKind::Dripalm => "dripalm",
            SolverKind::PgExtra => "pg_extra",
            SolverKind::Nids => "nids",
            SolverKind::Ideal => "ideal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub family: FamilyName,
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub m_total: Option<usize>,
    /// Ridge weight (logistic only).
    pub lambda: Option<f64>,
    /// Relative ℓ₁ weights (LASSO only).
    pub lambda_c: Option<Vec<f64>>,
    pub noise: Option<f64>,
    pub density: Option<f64>,
    pub feature_scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    #[serde(default = "default_topologies")]
    pub topologies: Vec<TopologyName>,
    #[serde(default = "default_er_p")]
    pub er_p: f64,
    pub radius: Option<f64>,
}

fn default_topologies() -> Vec<TopologyName> {
    vec![TopologyName::ErdosRenyi]
}

fn default_er_p() -> f64 {
    0.2
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            topologies: default_topologies(),
            er_p: default_er_p(),
            radius: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub kind: SolverKind,
    pub rho: Option<Vec<f64>>,
    pub eps0: Option<Vec<f64>>,
    pub alpha: Option<Vec<f64>>,
    pub tau: Option<f64>,
    pub step: Option<f64>,
    pub max_comm: Option<u64>,
    pub max_inner: Option<usize>,
    pub kkt_tol: Option<f64>,
}

impl SolverSpec {
    pub fn new(kind: SolverKind) -> Self {
        Self {
            kind,
            rho: None,
            eps0: None,
            alpha: None,
            tau: None,
            step: None,
            max_comm: None,
            max_inner: None,
            kkt_tol: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default = "one")]
    pub repetitions: usize,
    #[serde(default = "one_u64")]
    pub seed_base: u64,
    /// CSV file name inside the output directory; defaults to `<name>.csv`.
    pub output: Option<String>,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub network: NetworkSpec,
    #[serde(rename = "solver")]
    pub solvers: Vec<SolverSpec>,
}

fn one() -> usize {
    1
}

fn one_u64() -> u64 {
    1
}

/// One generated instance family member: the swept problem and network
/// parameters that the rows' `param2` column names.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InstanceSpec {
    Logreg(LogregParams, Topology),
    Lasso(LassoParams, Topology),
}

impl InstanceSpec {
    pub fn topology(&self) -> Topology {
        match self {
            InstanceSpec::Logreg(_, t) | InstanceSpec::Lasso(_, t) => *t,
        }
    }

    pub fn label(&self) -> String {
        match self {
            InstanceSpec::Logreg(_, t) => t.label().to_string(),
            InstanceSpec::Lasso(p, t) => format!("{}/lc={}", t.label(), p.lambda_c),
        }
    }
}

/// One concrete solver setting: the rows' `solver` and `param1` columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverVariant {
    Dripalm { rho: f64, tau: Option<f64>, max_comm: Option<u64>, max_inner: Option<usize>, kkt_tol: Option<f64> },
    PgExtra { step: Option<f64>, max_comm: Option<u64>, kkt_tol: Option<f64> },
    Nids { step: Option<f64>, max_comm: Option<u64>, kkt_tol: Option<f64> },
    Ideal { eps0: f64, alpha: f64, max_comm: Option<u64>, max_inner: Option<usize>, kkt_tol: Option<f64> },
}

impl SolverVariant {
    pub fn solver(&self) -> &'static str {
        match self {
            SolverVariant::Dripalm { .. } => "dripalm",
            SolverVariant::PgExtra { .. } => "pg_extra",
            SolverVariant::Nids { .. } => "nids",
            SolverVariant::Ideal { .. } => "ideal",
        }
    }

    pub fn label(&self) -> String {
        match self {
            SolverVariant::Dripalm { rho, .. } => format!("rho={rho}"),
            SolverVariant::PgExtra { step: Some(s), .. } | SolverVariant::Nids { step: Some(s), .. } => {
                format!("step={s}")
            }
            SolverVariant::PgExtra { .. } | SolverVariant::Nids { .. } => "default".into(),
            SolverVariant::Ideal { eps0, alpha, .. } => format!("eps0={eps0}/alpha={alpha}"),
        }
    }
}

fn check_positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(bad(field, format!("must be a positive number, got {v}")))
    }
}

fn check_list(field: &str, values: &[f64], ok: impl Fn(f64) -> bool, what: &str) -> Result<(), ConfigError> {
    if values.is_empty() {
        return Err(bad(field, "list must not be empty"));
    }
    for (i, &v) in values.iter().enumerate() {
        if !ok(v) {
            return Err(bad(&format!("{field}[{i}]"), format!("{what}, got {v}")));
        }
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }

    pub fn output_name(&self) -> String {
        self.output.clone().unwrap_or_else(|| format!("{}.csv", self.name))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.name.trim().is_empty() {
            return Err(bad("name", "must not be empty"));
        }
        if self.repetitions == 0 {
            return Err(bad("repetitions", "must be at least 1"));
        }
        let p = &self.problem;
        for (field, v) in [("problem.n", p.n), ("problem.d", p.d), ("problem.m_total", p.m_total)] {
            if v == Some(0) {
                return Err(bad(field, "must be at least 1"));
            }
        }
        if p.n == Some(1) {
            return Err(bad("problem.n", "a network needs at least 2 agents"));
        }
        match p.family {
            FamilyName::Logreg => {
                if p.lambda_c.is_some() || p.density.is_some() || p.feature_scale.is_some() {
                    return Err(bad("problem", "lambda_c, density and feature_scale apply to lasso only"));
                }
                if let Some(l) = p.lambda {
                    check_positive("problem.lambda", l)?;
                }
            }
            FamilyName::Lasso => {
                if p.lambda.is_some() {
                    return Err(bad("problem.lambda", "lasso takes lambda_c instead"));
                }
                if let Some(lc) = &p.lambda_c {
                    check_list("problem.lambda_c", lc, |v| v.is_finite() && v > 0.0, "must be positive")?;
                }
                if let Some(s) = p.feature_scale {
                    check_positive("problem.feature_scale", s)?;
                }
                if let Some(dn) = p.density {
                    if !(dn > 0.0 && dn <= 1.0) {
                        return Err(bad("problem.density", format!("must lie in (0, 1], got {dn}")));
                    }
                }
            }
        }
        if let Some(noise) = p.noise {
            if !(noise.is_finite() && noise >= 0.0) {
                return Err(bad("problem.noise", format!("must be nonnegative, got {noise}")));
            }
        }
        if self.network.topologies.is_empty() {
            return Err(bad("network.topologies", "list must not be empty"));
        }
        if !(self.network.er_p > 0.0 && self.network.er_p <= 1.0) {
            return Err(bad("network.er_p", format!("must lie in (0, 1], got {}", self.network.er_p)));
        }
        if let Some(r) = self.network.radius {
            check_positive("network.radius", r)?;
        }
        if self.solvers.is_empty() {
            return Err(bad("solver", "at least one [[solver]] table is required"));
        }
        for (i, s) in self.solvers.iter().enumerate() {
            self.validate_solver(i, s)?;
        }
        Ok(())
    }

    fn validate_solver(&self, i: usize, s: &SolverSpec) -> Result<(), ConfigError> {
        let f = |name: &str| format!("solver[{i}].{name}");
        let reject = |name: &str, present: bool| {
            if present {
                Err(bad(&f(name), format!("not a {} setting", s.kind.label())))
            } else {
                Ok(())
            }
        };
        match s.kind {
            SolverKind::Dripalm => {
                reject("eps0", s.eps0.is_some())?;
                reject("alpha", s.alpha.is_some())?;
                reject("step", s.step.is_some())?;
                if let Some(r) = &s.rho {
                    check_list(&f("rho"), r, |v| v > 0.0 && v < 1.0, "must lie in (0, 1)")?;
                }
                if let Some(t) = s.tau {
                    check_positive(&f("tau"), t)?;
                }
            }
            SolverKind::PgExtra | SolverKind::Nids => {
                reject("rho", s.rho.is_some())?;
                reject("eps0", s.eps0.is_some())?;
                reject("alpha", s.alpha.is_some())?;
                reject("tau", s.tau.is_some())?;
                reject("max_inner", s.max_inner.is_some())?;
                if let Some(st) = s.step {
                    check_positive(&f("step"), st)?;
                }
            }
            SolverKind::Ideal => {
                reject("rho", s.rho.is_some())?;
                reject("tau", s.tau.is_some())?;
                reject("step", s.step.is_some())?;
                if let Some(e) = &s.eps0 {
                    check_list(&f("eps0"), e, |v| v.is_finite() && v > 0.0, "must be positive")?;
                }
                if let Some(a) = &s.alpha {
                    check_list(&f("alpha"), a, |v| v > 0.0 && v < 1.0, "must lie in (0, 1)")?;
                }
            }
        }
        if s.max_comm == Some(0) {
            return Err(bad(&f("max_comm"), "must be at least 1"));
        }
        if s.max_inner == Some(0) {
            return Err(bad(&f("max_inner"), "must be at least 1"));
        }
        if let Some(t) = s.kkt_tol {
            if !(t.is_finite() && t >= 0.0) {
                return Err(bad(&f("kkt_tol"), format!("must be nonnegative, got {t}")));
            }
        }
        Ok(())
    }

    fn topology(&self, name: TopologyName) -> Topology {
        match name {
            TopologyName::Ring => Topology::Ring,
            TopologyName::ErdosRenyi => Topology::ErdosRenyi { p: self.network.er_p },
            TopologyName::Geometric => Topology::Geometric { radius: self.network.radius },
        }
    }

    /// Problem × topology grid, topologies outermost.
    pub fn instances(&self) -> Vec<InstanceSpec> {
        let p = &self.problem;
        let mut out = Vec::new();
        for &t in &self.network.topologies {
            let topo = self.topology(t);
            match p.family {
                FamilyName::Logreg => {
                    let base = LogregParams::default();
                    out.push(InstanceSpec::Logreg(
                        LogregParams {
                            n: p.n.unwrap_or(base.n),
                            d: p.d.unwrap_or(base.d),
                            m_total: p.m_total.unwrap_or(base.m_total),
                            lambda: p.lambda.unwrap_or(base.lambda),
                            noise: p.noise.unwrap_or(base.noise),
                        },
                        topo,
                    ));
                }
                FamilyName::Lasso => {
                    let base = LassoParams::default();
                    let lcs = p.lambda_c.clone().unwrap_or(vec![base.lambda_c]);
                    for lc in lcs {
                        out.push(InstanceSpec::Lasso(
                            LassoParams {
                                n: p.n.unwrap_or(base.n),
                                d: p.d.unwrap_or(base.d),
                                m_total: p.m_total.unwrap_or(base.m_total),
                                lambda_c: lc,
                                density: p.density.unwrap_or(base.density),
                                noise: p.noise.unwrap_or(base.noise),
                                feature_scale: p.feature_scale.unwrap_or(base.feature_scale),
                            },
                            topo,
                        ));
                    }
                }
            }
        }
        out
    }

    /// Solver settings in config order; IDEAL sweeps `eps0` outermost.
    pub fn variants(&self) -> Vec<SolverVariant> {
        let mut out = Vec::new();
        for s in &self.solvers {
            match s.kind {
                SolverKind::Dripalm => {
                    for &rho in s.rho.as_deref().unwrap_or(&[0.99]) {
                        out.push(SolverVariant::Dripalm {
                            rho,
                            tau: s.tau,
                            max_comm: s.max_comm,
                            max_inner: s.max_inner,
                            kkt_tol: s.kkt_tol,
                        });
                    }
                }
                SolverKind::PgExtra => out.push(SolverVariant::PgExtra {
                    step: s.step,
                    max_comm: s.max_comm,
                    kkt_tol: s.kkt_tol,
                }),
                SolverKind::Nids => out.push(SolverVariant::Nids {
                    step: s.step,
                    max_comm: s.max_comm,
                    kkt_tol: s.kkt_tol,
                }),
                SolverKind::Ideal => {
                    for &eps0 in s.eps0.as_deref().unwrap_or(&[1e-2]) {
                        for &alpha in s.alpha.as_deref().unwrap_or(&[0.2]) {
                            out.push(SolverVariant::Ideal {
                                eps0,
                                alpha,
                                max_comm: s.max_comm,
                                max_inner: s.max_inner,
                                kkt_tol: s.kkt_tol,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}
