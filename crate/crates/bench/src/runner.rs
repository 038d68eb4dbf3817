//! Experiment execution and CSV output.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use dripalm_core::baselines::{ideal_run, nids_run, pg_extra_run, BaselineConfig, IdealConfig};
use dripalm_core::dripalm::{self, DripalmConfig, Schedule};
use dripalm_core::netgraph::build_topology;
use dripalm_core::objectives::{gen_lasso, gen_logreg};
use dripalm_core::{Graph, Network, ProblemInstance, SolveResult};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, InstanceSpec, SolverVariant};

pub const CSV_HEADER: [&str; 12] = [
    "solver",
    "param1",
    "param2",
    "replicate",
    "vector_rounds",
    "scalar_rounds",
    "outer_iters",
    "kkt",
    "consensus_res",
    "stationarity_res",
    "wall_time_ms",
    "status",
];

/// Mixed into the replicate seed so the graph and the data draw from
/// unrelated streams.
const TOPOLOGY_SALT: u64 = 0x746f_706f_6c6f_6779;

#[derive(Debug)]
pub enum RunError {
    Instance(String),
    Io(std::io::Error),
    Pool(String),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Instance(m) => write!(f, "instance generation failed: {m}"),
            RunError::Io(e) => write!(f, "{e}"),
            RunError::Pool(m) => write!(f, "thread pool: {m}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Replicate {
    Index(usize),
    Mean,
}

impl fmt::Display for Replicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Replicate::Index(r) => write!(f, "{r}"),
            Replicate::Mean => f.write_str("mean"),
        }
    }
}

/// One CSV line. Counts are floats so that mean rows fit the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub solver: String,
    pub param1: String,
    pub param2: String,
    pub replicate: Replicate,
    pub vector_rounds: f64,
    pub scalar_rounds: f64,
    pub outer_iters: f64,
    pub kkt: f64,
    pub consensus_res: f64,
    pub stationarity_res: f64,
    pub wall_time_ms: f64,
    pub status: String,
}

impl ResultRow {
    fn from_result(v: &SolverVariant, inst: &InstanceSpec, r: usize, res: &SolveResult, ms: f64) -> Self {
        Self {
            solver: v.solver().into(),
            param1: v.label(),
            param2: inst.label(),
            replicate: Replicate::Index(r),
            vector_rounds: res.vector_rounds as f64,
            scalar_rounds: res.scalar_rounds as f64,
            outer_iters: res.outer_iters as f64,
            kkt: res.kkt.kkt,
            consensus_res: res.kkt.consensus_res,
            stationarity_res: res.kkt.stationarity_res,
            wall_time_ms: ms,
            status: res.status.to_string(),
        }
    }

    fn failed(v: &SolverVariant, inst: &InstanceSpec, r: usize, msg: &str) -> Self {
        Self {
            solver: v.solver().into(),
            param1: v.label(),
            param2: inst.label(),
            replicate: Replicate::Index(r),
            vector_rounds: f64::NAN,
            scalar_rounds: f64::NAN,
            outer_iters: f64::NAN,
            kkt: f64::NAN,
            consensus_res: f64::NAN,
            stationarity_res: f64::NAN,
            wall_time_ms: 0.0,
            status: format!("error: {msg}"),
        }
    }

    pub fn is_mean(&self) -> bool {
        self.replicate == Replicate::Mean
    }

    pub fn converged(&self) -> bool {
        self.status == "converged"
    }

    pub fn key(&self) -> (String, String, String) {
        (self.solver.clone(), self.param1.clone(), self.param2.clone())
    }

    /// Cells in [`CSV_HEADER`] order. Floats use the shortest round-trip
    /// representation so parsed values equal the in-memory ones.
    pub fn record(&self) -> [String; 12] {
        [
            self.solver.clone(),
            self.param1.clone(),
            self.param2.clone(),
            self.replicate.to_string(),
            self.vector_rounds.to_string(),
            self.scalar_rounds.to_string(),
            self.outer_iters.to_string(),
            format!("{:e}", self.kkt),
            format!("{:e}", self.consensus_res),
            format!("{:e}", self.stationarity_res),
            self.wall_time_ms.to_string(),
            self.status.clone(),
        ]
    }
}

/// Average of a replicate group. The status cell counts converged runs.
pub fn mean_row(group: &[ResultRow]) -> ResultRow {
    let first = &group[0];
    let m = |f: fn(&ResultRow) -> f64| group.iter().map(f).sum::<f64>() / group.len() as f64;
    let ok = group.iter().filter(|r| r.converged()).count();
    ResultRow {
        solver: first.solver.clone(),
        param1: first.param1.clone(),
        param2: first.param2.clone(),
        replicate: Replicate::Mean,
        vector_rounds: m(|r| r.vector_rounds),
        scalar_rounds: m(|r| r.scalar_rounds),
        outer_iters: m(|r| r.outer_iters),
        kkt: m(|r| r.kkt),
        consensus_res: m(|r| r.consensus_res),
        stationarity_res: m(|r| r.stationarity_res),
        wall_time_ms: m(|r| r.wall_time_ms),
        status: format!("converged {ok}/{}", group.len()),
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; 0 lets rayon decide.
    pub jobs: usize,
    /// Overrides the config's `seed_base`.
    pub seed_base: Option<u64>,
    /// Record wall time. Off by default so the CSV is reproducible byte for
    /// byte.
    pub wall_time: bool,
    /// Directory for per-run outer-iteration histories of double-loop
    /// solvers.
    pub history_dir: Option<PathBuf>,
}

pub fn generate(inst: &InstanceSpec, seed: u64) -> Result<(ProblemInstance, Graph), RunError> {
    let err = |e: dripalm_core::Error| RunError::Instance(e.to_string());
    let (problem, n) = match inst {
        InstanceSpec::Logreg(p, _) => (gen_logreg(*p, seed).map_err(err)?, p.n),
        InstanceSpec::Lasso(p, _) => (gen_lasso(*p, seed).map_err(err)?, p.n),
    };
    let graph = build_topology(inst.topology(), n, seed ^ TOPOLOGY_SALT).map_err(err)?;
    Ok((problem, graph))
}

pub fn solve(v: &SolverVariant, problem: &ProblemInstance, graph: &Graph) -> dripalm_core::Result<SolveResult> {
    let mut net = Network::metropolis(graph.clone(), problem.d)?;
    match *v {
        SolverVariant::Dripalm { rho, tau, max_comm, max_inner, kkt_tol } => {
            let mut cfg = DripalmConfig { rho, ..DripalmConfig::default() };
            if let Some(t) = tau {
                cfg.tau = Schedule::Constant(t);
            }
            if let Some(c) = max_comm {
                cfg.max_total_comm = c;
            }
            if let Some(m) = max_inner {
                cfg.subsolver.max_inner = m;
            }
            if let Some(t) = kkt_tol {
                cfg.kkt_tol = t;
            }
            dripalm::run(&cfg, problem, &mut net)
        }
        SolverVariant::PgExtra { step, max_comm, kkt_tol } | SolverVariant::Nids { step, max_comm, kkt_tol } => {
            let mut cfg = BaselineConfig { step, ..BaselineConfig::default() };
            if let Some(c) = max_comm {
                cfg.max_comm = c;
            }
            if let Some(t) = kkt_tol {
                cfg.kkt_tol = t;
            }
            if matches!(v, SolverVariant::PgExtra { .. }) {
                pg_extra_run(problem, &mut net, &cfg)
            } else {
                nids_run(problem, &mut net, &cfg)
            }
        }
        SolverVariant::Ideal { eps0, alpha, max_comm, max_inner, kkt_tol } => {
            let mut cfg = IdealConfig { eps0, alpha_tol: alpha, ..IdealConfig::default() };
            if let Some(c) = max_comm {
                cfg.max_comm = c;
            }
            if let Some(m) = max_inner {
                cfg.subsolver.max_inner = m;
            }
            if let Some(t) = kkt_tol {
                cfg.kkt_tol = t;
            }
            ideal_run(problem, &mut net, &cfg)
        }
    }
}

fn history_path(dir: &Path, row: &ResultRow) -> PathBuf {
    let clean = |s: &str| s.replace(['/', '='], "_");
    dir.join(format!(
        "{}_{}_{}_r{}.csv",
        row.solver,
        clean(&row.param1),
        clean(&row.param2),
        row.replicate
    ))
}

/// Every (replicate, instance) pair is generated once and shared by all
/// solver settings. Rows come out grouped by instance, then setting, each
/// group followed by its mean row.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<ResultRow>, RunError> {
    let instances = cfg.instances();
    let variants = cfg.variants();
    let seed_base = opts.seed_base.unwrap_or(cfg.seed_base);
    if let Some(dir) = &opts.history_dir {
        std::fs::create_dir_all(dir)?;
    }
    let tasks: Vec<(usize, usize)> = (0..cfg.repetitions)
        .flat_map(|r| (0..instances.len()).map(move |i| (r, i)))
        .collect();

    let work = |&(r, i): &(usize, usize)| -> Result<Vec<ResultRow>, RunError> {
        let inst = &instances[i];
        let (problem, graph) = generate(inst, seed_base + r as u64)?;
        let mut rows = Vec::with_capacity(variants.len());
        for v in &variants {
            let start = Instant::now();
            let row = match solve(v, &problem, &graph) {
                Ok(res) => {
                    let ms = if opts.wall_time { start.elapsed().as_millis() as f64 } else { 0.0 };
                    let row = ResultRow::from_result(v, inst, r, &res, ms);
                    if let (Some(dir), false) = (&opts.history_dir, res.history.is_empty()) {
                        std::fs::write(history_path(dir, &row), res.history_csv())?;
                    }
                    row
                }
                Err(e) => ResultRow::failed(v, inst, r, &e.to_string()),
            };
            rows.push(row);
        }
        Ok(rows)
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    let results: Vec<Vec<ResultRow>> = pool.install(|| tasks.par_iter().map(work).collect::<Result<_, _>>())?;

    let mut by_cell: HashMap<(usize, usize, usize), ResultRow> = HashMap::new();
    for (&(r, i), rows) in tasks.iter().zip(results) {
        for (vi, row) in rows.into_iter().enumerate() {
            by_cell.insert((i, vi, r), row);
        }
    }
    let mut out = Vec::with_capacity(by_cell.len() + instances.len() * variants.len());
    for i in 0..instances.len() {
        for vi in 0..variants.len() {
            let group: Vec<ResultRow> = (0..cfg.repetitions)
                .map(|r| by_cell.remove(&(i, vi, r)).expect("every task ran"))
                .collect();
            let mean = mean_row(&group);
            out.extend(group);
            out.push(mean);
        }
    }
    Ok(out)
}

pub fn to_csv(rows: &[ResultRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for row in rows {
        w.write_record(row.record()).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii cells")
}

#[derive(Debug)]
pub struct CsvError(pub String);

impl fmt::Display for CsvError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CsvError {}

pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>, CsvError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| CsvError(e.to_string()))?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(CsvError(format!(
            "unexpected header `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CsvError(e.to_string()))?;
        let at = |col: usize| -> Result<f64, CsvError> {
            rec[col].parse::<f64>().map_err(|_| {
                CsvError(format!("row {}: column {} is not a number: `{}`", line + 1, CSV_HEADER[col], &rec[col]))
            })
        };
        let replicate = match &rec[3] {
            "mean" => Replicate::Mean,
            s => Replicate::Index(s.parse().map_err(|_| {
                CsvError(format!("row {}: bad replicate `{s}`", line + 1))
            })?),
        };
        rows.push(ResultRow {
            solver: rec[0].to_string(),
            param1: rec[1].to_string(),
            param2: rec[2].to_string(),
            replicate,
            vector_rounds: at(4)?,
            scalar_rounds: at(5)?,
            outer_iters: at(6)?,
            kkt: at(7)?,
            consensus_res: at(8)?,
            stationarity_res: at(9)?,
            wall_time_ms: at(10)?,
            status: rec[11].to_string(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(r: usize, rounds: f64, kkt: f64, status: &str) -> ResultRow {
        ResultRow {
            solver: "dripalm".into(),
            param1: "rho=0.5".into(),
            param2: "ring".into(),
            replicate: Replicate::Index(r),
            vector_rounds: rounds,
            scalar_rounds: 2.0 * rounds,
            outer_iters: 3.0,
            kkt,
            consensus_res: kkt / 2.0,
            stationarity_res: kkt,
            wall_time_ms: 0.0,
            status: status.into(),
        }
    }

    #[test]
    fn mean_and_status_count() {
        let g = [row(0, 10.0, 1e-7, "converged"), row(1, 13.0, 3e-7, "max_comm")];
        let m = mean_row(&g);
        assert_eq!(m.vector_rounds, 11.5);
        assert!((m.kkt - 2e-7).abs() < 1e-22);
        assert_eq!(m.status, "converged 1/2");
        assert!(m.is_mean());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut rows = vec![row(0, 3624.0, 1.234567890123e-7, "converged"), row(1, 1.0, f64::NAN, "error: x, y")];
        rows.push(mean_row(&rows[..1]));
        let text = to_csv(&rows);
        assert!(text.starts_with("solver,param1,param2,replicate,vector_rounds"));
        assert!(text.contains(",3624,"));
        let back = parse_csv(&text).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back[0], rows[0]);
        assert!(back[1].kkt.is_nan());
        assert_eq!(back[1].status, "error: x, y");
        assert_eq!(back[2], rows[2]);
    }

    #[test]
    fn wrong_header_is_rejected() {
        assert!(parse_csv("a,b\n1,2\n").is_err());
    }
}
