use dripalm_bench::runner::Replicate;
use dripalm_bench::table::{format_table, recompute_means};
use dripalm_bench::{parse_csv, run_experiment, to_csv, ExperimentConfig, RunOptions};

const TINY: &str = r#"
name = "tiny"
repetitions = 3
seed_base = 4

[problem]
family = "logreg"
n = 4
d = 8
m_total = 16
lambda = 0.05

[network]
topologies = ["ring", "erdos_renyi"]
er_p = 0.6

[[solver]]
kind = "dripalm"
rho = [0.9, 0.3]

[[solver]]
kind = "nids"

[[solver]]
kind = "ideal"
eps0 = [1.0]
alpha = [0.5]
"#;

fn tiny() -> ExperimentConfig {
    ExperimentConfig::from_toml(TINY).unwrap()
}

#[test]
fn rows_are_grouped_with_a_mean_after_each_group() {
    let rows = run_experiment(&tiny(), &RunOptions::default()).unwrap();
    // 2 topologies x 4 settings x (3 replicates + mean)
    assert_eq!(rows.len(), 2 * 4 * 4);
    for group in rows.chunks(4) {
        assert_eq!(group[3].replicate, Replicate::Mean);
        for (r, row) in group[..3].iter().enumerate() {
            assert_eq!(row.replicate, Replicate::Index(r));
            assert_eq!(row.key(), group[3].key());
            assert!(row.converged(), "{row:?}");
        }
    }
}

#[test]
fn csv_is_identical_across_thread_counts_and_reruns() {
    let cfg = tiny();
    let a = to_csv(&run_experiment(&cfg, &RunOptions { jobs: 1, ..RunOptions::default() }).unwrap());
    let b = to_csv(&run_experiment(&cfg, &RunOptions { jobs: 3, ..RunOptions::default() }).unwrap());
    let c = to_csv(&run_experiment(&cfg, &RunOptions { jobs: 1, ..RunOptions::default() }).unwrap());
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn stored_means_match_recomputed_means() {
    let text = to_csv(&run_experiment(&tiny(), &RunOptions::default()).unwrap());
    let rows = parse_csv(&text).unwrap();
    let stored: Vec<_> = rows.iter().filter(|r| r.is_mean()).collect();
    let fresh = recompute_means(&rows);
    assert_eq!(stored.len(), fresh.len());
    for (s, f) in stored.iter().zip(&fresh) {
        assert_eq!(s.key(), f.key());
        for (a, b) in [
            (s.vector_rounds, f.vector_rounds),
            (s.outer_iters, f.outer_iters),
            (s.kkt, f.kkt),
            (s.consensus_res, f.consensus_res),
            (s.stationarity_res, f.stationarity_res),
        ] {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
        }
        assert_eq!(s.status, f.status);
    }
}

#[test]
fn seed_override_changes_the_instances() {
    let cfg = tiny();
    let a = to_csv(&run_experiment(&cfg, &RunOptions::default()).unwrap());
    let b = to_csv(&run_experiment(&cfg, &RunOptions { seed_base: Some(99), ..RunOptions::default() }).unwrap());
    assert_ne!(a, b);
}

#[test]
fn solver_errors_become_rows() {
    // The absolute-criterion method refuses the nonsmooth LASSO; the other
    // settings still run.
    let text = r#"
name = "mixed"
[problem]
family = "lasso"
n = 4
d = 10
m_total = 8
lambda_c = [0.1]
[[solver]]
kind = "ideal"
eps0 = [1.0]
alpha = [0.5]
[[solver]]
kind = "dripalm"
rho = [0.5]
"#;
    let rows = run_experiment(&ExperimentConfig::from_toml(text).unwrap(), &RunOptions::default()).unwrap();
    let ideal = rows.iter().find(|r| r.solver == "ideal" && !r.is_mean()).unwrap();
    assert!(ideal.status.starts_with("error: "), "{}", ideal.status);
    assert!(ideal.vector_rounds.is_nan());
    let drip = rows.iter().find(|r| r.solver == "dripalm" && !r.is_mean()).unwrap();
    assert!(drip.converged());
    // Error rows survive the CSV round trip and show up in the table.
    let back = parse_csv(&to_csv(&rows)).unwrap();
    assert_eq!(back.len(), rows.len());
    assert!(format_table(&back).contains("converged 0/1"));
}

#[test]
fn bad_configs_name_the_offending_field() {
    let cases = [
        (TINY.replace("rho = [0.9, 0.3]", "rho = [0.9, 1.5]"), "solver[0].rho[1]"),
        (TINY.replace("n = 4", "n = 1"), "problem.n"),
        (TINY.replace("er_p = 0.6", "er_p = 0.6\nbogus = 1"), "bogus"),
        (TINY.replace("family = \"logreg\"", "family = \"svm\""), "svm"),
    ];
    for (text, needle) in cases {
        let err = ExperimentConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains(needle), "`{err}` should mention `{needle}`");
    }
}

#[test]
fn malformed_csv_is_rejected() {
    assert!(parse_csv("a,b,c\n1,2,3\n").is_err());
    let good = to_csv(&[]);
    assert!(parse_csv(&good).unwrap().is_empty());
    let bad = format!("{good}dripalm,rho=0.5,ring,0,many,0,1,1e-7,1e-8,1e-7,0,converged\n");
    let err = parse_csv(&bad).unwrap_err().to_string();
    assert!(err.contains("vector_rounds"), "{err}");
}
