//! Aligned text tables from result CSVs.

use std::collections::HashMap;

use crate::runner::{mean_row, ResultRow};

/// Mean rows recomputed from the detail rows, one per (solver, param1,
/// param2) key in order of first appearance.
pub fn recompute_means(rows: &[ResultRow]) -> Vec<ResultRow> {
    let mut order = Vec::new();
    let mut groups: HashMap<(String, String, String), Vec<ResultRow>> = HashMap::new();
    for r in rows.iter().filter(|r| !r.is_mean()) {
        let key = r.key();
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r.clone());
    }
    order.iter().map(|k| mean_row(&groups[k])).collect()
}

fn rho_of(label: &str) -> Option<f64> {
    label.strip_prefix("rho=")?.parse().ok()
}

/// Stored mean rows (recomputed when the file has none) ordered by
/// instance, then solver, each in order of first appearance; D-ripALM
/// settings are listed by ρ descending.
pub fn ordered_means(rows: &[ResultRow]) -> Vec<ResultRow> {
    let mut means: Vec<ResultRow> = rows.iter().filter(|r| r.is_mean()).cloned().collect();
    if means.is_empty() {
        means = recompute_means(rows);
    }
    let first = |f: fn(&ResultRow) -> &str| {
        let mut seen: Vec<String> = Vec::new();
        for r in &means {
            if !seen.iter().any(|s| s == f(r)) {
                seen.push(f(r).to_string());
            }
        }
        seen
    };
    let instances = first(|r| &r.param2);
    let solvers = first(|r| &r.solver);
    let pos = |v: &[String], s: &str| v.iter().position(|x| x == s).unwrap_or(usize::MAX);
    let mut indexed: Vec<(usize, ResultRow)> = means.into_iter().enumerate().collect();
    indexed.sort_by(|(ia, a), (ib, b)| {
        pos(&instances, &a.param2)
            .cmp(&pos(&instances, &b.param2))
            .then(pos(&solvers, &a.solver).cmp(&pos(&solvers, &b.solver)))
            .then_with(|| match (rho_of(&a.param1), rho_of(&b.param1)) {
                (Some(x), Some(y)) => y.total_cmp(&x),
                _ => ia.cmp(ib),
            })
    });
    indexed.into_iter().map(|(_, r)| r).collect()
}

const HEADER: [&str; 6] = ["instance", "solver", "setting", "comm.(#)", "KKTres", "status"];

fn comm_cell(r: &ResultRow) -> String {
    if r.vector_rounds.is_nan() {
        return "-".into();
    }
    if r.solver == "pg_extra" || r.solver == "nids" {
        format!("{:.0}", r.vector_rounds)
    } else {
        format!("{:.0} ({:.0})", r.vector_rounds, r.outer_iters)
    }
}

pub fn format_table(rows: &[ResultRow]) -> String {
    let body: Vec<[String; 6]> = ordered_means(rows)
        .iter()
        .map(|r| {
            [
                r.param2.clone(),
                r.solver.clone(),
                r.param1.clone(),
                comm_cell(r),
                format!("{:.1e}", r.kkt),
                r.status.clone(),
            ]
        })
        .collect();
    let mut widths = HEADER.map(str::len);
    for line in &body {
        for (w, cell) in widths.iter_mut().zip(line) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let render = |cells: &[String]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = render(&HEADER.map(String::from));
    out += &render(&widths.map(|w| "-".repeat(w)));
    for line in &body {
        out += &render(line);
    }
    out
}
