//! Pivoted comparison of results files: a budget x strategy accuracy table
//! per (dataset, classes-per-problem, split), with pairwise strategy deltas.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::experiment::{read_results, ResultRow};
use crate::{CliError, Result};

#[derive(Debug, Clone, Serialize)]
pub struct PivotTable {
    pub dataset: String,
    pub p: usize,
    pub split: String,
    pub budgets: Vec<usize>,
    pub strategies: Vec<String>,
    /// accuracy[budget_index][strategy_index], NaN-free: missing cells are None.
    pub accuracy: Vec<Vec<Option<f64>>>,
    /// (a, b, per-budget delta mean_a - mean_b) for every strategy pair.
    pub deltas: Vec<(String, String, Vec<Option<f64>>)>,
}

pub fn compare(paths: &[PathBuf]) -> Result<Vec<PivotTable>> {
    let mut rows: Vec<ResultRow> = Vec::new();
    for p in paths {
        rows.extend(read_results(p)?);
    }
    if rows.is_empty() {
        return Err(CliError::config("no rows in the given results files"));
    }

    // (dataset, p, split) -> (budget, strategy) -> accuracies
    let mut groups: BTreeMap<(String, usize, String), BTreeMap<(usize, String), Vec<f64>>> =
        BTreeMap::new();
    for row in rows {
        groups
            .entry((row.dataset.clone(), row.p, row.split.clone()))
            .or_default()
            .entry((row.budget, row.strategy.clone()))
            .or_default()
            .push(row.accuracy_mean);
    }

    let mut tables = Vec::new();
    for ((dataset, p, split), cells) in groups {
        let mut budgets: Vec<usize> = cells.keys().map(|(b, _)| *b).collect();
        budgets.sort_unstable();
        budgets.dedup();
        let mut strategies: Vec<String> = cells.keys().map(|(_, s)| s.clone()).collect();
        strategies.sort();
        strategies.dedup();

        let accuracy: Vec<Vec<Option<f64>>> = budgets
            .iter()
            .map(|b| {
                strategies
                    .iter()
                    .map(|s| {
                        cells
                            .get(&(*b, s.clone()))
                            .map(|xs| xs.iter().sum::<f64>() / xs.len() as f64)
                    })
                    .collect()
            })
            .collect();

        let mut deltas = Vec::new();
        for i in 0..strategies.len() {
            for j in 0..strategies.len() {
                if i == j {
                    continue;
                }
                let per_budget: Vec<Option<f64>> = (0..budgets.len())
                    .map(|bi| match (accuracy[bi][i], accuracy[bi][j]) {
                        (Some(a), Some(b)) => Some(a - b),
                        _ => None,
                    })
                    .collect();
                deltas.push((strategies[i].clone(), strategies[j].clone(), per_budget));
            }
        }
        tables.push(PivotTable {
            dataset,
            p,
            split,
            budgets,
            strategies,
            accuracy,
            deltas,
        });
    }
    Ok(tables)
}

pub fn render(tables: &[PivotTable]) -> String {
    let mut out = String::new();
    for t in tables {
        out.push_str(&format!(
            "== {} (P={}, split={}) ==\n",
            t.dataset, t.p, t.split
        ));
        out.push_str(&format!("{:>8}", "budget"));
        for s in &t.strategies {
            out.push_str(&format!("{s:>12}"));
        }
        out.push('\n');
        for (bi, b) in t.budgets.iter().enumerate() {
            out.push_str(&format!("{b:>8}"));
            for cell in &t.accuracy[bi] {
                match cell {
                    Some(v) => out.push_str(&format!("{v:>12.4}")),
                    None => out.push_str(&format!("{:>12}", "-")),
                }
            }
            out.push('\n');
        }
        for (a, b, per_budget) in &t.deltas {
            out.push_str(&format!("  delta {a} - {b}:"));
            for d in per_budget {
                match d {
                    Some(v) => out.push_str(&format!(" {v:+.4}")),
                    None => out.push_str(" -"),
                }
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

pub fn run(paths: &[PathBuf], json_out: Option<&Path>) -> Result<String> {
    let tables = compare(paths)?;
    if let Some(path) = json_out {
        std::fs::write(path, serde_json::to_string_pretty(&tables)?)?;
    }
    Ok(render(&tables))
}
