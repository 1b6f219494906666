use std::fmt::Write as _;

use crate::environments::Mode;

use super::table::{CountKey, ResultsTable};

/// Spread of the success rate across one method family's sweep values at a
/// single obstacle count, taken at the largest budget.
#[derive(Debug, Clone, PartialEq)]
pub struct Sensitivity {
    pub count: CountKey,
    pub family: String,
    /// `(method label, success rate)` in table order.
    pub values: Vec<(String, f64)>,
    /// `max - min` of the rates.
    pub spread: f64,
}

/// Family of a method label: its first word (`Hard 0.01` → `Hard`).
pub fn family_of(label: &str) -> &str {
    label.split_whitespace().next().unwrap_or(label)
}

fn methods_in_order(table: &ResultsTable, mode: Mode) -> Vec<String> {
    let mut methods: Vec<String> = Vec::new();
    for r in table.rows.iter().filter(|r| r.mode == mode) {
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
    }
    methods
}

fn counts_ascending(table: &ResultsTable, mode: Mode) -> Vec<CountKey> {
    let mut counts: Vec<CountKey> = table.rows.iter().filter(|r| r.mode == mode).map(|r| r.obstacles).collect();
    counts.sort();
    counts.dedup();
    counts
}

/// Families with at least two sweep values, per obstacle count.
pub fn sensitivity(table: &ResultsTable, mode: Mode) -> Vec<Sensitivity> {
    let methods = methods_in_order(table, mode);
    let mut families: Vec<&str> = Vec::new();
    for m in &methods {
        if !families.contains(&family_of(m)) {
            families.push(family_of(m));
        }
    }
    let mut out = Vec::new();
    for count in counts_ascending(table, mode) {
        for family in &families {
            let values: Vec<(String, f64)> = methods
                .iter()
                .filter(|m| family_of(m) == *family)
                .filter_map(|m| table.at_budget(mode, count, m).map(|r| (m.clone(), r.success_rate)))
                .collect();
            if values.len() < 2 {
                continue;
            }
            let max = values.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
            let min = values.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
            out.push(Sensitivity {
                count,
                family: family.to_string(),
                values,
                spread: max - min,
            });
        }
    }
    out
}

/// Text report: per mode, success rate at the largest budget for every
/// method (rows) and obstacle count (columns, ascending), followed by the
/// spread of each method family across its sweep values.
pub fn summarize(table: &ResultsTable) -> String {
    let mut out = String::new();
    for mode in table.modes() {
        let budget = table.max_budget(mode).unwrap_or(0);
        let methods = methods_in_order(table, mode);
        let counts = counts_ascending(table, mode);
        let _ = writeln!(out, "## mode {mode}: success rate within {budget} paths [95% CI]");
        let _ = writeln!(out);
        let header: Vec<String> = counts.iter().map(|c| format!("n={c}")).collect();
        let _ = writeln!(out, "| method | {} |", header.join(" | "));
        let _ = writeln!(out, "|---|{}", "---|".repeat(counts.len()));
        for m in &methods {
            let cells: Vec<String> = counts
                .iter()
                .map(|&c| match table.at_budget(mode, c, m) {
                    Some(r) => format!("{} [{}, {}]", r.success_rate, r.ci_lo, r.ci_hi),
                    None => "-".to_string(),
                })
                .collect();
            let _ = writeln!(out, "| {m} | {} |", cells.join(" | "));
        }
        let _ = writeln!(out);

        let sens = sensitivity(table, mode);
        if sens.is_empty() {
            continue;
        }
        let _ = writeln!(out, "### sensitivity ({mode})");
        let _ = writeln!(out);
        for s in &sens {
            let vals: Vec<String> = s.values.iter().map(|(m, r)| format!("{m}={r}")).collect();
            let _ = writeln!(
                out,
                "- n={} {}: spread {:.4} ({})",
                s.count,
                s.family,
                s.spread,
                vals.join(", ")
            );
        }
        for count in counts {
            let a = table.at_budget(mode, count, "Hard 0.01");
            let b = table.at_budget(mode, count, "Hard 0.02");
            if let (Some(a), Some(b)) = (a, b) {
                let order = match a.success_rate.partial_cmp(&b.success_rate) {
                    Some(std::cmp::Ordering::Greater) => "Hard 0.01 > Hard 0.02",
                    Some(std::cmp::Ordering::Less) => "Hard 0.02 > Hard 0.01",
                    _ => "Hard 0.01 = Hard 0.02",
                };
                let _ = writeln!(out, "- n={count} threshold ordering: {order}");
            }
        }
        let _ = writeln!(out);
    }
    out
}
