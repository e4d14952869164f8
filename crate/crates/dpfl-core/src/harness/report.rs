use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::{Error, Result};

/// One parsed `aggregate.json`.
struct CellRecord {
    strategy: String,
    participation: String,
    heterogeneity: String,
    kpfl: bool,
    metrics: Value,
}

fn collect_aggregates(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries =
        std::fs::read_dir(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir.display().to_string(), e))?;
        paths.push(entry.path());
    }
    paths.sort();
    for path in paths {
        if path.is_dir() {
            collect_aggregates(&path, out)?;
        } else if path.file_name().is_some_and(|n| n == "aggregate.json") {
            out.push(path);
        }
    }
    Ok(())
}

fn load_record(path: &Path) -> Result<CellRecord> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let v: Value = serde_json::from_str(&text)?;
    let field = |key: &str| -> Result<String> {
        v.get(key)
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("{}: missing string field '{key}'", path.display()),
            })
    };
    Ok(CellRecord {
        strategy: field("strategy")?,
        participation: field("participation")?,
        heterogeneity: field("heterogeneity")?,
        kpfl: v.get("kpfl").and_then(Value::as_bool).unwrap_or(false),
        metrics: v.get("metrics").cloned().unwrap_or(Value::Null),
    })
}

/// Canonical order with unknown names after the known ones, alphabetical.
fn order_key(canon: &[&str], name: &str) -> (usize, String) {
    match canon.iter().position(|&c| c == name) {
        Some(i) => (i, String::new()),
        None => (canon.len(), name.to_owned()),
    }
}

const STRATEGY_ORDER: [&str; 3] = ["fedavg", "fedprox", "scaffold"];
const PARTICIPATION_ORDER: [&str; 4] = ["static", "timed_random", "markovian", "programmed"];

/// Rendered rows: metric blocks, one line per participation; columns:
/// one per (strategy, pool on/off).
const METRIC_ROWS: [(&str, &str); 4] = [
    ("WE", "we_final"),
    ("IDP", "idp"),
    ("ID", "id_full"),
    ("ID[T/2,T]", "id_second_half"),
];

fn metric_cell(metrics: &Value, key: &str) -> String {
    let m = &metrics[key];
    match (m["mean"].as_f64(), m["std"].as_f64()) {
        (Some(mean), Some(std)) => format!("{mean:.4}±{std:.4}"),
        _ => "-".into(),
    }
}

fn render_table(records: &[&CellRecord]) -> String {
    let mut columns: Vec<(String, bool)> = records
        .iter()
        .map(|r| (r.strategy.clone(), r.kpfl))
        .collect();
    columns.sort_by(|a, b| {
        order_key(&STRATEGY_ORDER, &a.0)
            .cmp(&order_key(&STRATEGY_ORDER, &b.0))
            .then(a.1.cmp(&b.1))
    });
    columns.dedup();
    let mut participations: Vec<String> = records
        .iter()
        .map(|r| r.participation.clone())
        .collect();
    participations.sort_by_key(|p| order_key(&PARTICIPATION_ORDER, p));
    participations.dedup();

    let lookup: BTreeMap<(&str, bool, &str), &CellRecord> = records
        .iter()
        .map(|r| ((r.strategy.as_str(), r.kpfl, r.participation.as_str()), *r))
        .collect();

    let mut header = vec!["metric".to_owned(), "participation".to_owned()];
    for (s, k) in &columns {
        header.push(if *k { format!("{s}+kp") } else { s.clone() });
    }
    let mut rows: Vec<Vec<String>> = vec![header];
    for (label, key) in METRIC_ROWS {
        for p in &participations {
            let mut row = vec![label.to_owned(), p.clone()];
            for (s, k) in &columns {
                row.push(match lookup.get(&(s.as_str(), *k, p.as_str())) {
                    Some(r) => metric_cell(&r.metrics, key),
                    None => "-".into(),
                });
            }
            rows.push(row);
        }
    }

    let ncols = rows[0].len();
    let mut widths = vec![0usize; ncols];
    for row in &rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.chars().count());
        }
    }
    let mut out = String::new();
    for row in &rows {
        let mut line = String::new();
        for (i, cell) in row.iter().enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            line.push_str(cell);
            let pad = widths[i] - cell.chars().count();
            if i + 1 < ncols {
                line.extend(std::iter::repeat_n(' ', pad));
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// Renders every `aggregate.json` under `dir` into one fixed-width text
/// table per heterogeneity level. The output is a pure function of the
/// directory contents.
pub fn render_report(dir: &Path) -> Result<String> {
    let mut paths = Vec::new();
    collect_aggregates(dir, &mut paths)?;
    if paths.is_empty() {
        return Err(Error::Degenerate(format!(
            "no aggregate.json files under {}",
            dir.display()
        )));
    }
    let records: Vec<CellRecord> = paths
        .iter()
        .map(|p| load_record(p))
        .collect::<Result<_>>()?;

    let mut groups: BTreeMap<(usize, String), Vec<&CellRecord>> = BTreeMap::new();
    for r in &records {
        let key = order_key(&["iid", "light_niid", "heavy_niid"], &r.heterogeneity);
        groups
            .entry((key.0, r.heterogeneity.clone()))
            .or_default()
            .push(r);
    }

    let mut out = String::new();
    for ((_, name), records) in &groups {
        out.push_str(&format!("== heterogeneity: {name} ==\n"));
        out.push_str(&render_table(records));
        out.push('\n');
    }
    Ok(out)
}
