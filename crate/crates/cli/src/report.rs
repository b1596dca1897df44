use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::json;

use staggered::aggregate::{fmt_num, read_event_study_csv, EventStudyEntry};

use crate::args::ReportArgs;
use crate::commands::load_config;
use crate::output::{read_input, Emitter};
use crate::Failure;

/// Method name from a `diagnostics.json` beside the file, else the file stem.
fn default_label(path: &Path) -> String {
    let from_diagnostics = path
        .parent()
        .map(|d| d.join("diagnostics.json"))
        .and_then(|p| std::fs::read(p).ok())
        .and_then(|b| serde_json::from_slice::<serde_json::Value>(&b).ok())
        .and_then(|v| v.get("method").and_then(|m| m.as_str()).map(String::from));
    from_diagnostics.unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "input".into())
    })
}

fn unique_labels(raw: Vec<String>) -> Vec<String> {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    raw.into_iter()
        .map(|l| {
            let n = seen.entry(l.clone()).or_insert(0);
            *n += 1;
            if *n == 1 {
                l
            } else {
                format!("{l}_{n}")
            }
        })
        .collect()
}

pub fn report(a: &ReportArgs) -> Result<()> {
    let (_, mut inputs) = load_config(a.common.config.as_deref())?;
    if a.input.len() < 2 {
        return Err(Failure::usage("report needs at least two --input files").into());
    }
    if !a.label.is_empty() && a.label.len() != a.input.len() {
        return Err(Failure::usage(format!("{} labels for {} inputs", a.label.len(), a.input.len())).into());
    }
    let labels = if a.label.is_empty() {
        unique_labels(a.input.iter().map(|p| default_label(p)).collect())
    } else {
        unique_labels(a.label.clone())
    };

    let mut tables: Vec<BTreeMap<i64, EventStudyEntry>> = Vec::new();
    for path in &a.input {
        if path == &a.common.output {
            return Err(Failure::usage(format!("output `{}` is also an input", path.display())).into());
        }
        let (_, rec) = read_input(path)?;
        inputs.push(rec);
        let entries = read_event_study_csv(path).with_context(|| format!("reading `{}`", path.display()))?;
        tables.push(entries.into_iter().map(|x| (x.e, x)).collect());
    }
    let times: BTreeSet<i64> = tables.iter().flat_map(|t| t.keys().copied()).collect();

    let mut long = csv::Writer::from_writer(Vec::new());
    long.write_record(["method", "event_time", "estimate", "ci_low", "ci_high"])?;
    for (label, table) in labels.iter().zip(&tables) {
        for e in &times {
            let x = table.get(e);
            long.write_record([
                label.clone(),
                e.to_string(),
                fmt_num(x.map(|x| x.estimate)),
                fmt_num(x.and_then(|x| x.ci_low)),
                fmt_num(x.and_then(|x| x.ci_high)),
            ])?;
        }
    }

    let mut wide = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["event_time".to_string()];
    for l in &labels {
        header.extend([format!("{l}_estimate"), format!("{l}_ci_low"), format!("{l}_ci_high")]);
    }
    wide.write_record(&header)?;
    for e in &times {
        let mut row = vec![e.to_string()];
        for table in &tables {
            let x = table.get(e);
            row.extend([
                fmt_num(x.map(|x| x.estimate)),
                fmt_num(x.and_then(|x| x.ci_low)),
                fmt_num(x.and_then(|x| x.ci_high)),
            ]);
        }
        wide.write_record(&row)?;
    }

    let mut out = Emitter::new(&a.common.output)?;
    out.write("comparison_long.csv", &long.into_inner()?)?;
    out.write("comparison_wide.csv", &wide.into_inner()?)?;
    let echo = json!({
        "inputs": a.input.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "labels": labels,
    });
    out.finish("report", None, &echo, &inputs)
}
