//! Event-time aggregation of (g,t)-indexed estimates:
//! `theta(e) = sum_g P(G = g | cell (g, g+e) estimated) * est(g, g+e)`.
//!
//! Shares are treated as known, so the influence of `theta(e)` is the
//! share-weighted sum of the cell influences.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bootstrap::{multiplier_bootstrap, BootstrapOptions};
use crate::drdid::{influence_se, GroupTimeATT};
use crate::error::{Error, Result};

/// Header of the event-study CSV contract.
pub const EVENT_STUDY_HEADER: [&str; 7] = ["event_time", "estimate", "se", "ci_low", "ci_high", "sim_low", "sim_high"];

/// Default display window.
pub const DEFAULT_WINDOW: (i64, i64) = (-8, 12);

/// One cell entering the aggregation.
#[derive(Debug, Clone, Copy)]
pub struct CellInput<'a> {
    pub g: u32,
    pub t: u32,
    pub estimate: f64,
    pub influence: &'a [f64],
}

impl<'a> From<&'a GroupTimeATT> for CellInput<'a> {
    fn from(c: &'a GroupTimeATT) -> Self {
        CellInput {
            g: c.g,
            t: c.t,
            estimate: c.estimate,
            influence: &c.influence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventStudyEntry {
    pub e: i64,
    pub estimate: f64,
    pub se: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub sim_low: Option<f64>,
    pub sim_high: Option<f64>,
    pub n_cohorts: usize,
}

impl EventStudyEntry {
    /// Entry with a pointwise normal interval; the simultaneous band is set
    /// to the pointwise one until a wider critical value is applied.
    pub fn pointwise(e: i64, estimate: f64, se: Option<f64>, z: f64, n_cohorts: usize) -> Self {
        let half = se.map(|s| z * s);
        EventStudyEntry {
            e,
            estimate,
            se,
            ci_low: half.map(|h| estimate - h),
            ci_high: half.map(|h| estimate + h),
            sim_low: half.map(|h| estimate - h),
            sim_high: half.map(|h| estimate + h),
            n_cohorts,
        }
    }
}

/// Cohort weights used at one event time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventWeights {
    pub e: i64,
    pub weights: BTreeMap<u32, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventStudyResult {
    pub method: String,
    pub horizon: u32,
    pub level: f64,
    /// Sup-t critical value behind the simultaneous band, if one was drawn.
    pub critical_value: Option<f64>,
    pub entries: Vec<EventStudyEntry>,
    pub weights: Vec<EventWeights>,
    /// Event times inside the window with no estimated cell.
    pub omitted: Vec<i64>,
    /// Aggregated influence per entry (same order as `entries`).
    #[serde(skip)]
    pub influence: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateOptions {
    pub window: (i64, i64),
    pub level: f64,
    /// Simultaneous band by multiplier bootstrap; pointwise only when `None`.
    pub bootstrap: Option<BootstrapOptions>,
}

impl Default for AggregateOptions {
    fn default() -> Self {
        AggregateOptions {
            window: DEFAULT_WINDOW,
            level: 0.95,
            bootstrap: Some(BootstrapOptions::default()),
        }
    }
}

/// Two-sided normal critical value at `level`.
pub fn normal_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level {level} outside (0, 1)")));
    }
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(n.inverse_cdf(0.5 + level / 2.0))
}

/// Aggregates cells into an event study. `cohort_sizes` supplies the share
/// numerators; at each `e` the shares are renormalized over cohorts with an
/// estimated cell at `g + e`.
pub fn aggregate(
    method: &str,
    cells: &[CellInput<'_>],
    cohort_sizes: &BTreeMap<u32, usize>,
    horizon: u32,
    opts: &AggregateOptions,
) -> Result<EventStudyResult> {
    let z = normal_quantile(opts.level)?;
    let n = cells.first().map(|c| c.influence.len()).unwrap_or(0);
    if cells.iter().any(|c| c.influence.len() != n) {
        return Err(Error::Dimension("cell influence vectors have different unit counts".into()));
    }
    let mut by_e: BTreeMap<i64, Vec<&CellInput<'_>>> = BTreeMap::new();
    for c in cells {
        let e = c.t as i64 - c.g as i64;
        if e >= opts.window.0 && e <= opts.window.1 {
            by_e.entry(e).or_default().push(c);
        }
    }

    let mut entries = Vec::new();
    let mut weights = Vec::new();
    let mut influence = Vec::new();
    let mut omitted = Vec::new();
    for e in opts.window.0..=opts.window.1 {
        let Some(group) = by_e.get(&e) else {
            omitted.push(e);
            continue;
        };
        let total: usize = group.iter().map(|c| cohort_sizes.get(&c.g).copied().unwrap_or(0)).sum();
        if total == 0 {
            return Err(Error::InsufficientSupport(format!("cohorts at event time {e} have no units")));
        }
        let mut w = BTreeMap::new();
        let mut est = 0.0;
        let mut psi = vec![0.0; n];
        for c in group {
            let share = cohort_sizes.get(&c.g).copied().unwrap_or(0) as f64 / total as f64;
            w.insert(c.g, share);
            est += share * c.estimate;
            psi.iter_mut().zip(c.influence).for_each(|(p, v)| *p += share * v);
        }
        let se = influence_se(&psi);
        entries.push(EventStudyEntry::pointwise(e, est, Some(se), z, group.len()));
        weights.push(EventWeights { e, weights: w });
        influence.push(psi);
    }
    if entries.is_empty() {
        return Err(Error::InsufficientSupport(format!(
            "no estimated cells in event window [{}, {}]",
            opts.window.0, opts.window.1
        )));
    }

    let mut result = EventStudyResult {
        method: method.to_string(),
        horizon,
        level: opts.level,
        critical_value: None,
        entries,
        weights,
        omitted,
        influence,
    };
    if let Some(b) = &opts.bootstrap {
        let mut b = *b;
        b.level = opts.level;
        result.apply_bootstrap(&b)?;
    }
    Ok(result)
}

impl EventStudyResult {
    /// Replaces the simultaneous band with a sup-t band from the stored
    /// influence. The critical value never drops below the pointwise one.
    pub fn apply_bootstrap(&mut self, opts: &BootstrapOptions) -> Result<()> {
        let refs: Vec<&[f64]> = self.influence.iter().map(|v| v.as_slice()).collect();
        let band = multiplier_bootstrap(&refs, opts)?;
        let crit = band.critical_value.max(normal_quantile(opts.level)?);
        self.critical_value = Some(crit);
        for entry in &mut self.entries {
            if let Some(se) = entry.se {
                entry.sim_low = Some(entry.estimate - crit * se);
                entry.sim_high = Some(entry.estimate + crit * se);
            }
        }
        Ok(())
    }

    /// Adds the normalization row at `e` (estimate zero, no interval) when
    /// `e` lies in the window but has no estimate.
    pub fn insert_reference(&mut self, e: i64) {
        if !self.omitted.contains(&e) {
            return;
        }
        let pos = self.entries.partition_point(|x| x.e < e);
        self.entries.insert(
            pos,
            EventStudyEntry {
                e,
                estimate: 0.0,
                se: None,
                ci_low: None,
                ci_high: None,
                sim_low: None,
                sim_high: None,
                n_cohorts: 0,
            },
        );
        let n = self.influence.first().map_or(0, |v| v.len());
        self.influence.insert(pos, vec![0.0; n]);
        self.omitted.retain(|x| *x != e);
    }

    pub fn entry(&self, e: i64) -> Option<&EventStudyEntry> {
        self.entries.iter().find(|x| x.e == e)
    }

    pub fn write_csv_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(EVENT_STUDY_HEADER)?;
        for x in &self.entries {
            w.write_record([
                x.e.to_string(),
                fmt_num(Some(x.estimate)),
                fmt_num(x.se),
                fmt_num(x.ci_low),
                fmt_num(x.ci_high),
                fmt_num(x.sim_low),
                fmt_num(x.sim_high),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<event study csv>", e))?;
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv_to(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv is utf-8"))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(file)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// Checks the interval ordering and sorting invariants.
    pub fn validate(&self) -> Result<()> {
        for pair in self.entries.windows(2) {
            if pair[0].e >= pair[1].e {
                return Err(Error::Validation("event-study entries not strictly sorted by e".into()));
            }
        }
        for x in &self.entries {
            let ok = match (x.ci_low, x.ci_high, x.sim_low, x.sim_high) {
                (Some(l), Some(h), Some(sl), Some(sh)) => {
                    let tol = 1e-12 * (1.0 + x.estimate.abs());
                    l <= x.estimate + tol && x.estimate <= h + tol && sl <= l + tol && h <= sh + tol
                }
                (None, None, None, None) => true,
                _ => false,
            };
            if !ok || !x.estimate.is_finite() {
                return Err(Error::Validation(format!("inconsistent interval at event time {}", x.e)));
            }
        }
        Ok(())
    }
}

/// Shortest round-trip decimal, `NA` when absent.
pub fn fmt_num(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x}"),
        _ => "NA".to_string(),
    }
}

fn parse_num(s: &str, column: &str, line: usize) -> Result<Option<f64>> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("na") || s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Schema(format!("column `{column}` line {line}: `{s}` is not a number")))
}

/// Reads an event-study CSV written by [`EventStudyResult::write_csv`].
/// Errors name the first unexpected or missing column.
pub fn read_event_study_csv(path: impl AsRef<Path>) -> Result<Vec<EventStudyEntry>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let header = r.headers()?.clone();
    for (k, want) in EVENT_STUDY_HEADER.iter().enumerate() {
        match header.get(k) {
            Some(h) if h == *want => {}
            Some(h) => {
                return Err(Error::Schema(format!(
                    "{}: column {} is `{h}`, expected `{want}`",
                    path.display(),
                    k + 1
                )))
            }
            None => return Err(Error::Schema(format!("{}: missing column `{want}`", path.display()))),
        }
    }
    if header.len() > EVENT_STUDY_HEADER.len() {
        return Err(Error::Schema(format!(
            "{}: unexpected column `{}`",
            path.display(),
            &header[EVENT_STUDY_HEADER.len()]
        )));
    }
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = line + 2;
        let e: i64 = rec[0]
            .trim()
            .parse()
            .map_err(|_| Error::Schema(format!("column `event_time` line {line}: `{}` is not an integer", &rec[0])))?;
        let get = |k: usize| parse_num(&rec[k], EVENT_STUDY_HEADER[k], line);
        out.push(EventStudyEntry {
            e,
            estimate: get(1)?.ok_or_else(|| Error::Schema(format!("column `estimate` line {line} is missing")))?,
            se: get(2)?,
            ci_low: get(3)?,
            ci_high: get(4)?,
            sim_low: get(5)?,
            sim_high: get(6)?,
            n_cohorts: 0,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(g: u32, t: u32, estimate: f64, influence: &[f64]) -> CellInput<'_> {
        CellInput { g, t, estimate, influence }
    }

    fn pointwise_only() -> AggregateOptions {
        AggregateOptions {
            bootstrap: None,
            ..Default::default()
        }
    }

    #[test]
    fn flat_single_cohort() {
        let psi = [0.5, -0.5, 1.0, -1.0];
        let cells: Vec<_> = (1..=6).filter(|&t| t != 2).map(|t| cell(3, t, 1.5, &psi)).collect();
        let sizes = BTreeMap::from([(3, 2)]);
        let r = aggregate("x", &cells, &sizes, 6, &pointwise_only()).unwrap();
        assert!(r.entries.iter().all(|x| x.estimate == 1.5));
        assert_eq!(r.entries.iter().map(|x| x.e).collect::<Vec<_>>(), vec![-2, 0, 1, 2, 3]);
        assert!(r.omitted.contains(&-1));
    }

    #[test]
    fn size_weighted_shares() {
        let psi = [0.0, 1.0, -1.0, 0.0];
        let cells = [cell(3, 5, 2.0, &psi), cell(4, 6, 6.0, &psi)];
        let sizes = BTreeMap::from([(3, 3), (4, 1)]);
        let r = aggregate("x", &cells, &sizes, 8, &pointwise_only()).unwrap();
        assert!((r.entry(2).unwrap().estimate - 3.0).abs() < 1e-15);
        let w = &r.weights[0].weights;
        assert_eq!(w[&3], 0.75);
        assert_eq!(w[&4], 0.25);
    }

    #[test]
    fn truncation_renormalizes() {
        // T = 6: cohort 5 has no cell at e = 2, so cohort 3 carries all weight.
        let psi = [1.0, -1.0, 0.0];
        let cells = [cell(3, 5, 4.0, &psi), cell(3, 4, 1.0, &psi), cell(5, 6, 9.0, &psi)];
        let sizes = BTreeMap::from([(3, 1), (5, 2)]);
        let r = aggregate("x", &cells, &sizes, 6, &pointwise_only()).unwrap();
        assert_eq!(r.entry(2).unwrap().estimate, 4.0);
        assert!((r.entry(1).unwrap().estimate - (1.0 / 3.0 + 2.0 * 9.0 / 3.0)).abs() < 1e-14);
    }

    #[test]
    fn reference_row() {
        let psi = [1.0, -1.0, 0.0];
        let cells = [cell(3, 1, 0.5, &psi), cell(3, 4, 2.0, &psi)];
        let sizes = BTreeMap::from([(3, 1)]);
        let opts = AggregateOptions {
            window: (-2, 1),
            ..pointwise_only()
        };
        let mut r = aggregate("x", &cells, &sizes, 6, &opts).unwrap();
        assert_eq!(r.omitted, vec![-1, 0]);
        r.insert_reference(-1);
        r.insert_reference(5);
        assert_eq!(r.omitted, vec![0]);
        let e: Vec<i64> = r.entries.iter().map(|x| x.e).collect();
        assert_eq!(e, vec![-2, -1, 1]);
        let x = r.entry(-1).unwrap();
        assert_eq!((x.estimate, x.se, x.ci_low), (0.0, None, None));
        assert_eq!(r.influence.len(), 3);
        r.validate().unwrap();
        assert!(r.to_csv().unwrap().contains("\n-1,0,NA,NA,NA,NA,NA\n"));
    }

    #[test]
    fn linear_in_cells() {
        let a = [0.3, -0.1, -0.2];
        let b = [0.2, 0.2, -0.4];
        let sizes = BTreeMap::from([(2, 2), (3, 1)]);
        let base = [cell(2, 3, 1.2, &a), cell(3, 4, -0.7, &b)];
        let sa: Vec<f64> = a.iter().map(|v| 2.5 * v).collect();
        let sb: Vec<f64> = b.iter().map(|v| 2.5 * v).collect();
        let scaled = [cell(2, 3, 3.0, &sa), cell(3, 4, -1.75, &sb)];
        let r1 = aggregate("x", &base, &sizes, 5, &pointwise_only()).unwrap();
        let r2 = aggregate("x", &scaled, &sizes, 5, &pointwise_only()).unwrap();
        let (x1, x2) = (r1.entry(1).unwrap(), r2.entry(1).unwrap());
        assert!((2.5 * x1.estimate - x2.estimate).abs() < 1e-14);
        assert!((2.5 * x1.se.unwrap() - x2.se.unwrap()).abs() < 1e-14);
    }

    #[test]
    fn mismatched_dimensions() {
        let a = [1.0, -1.0];
        let b = [1.0, 0.0, -1.0];
        let sizes = BTreeMap::from([(2, 1)]);
        let err = aggregate("x", &[cell(2, 3, 0.0, &a), cell(2, 4, 0.0, &b)], &sizes, 5, &pointwise_only());
        assert!(matches!(err, Err(Error::Dimension(_))));
    }

    #[test]
    fn simultaneous_band_contains_pointwise() {
        let psi: Vec<Vec<f64>> = (0..4)
            .map(|k| (0..50).map(|i| (((i * 7 + k * 13) % 11) as f64 - 5.0) / 3.0).collect())
            .collect();
        let cells: Vec<_> = (0..4).map(|k| cell(3, 3 + k as u32, k as f64, &psi[k])).collect();
        let sizes = BTreeMap::from([(3, 10)]);
        let opts = AggregateOptions {
            bootstrap: Some(BootstrapOptions {
                replications: 500,
                seed: 1,
                ..Default::default()
            }),
            ..Default::default()
        };
        let r = aggregate("x", &cells, &sizes, 10, &opts).unwrap();
        r.validate().unwrap();
        assert!(r.critical_value.unwrap() >= normal_quantile(0.95).unwrap());
    }

    #[test]
    fn csv_round_trip() {
        let psi = [1.0, -1.0];
        let sizes = BTreeMap::from([(2, 1)]);
        let r = aggregate("x", &[cell(2, 2, 0.25, &psi)], &sizes, 3, &pointwise_only()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("es.csv");
        r.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("event_time,estimate,se,ci_low,ci_high,sim_low,sim_high\n"));
        let back = read_event_study_csv(&p).unwrap();
        assert_eq!(back[0].estimate, 0.25);
        assert_eq!(back[0].ci_low, r.entries[0].ci_low);
    }

    #[test]
    fn schema_mismatch_names_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "event_time,estimate,stderr,ci_low,ci_high,sim_low,sim_high\n0,1,1,0,2,0,2\n").unwrap();
        let err = read_event_study_csv(&p).unwrap_err().to_string();
        assert!(err.contains("stderr"), "{err}");
    }
}
