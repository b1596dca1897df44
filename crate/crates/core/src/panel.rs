//! Balanced unit-by-period panel, CSV ingestion and cohort bookkeeping.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// First-treated period of a unit, or never treated within the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cohort {
    Treated(u32),
    Never,
}

impl Cohort {
    pub fn period(self) -> Option<u32> {
        match self {
            Cohort::Treated(g) => Some(g),
            Cohort::Never => None,
        }
    }

    pub fn is_never(self) -> bool {
        matches!(self, Cohort::Never)
    }
}

impl fmt::Display for Cohort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cohort::Treated(g) => write!(f, "{g}"),
            Cohort::Never => f.write_str("never"),
        }
    }
}

/// Where a named covariate lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovariateRef {
    Static(usize),
    TimeVarying(usize),
}

/// Raw, unvalidated parts of a panel. Turned into a [`PanelDataset`] by
/// [`PanelDataset::new`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelParts {
    pub units: Vec<String>,
    pub n_periods: u32,
    /// Row-major `units x periods`.
    pub outcome: Vec<f64>,
    #[serde(default)]
    pub static_names: Vec<String>,
    /// Row-major `units x static_names`.
    #[serde(default)]
    pub static_values: Vec<f64>,
    #[serde(default)]
    pub tv_names: Vec<String>,
    /// Layout `units x periods x tv_names`.
    #[serde(default)]
    pub tv_values: Vec<f64>,
    pub cohort: Vec<Cohort>,
    #[serde(default)]
    pub exposure: Option<Vec<f64>>,
}

/// Balanced panel of outcomes `Y[unit, t]` for periods `t = 1..=T`, with
/// per-unit cohorts, optional covariates and optional exposures.
///
/// Immutable once constructed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PanelParts", into = "PanelParts")]
pub struct PanelDataset {
    parts: PanelParts,
}

impl TryFrom<PanelParts> for PanelDataset {
    type Error = Error;

    fn try_from(parts: PanelParts) -> Result<Self> {
        PanelDataset::new(parts)
    }
}

impl From<PanelDataset> for PanelParts {
    fn from(d: PanelDataset) -> Self {
        d.parts
    }
}

impl PanelDataset {
    pub fn new(parts: PanelParts) -> Result<Self> {
        let n = parts.units.len();
        let t = parts.n_periods as usize;
        if n == 0 {
            return Err(Error::Validation("panel has no units".into()));
        }
        if t == 0 {
            return Err(Error::Validation("panel has no periods".into()));
        }
        if parts.outcome.len() != n * t {
            return Err(Error::Validation(format!(
                "outcome has {} cells, expected {} units x {} periods",
                parts.outcome.len(),
                n,
                t
            )));
        }
        for (i, row) in parts.outcome.chunks(t).enumerate() {
            if let Some(p) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "missing or non-finite outcome at (unit `{}`, t={})",
                    parts.units[i],
                    p + 1
                )));
            }
        }
        let mut seen = HashMap::with_capacity(n);
        for (i, u) in parts.units.iter().enumerate() {
            if seen.insert(u.as_str(), i).is_some() {
                return Err(Error::Validation(format!("duplicate unit `{u}`")));
            }
        }
        if parts.static_values.len() != n * parts.static_names.len() {
            return Err(Error::Validation("static covariate block has wrong size".into()));
        }
        if parts.tv_values.len() != n * t * parts.tv_names.len() {
            return Err(Error::Validation("time-varying covariate block has wrong size".into()));
        }
        if parts.static_values.iter().chain(&parts.tv_values).any(|v| !v.is_finite()) {
            return Err(Error::Validation("covariates must be finite".into()));
        }
        let mut names: Vec<&String> = parts.static_names.iter().chain(&parts.tv_names).collect();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation("covariate names must be unique".into()));
        }
        if parts.cohort.len() != n {
            return Err(Error::Validation("one cohort label per unit required".into()));
        }
        for (i, c) in parts.cohort.iter().enumerate() {
            if let Cohort::Treated(g) = *c {
                if g < 2 {
                    return Err(Error::Validation(format!(
                        "unit `{}` has cohort {g}: units treated in the first period have no pre-period",
                        parts.units[i]
                    )));
                }
                if g > parts.n_periods {
                    return Err(Error::Validation(format!(
                        "unit `{}` has cohort {g} beyond the last period {}",
                        parts.units[i], parts.n_periods
                    )));
                }
            }
        }
        if let Some(exp) = &parts.exposure {
            if exp.len() != n {
                return Err(Error::Validation("one exposure per unit required".into()));
            }
            if let Some(i) = exp.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::Validation(format!(
                    "exposure for unit `{}` must be strictly positive",
                    parts.units[i]
                )));
            }
        }
        Ok(PanelDataset { parts })
    }

    pub fn parts(&self) -> &PanelParts {
        &self.parts
    }

    pub fn into_parts(self) -> PanelParts {
        self.parts
    }

    pub fn n_units(&self) -> usize {
        self.parts.units.len()
    }

    /// Number of periods `T`; periods are indexed `1..=T`.
    pub fn n_periods(&self) -> u32 {
        self.parts.n_periods
    }

    pub fn units(&self) -> &[String] {
        &self.parts.units
    }

    /// Outcome of `unit` at 1-based period `t`.
    pub fn y(&self, unit: usize, t: u32) -> f64 {
        debug_assert!(t >= 1 && t <= self.parts.n_periods);
        self.parts.outcome[unit * self.parts.n_periods as usize + (t as usize - 1)]
    }

    /// Outcome trajectory of `unit`; element 0 is period 1.
    pub fn outcome_row(&self, unit: usize) -> &[f64] {
        let t = self.parts.n_periods as usize;
        &self.parts.outcome[unit * t..(unit + 1) * t]
    }

    pub fn cohort(&self, unit: usize) -> Cohort {
        self.parts.cohort[unit]
    }

    pub fn cohorts(&self) -> &[Cohort] {
        &self.parts.cohort
    }

    pub fn exposure(&self, unit: usize) -> Option<f64> {
        self.parts.exposure.as_ref().map(|e| e[unit])
    }

    pub fn has_exposure(&self) -> bool {
        self.parts.exposure.is_some()
    }

    pub fn static_names(&self) -> &[String] {
        &self.parts.static_names
    }

    pub fn tv_names(&self) -> &[String] {
        &self.parts.tv_names
    }

    pub fn covariate_ref(&self, name: &str) -> Result<CovariateRef> {
        if let Some(k) = self.parts.static_names.iter().position(|n| n == name) {
            return Ok(CovariateRef::Static(k));
        }
        if let Some(k) = self.parts.tv_names.iter().position(|n| n == name) {
            return Ok(CovariateRef::TimeVarying(k));
        }
        Err(Error::Schema(format!("unknown covariate `{name}`")))
    }

    /// Value of a covariate for `unit` at period `t` (static covariates ignore `t`).
    pub fn covariate(&self, cov: CovariateRef, unit: usize, t: u32) -> f64 {
        match cov {
            CovariateRef::Static(k) => self.parts.static_values[unit * self.parts.static_names.len() + k],
            CovariateRef::TimeVarying(k) => {
                let kv = self.parts.tv_names.len();
                let tt = self.parts.n_periods as usize;
                self.parts.tv_values[(unit * tt + (t as usize - 1)) * kv + k]
            }
        }
    }

    /// Distinct treated cohorts, ascending.
    pub fn treated_cohorts(&self) -> Vec<u32> {
        self.cohort_sizes().into_keys().collect()
    }

    /// Number of units in each treated cohort.
    pub fn cohort_sizes(&self) -> BTreeMap<u32, usize> {
        let mut sizes = BTreeMap::new();
        for c in &self.parts.cohort {
            if let Cohort::Treated(g) = c {
                *sizes.entry(*g).or_insert(0) += 1;
            }
        }
        sizes
    }

    pub fn never_treated_units(&self) -> Vec<usize> {
        (0..self.n_units()).filter(|&i| self.parts.cohort[i].is_never()).collect()
    }

    pub fn units_in_cohort(&self, g: u32) -> Vec<usize> {
        (0..self.n_units())
            .filter(|&i| self.parts.cohort[i] == Cohort::Treated(g))
            .collect()
    }

    /// Returns a copy with the outcome matrix replaced.
    pub fn with_outcome(&self, outcome: Vec<f64>) -> Result<Self> {
        let mut parts = self.parts.clone();
        parts.outcome = outcome;
        PanelDataset::new(parts)
    }

    /// Applies `f` to every outcome cell.
    pub fn map_outcome(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        self.with_outcome(self.parts.outcome.iter().map(|&v| f(v)).collect())
    }

    /// Writes the panel in the canonical long CSV layout understood by
    /// [`PanelSchema::canonical`].
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(file)
    }

    pub fn write_csv_to<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["unit".to_string(), "time".into(), "outcome".into(), "cohort".into()];
        if self.has_exposure() {
            header.push("exposure".into());
        }
        header.extend(self.parts.static_names.iter().cloned());
        header.extend(self.parts.tv_names.iter().cloned());
        w.write_record(&header)?;
        let statics: Vec<CovariateRef> = (0..self.parts.static_names.len()).map(CovariateRef::Static).collect();
        let tvs: Vec<CovariateRef> = (0..self.parts.tv_names.len()).map(CovariateRef::TimeVarying).collect();
        for i in 0..self.n_units() {
            for t in 1..=self.n_periods() {
                let mut rec = vec![
                    self.parts.units[i].clone(),
                    t.to_string(),
                    self.y(i, t).to_string(),
                    self.cohort(i).to_string(),
                ];
                if let Some(e) = self.exposure(i) {
                    rec.push(e.to_string());
                }
                for c in statics.iter().chain(&tvs) {
                    rec.push(self.covariate(*c, i, t).to_string());
                }
                w.write_record(&rec)?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// How the time column is encoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeFormat {
    /// Consecutive integers; the smallest becomes period 1.
    #[default]
    Period,
    /// `YYYY-MM-DD` dates, floored to the Monday of their week.
    Date,
}

/// Column mapping for [`load_panel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelSchema {
    pub unit: String,
    pub time: String,
    pub outcome: String,
    #[serde(default)]
    pub cohort: Option<String>,
    #[serde(default)]
    pub treatment_date: Option<String>,
    #[serde(default)]
    pub exposure: Option<String>,
    #[serde(default)]
    pub covariates_static: Vec<String>,
    #[serde(default)]
    pub covariates_tv: Vec<String>,
    #[serde(default)]
    pub time_format: TimeFormat,
}

impl PanelSchema {
    /// Schema matching [`PanelDataset::write_csv`] output.
    pub fn canonical(dataset: &PanelDataset) -> Self {
        PanelSchema {
            unit: "unit".into(),
            time: "time".into(),
            outcome: "outcome".into(),
            cohort: Some("cohort".into()),
            treatment_date: None,
            exposure: dataset.has_exposure().then(|| "exposure".into()),
            covariates_static: dataset.static_names().to_vec(),
            covariates_tv: dataset.tv_names().to_vec(),
            time_format: TimeFormat::Period,
        }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Side information produced while loading.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestInfo {
    /// Monday of period 1 when the time column holds dates.
    pub week_origin: Option<String>,
    /// Units whose treatment falls after the window and were relabeled never-treated.
    pub treated_after_window: Vec<String>,
}

pub fn load_panel(path: impl AsRef<Path>, schema: &PanelSchema) -> Result<PanelDataset> {
    load_panel_with_info(path, schema).map(|(d, _)| d)
}

pub fn load_panel_with_info(path: impl AsRef<Path>, schema: &PanelSchema) -> Result<(PanelDataset, IngestInfo)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_panel(file, schema)
}

fn is_never_token(s: &str) -> bool {
    matches!(
        s.trim().to_ascii_lowercase().as_str(),
        "" | "never" | "na" | "nan" | "inf" | "none" | "0"
    )
}

fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map_err(|e| Error::Validation(format!("cannot parse date `{s}`: {e}")))
}

fn monday_of(d: NaiveDate) -> NaiveDate {
    d - chrono::Duration::days(d.weekday().num_days_from_monday() as i64)
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Validation(format!("cannot parse {what} value `{s}`")))
}

fn parse_integer(s: &str, what: &str) -> Result<i64> {
    let v = parse_f64(s, what)?;
    if v.fract() != 0.0 || !v.is_finite() {
        return Err(Error::Validation(format!("{what} value `{s}` is not an integer")));
    }
    Ok(v as i64)
}

/// Parses a long-format panel from any reader.
pub fn read_panel<R: std::io::Read>(reader: R, schema: &PanelSchema) -> Result<(PanelDataset, IngestInfo)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    };
    let unit_c = col(&schema.unit)?;
    let time_c = col(&schema.time)?;
    let out_c = col(&schema.outcome)?;
    let (cohort_c, date_c) = match (&schema.cohort, &schema.treatment_date) {
        (Some(c), None) => (Some(col(c)?), None),
        (None, Some(d)) => (None, Some(col(d)?)),
        (Some(_), Some(_)) => {
            return Err(Error::Schema("give either `cohort` or `treatment_date`, not both".into()))
        }
        (None, None) => return Err(Error::Schema("one of `cohort` or `treatment_date` is required".into())),
    };
    if date_c.is_some() && schema.time_format != TimeFormat::Date {
        return Err(Error::Schema("`treatment_date` requires time_format = \"date\"".into()));
    }
    let exp_c = schema.exposure.as_deref().map(col).transpose()?;
    let stat_c: Vec<usize> = schema.covariates_static.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let tv_c: Vec<usize> = schema.covariates_tv.iter().map(|c| col(c)).collect::<Result<_>>()?;

    struct Row {
        unit: usize,
        time_raw: i64,
        outcome: f64,
        cohort_raw: Option<i64>,
        exposure: Option<f64>,
        stat: Vec<f64>,
        tv: Vec<f64>,
    }

    let mut unit_ids: Vec<String> = Vec::new();
    let mut unit_index: HashMap<String, usize> = HashMap::new();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let get = |c: usize| rec.get(c).unwrap_or("");
        let uid = get(unit_c).trim().to_string();
        let next = unit_ids.len();
        let unit = *unit_index.entry(uid.clone()).or_insert_with(|| {
            unit_ids.push(uid);
            next
        });
        let time_raw = match schema.time_format {
            TimeFormat::Period => parse_integer(get(time_c), "time")?,
            TimeFormat::Date => {
                let d = monday_of(parse_date(get(time_c))?);
                d.num_days_from_ce() as i64
            }
        };
        let out_s = get(out_c);
        let outcome = if out_s.trim().is_empty() || out_s.trim().eq_ignore_ascii_case("na") {
            f64::NAN
        } else {
            parse_f64(out_s, "outcome")?
        };
        let cohort_raw = if let Some(c) = cohort_c {
            let s = get(c);
            if is_never_token(s) {
                None
            } else {
                Some(parse_integer(s, "cohort")?)
            }
        } else if let Some(c) = date_c {
            let s = get(c);
            if is_never_token(s) {
                None
            } else {
                Some(monday_of(parse_date(s)?).num_days_from_ce() as i64)
            }
        } else {
            None
        };
        let exposure = exp_c.map(|c| parse_f64(get(c), "exposure")).transpose()?;
        let stat = stat_c.iter().map(|&c| parse_f64(get(c), "covariate")).collect::<Result<_>>()?;
        let tv = tv_c.iter().map(|&c| parse_f64(get(c), "covariate")).collect::<Result<_>>()?;
        rows.push(Row {
            unit,
            time_raw,
            outcome,
            cohort_raw,
            exposure,
            stat,
            tv,
        });
    }
    if rows.is_empty() {
        return Err(Error::Validation("no data rows".into()));
    }

    // Raw time -> period index.
    let step = match schema.time_format {
        TimeFormat::Period => 1,
        TimeFormat::Date => 7,
    };
    let t_min = rows.iter().map(|r| r.time_raw).min().unwrap();
    let t_max = rows.iter().map(|r| r.time_raw).max().unwrap();
    let n_periods = ((t_max - t_min) / step + 1) as u32;
    let to_period = |raw: i64| -> i64 { (raw - t_min).div_euclid(step) + 1 };
    let fmt_time = |p: u32| -> String {
        match schema.time_format {
            TimeFormat::Period => (t_min + (p as i64 - 1)).to_string(),
            TimeFormat::Date => NaiveDate::from_num_days_from_ce_opt((t_min + (p as i64 - 1) * 7) as i32)
                .map(|d| d.to_string())
                .unwrap_or_default(),
        }
    };

    let n = unit_ids.len();
    let tt = n_periods as usize;
    let ks = stat_c.len();
    let kv = tv_c.len();
    let mut filled = vec![false; n * tt];
    let mut outcome = vec![f64::NAN; n * tt];
    let mut tv_values = vec![0.0; n * tt * kv];
    let mut static_values = vec![f64::NAN; n * ks];
    let mut cohort_raw: Vec<Option<Option<i64>>> = vec![None; n];
    let mut exposure: Vec<Option<f64>> = vec![None; n];

    for r in &rows {
        let p = to_period(r.time_raw) as usize;
        let cell = r.unit * tt + (p - 1);
        if filled[cell] {
            return Err(Error::Validation(format!(
                "duplicate row for (unit `{}`, time {})",
                unit_ids[r.unit],
                fmt_time(p as u32)
            )));
        }
        filled[cell] = true;
        outcome[cell] = r.outcome;
        tv_values[cell * kv..(cell + 1) * kv].copy_from_slice(&r.tv);
        for (k, &v) in r.stat.iter().enumerate() {
            let slot = &mut static_values[r.unit * ks + k];
            if slot.is_nan() {
                *slot = v;
            } else if *slot != v {
                return Err(Error::Validation(format!(
                    "static covariate `{}` varies within unit `{}`",
                    schema.covariates_static[k], unit_ids[r.unit]
                )));
            }
        }
        match cohort_raw[r.unit] {
            None => cohort_raw[r.unit] = Some(r.cohort_raw),
            Some(prev) if prev != r.cohort_raw => {
                return Err(Error::Validation(format!(
                    "cohort varies within unit `{}`",
                    unit_ids[r.unit]
                )))
            }
            _ => {}
        }
        if let Some(e) = r.exposure {
            match exposure[r.unit] {
                None => exposure[r.unit] = Some(e),
                Some(prev) if prev != e => {
                    return Err(Error::Validation(format!(
                        "exposure varies within unit `{}`",
                        unit_ids[r.unit]
                    )))
                }
                _ => {}
            }
        }
    }

    let missing: Vec<String> = filled
        .iter()
        .enumerate()
        .filter(|(_, f)| !**f)
        .take(20)
        .map(|(c, _)| format!("(unit `{}`, time {})", unit_ids[c / tt], fmt_time((c % tt + 1) as u32)))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Validation(format!(
            "unbalanced panel, missing cells: {}",
            missing.join(", ")
        )));
    }

    let mut info = IngestInfo::default();
    if schema.time_format == TimeFormat::Date {
        info.week_origin = Some(fmt_time(1));
    }
    let mut cohort = Vec::with_capacity(n);
    for (i, raw) in cohort_raw.into_iter().enumerate() {
        let c = match raw.flatten() {
            None => Cohort::Never,
            Some(v) => {
                let p = match schema.time_format {
                    TimeFormat::Period => v - t_min + 1,
                    TimeFormat::Date => to_period(v),
                };
                if p < 2 {
                    return Err(Error::Validation(format!(
                        "unit `{}` is treated at or before the first period (cohort index {p}); trim the sample window",
                        unit_ids[i]
                    )));
                }
                if p > n_periods as i64 {
                    info.treated_after_window.push(unit_ids[i].clone());
                    Cohort::Never
                } else {
                    Cohort::Treated(p as u32)
                }
            }
        };
        cohort.push(c);
    }
    let exposure = if exp_c.is_some() {
        Some(exposure.into_iter().map(|e| e.unwrap_or(f64::NAN)).collect())
    } else {
        None
    };

    let dataset = PanelDataset::new(PanelParts {
        units: unit_ids,
        n_periods,
        outcome,
        static_names: schema.covariates_static.clone(),
        static_values,
        tv_names: schema.covariates_tv.clone(),
        tv_values,
        cohort,
        exposure,
    })?;
    Ok((dataset, info))
}

/// Event time `k = t - g` of period `t` for a unit in cohort `g`.
pub fn event_time(t: u32, cohort: Cohort) -> Result<i64> {
    match cohort {
        Cohort::Treated(g) => Ok(t as i64 - g as i64),
        Cohort::Never => Err(Error::InvalidArgument("event time undefined for never-treated units".into())),
    }
}

/// `P(G = g | G + e <= horizon)`: cohort weights at event time `e`,
/// proportional to cohort size among cohorts still observed at `g + e`.
pub fn cohort_shares(dataset: &PanelDataset, e: i64, horizon: u32) -> Result<BTreeMap<u32, f64>> {
    let sizes = dataset.cohort_sizes();
    let eligible: Vec<u32> = sizes.keys().copied().filter(|&g| g as i64 + e <= horizon as i64).collect();
    if eligible.is_empty() {
        return Err(Error::InsufficientSupport(format!(
            "no cohort observed at event time {e} within horizon {horizon}"
        )));
    }
    shares_among(dataset, &eligible)
}

/// Size-proportional weights restricted to `cohorts`.
pub fn shares_among(dataset: &PanelDataset, cohorts: &[u32]) -> Result<BTreeMap<u32, f64>> {
    let sizes = dataset.cohort_sizes();
    let total: usize = cohorts.iter().map(|g| sizes.get(g).copied().unwrap_or(0)).sum();
    if total == 0 {
        return Err(Error::InsufficientSupport("selected cohorts contain no units".into()));
    }
    Ok(cohorts
        .iter()
        .filter_map(|g| sizes.get(g).map(|&s| (*g, s as f64 / total as f64)))
        .collect())
}
