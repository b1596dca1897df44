use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use staggered::aggregate::{read_event_study_csv, EventStudyResult};
use staggered::benchmark::{run_benchmark, BenchmarkOptions};
use staggered::drdid::{BasePeriod, ControlGroup, DrMethod};
use staggered::panel::{read_panel, IngestInfo};
use staggered::pipeline::{self, EstimateOptions, Method};
use staggered::preprocess::{asinh_panel, repair_panel, CleaningReport};
use staggered::sim::{generate, SimSpec};
use staggered::{PanelDataset, PanelSchema};

use crate::args::{
    BasePeriodArg, BenchmarkArgs, ControlGroupArg, DrMethodArg, EstimateArgs, EstimatorFlags, IngestArgs, SimulateArgs,
};
use crate::output::{read_input, Emitter, InputRecord};
use crate::Failure;

/// Contents of a `--config` file. Every field is optional; flags win.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<Method>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schema: Option<PanelSchema>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repair: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub asinh: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateOptions>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimSpec>,
}

pub fn load_config(path: Option<&Path>) -> Result<(RunConfig, Vec<InputRecord>)> {
    let Some(path) = path else {
        return Ok((RunConfig::default(), vec![]));
    };
    let (bytes, record) = read_input(path)?;
    let cfg = serde_json::from_slice(&bytes)
        .map_err(staggered::Error::from)
        .with_context(|| format!("parsing config `{}`", path.display()))?;
    Ok((cfg, vec![record]))
}

fn parse_method(name: &str) -> Result<Method> {
    Method::from_str(name).map_err(|e| Failure::usage(e.to_string()).into())
}

fn parse_window(s: &str) -> Result<(i64, i64)> {
    let bad = || Failure::usage(format!("--window expects `MIN,MAX`, got `{s}`"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    let lo = a.trim().parse().map_err(|_| bad())?;
    let hi = b.trim().parse().map_err(|_| bad())?;
    Ok((lo, hi))
}

/// Config-file options overridden by command-line flags.
fn resolve_options(cfg: &RunConfig, flags: &EstimatorFlags) -> Result<EstimateOptions> {
    let mut o = cfg.estimate.clone().unwrap_or_default();
    if let Some(s) = flags.seed.or(cfg.seed) {
        o.seed = s;
    }
    if let Some(v) = flags.level {
        o.level = v;
    }
    if let Some(v) = flags.control_group {
        o.control_group = match v {
            ControlGroupArg::Never => ControlGroup::NeverTreated,
            ControlGroupArg::Notyet => ControlGroup::NotYetTreated,
        };
    }
    if let Some(v) = &flags.covariates {
        o.covariates = v.iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    }
    if let Some(v) = flags.anticipation {
        o.anticipation = v;
    }
    if let Some(v) = flags.base_period {
        o.base_period = match v {
            BasePeriodArg::Varying => BasePeriod::Varying,
            BasePeriodArg::Universal => BasePeriod::Universal,
        };
    }
    if let Some(v) = flags.dr_method {
        o.dr_method = match v {
            DrMethodArg::Dr => DrMethod::Dr,
            DrMethodArg::Or => DrMethod::Or,
            DrMethodArg::Ipw => DrMethod::Ipw,
        };
    }
    if let Some(w) = &flags.window {
        o.window = parse_window(w)?;
    }
    if let Some(v) = flags.bootstrap_b {
        o.bootstrap_b = v;
    }
    if let Some(v) = flags.lambda {
        o.lambda = v;
    }
    if let Some(v) = flags.nu {
        o.nu = v;
    }
    if flags.no_demean {
        o.demean = false;
    }
    if !(o.level > 0.0 && o.level < 1.0) {
        return Err(Failure::usage(format!("--level must lie in (0, 1), got {}", o.level)).into());
    }
    if !(0.0..=1.0).contains(&o.nu) {
        return Err(Failure::usage(format!("--nu must lie in [0, 1], got {}", o.nu)).into());
    }
    if !(o.lambda >= 0.0) {
        return Err(Failure::usage(format!("--lambda must be non-negative, got {}", o.lambda)).into());
    }
    Ok(o)
}

fn ensure_distinct(output: &Path, inputs: &[&Path]) -> Result<()> {
    for i in inputs {
        if *i == output {
            return Err(Failure::usage(format!("output `{}` is also an input", output.display())).into());
        }
    }
    Ok(())
}

/// Schema for `path`: explicit file, then inline config, then a
/// `schema.json` beside the input, then the canonical column names.
fn resolve_schema(
    explicit: Option<&Path>,
    cfg: &RunConfig,
    input: &Path,
    header_source: &[u8],
    records: &mut Vec<InputRecord>,
) -> Result<PanelSchema> {
    let from_file = |p: &Path, records: &mut Vec<InputRecord>| -> Result<PanelSchema> {
        let (bytes, rec) = read_input(p)?;
        records.push(rec);
        serde_json::from_slice(&bytes)
            .map_err(staggered::Error::from)
            .with_context(|| format!("parsing schema `{}`", p.display()))
    };
    if let Some(p) = explicit {
        return from_file(p, records);
    }
    if let Some(s) = &cfg.schema {
        return Ok(s.clone());
    }
    let sibling = input.parent().map(|d| d.join("schema.json"));
    if let Some(s) = sibling.filter(|s| s.is_file()) {
        return from_file(&s, records);
    }
    canonical_from_header(header_source)
}

fn canonical_from_header(bytes: &[u8]) -> Result<PanelSchema> {
    let mut r = csv::Reader::from_reader(bytes);
    let header: Vec<String> = r.headers().map_err(staggered::Error::from)?.iter().map(String::from).collect();
    for need in ["unit", "time", "outcome"] {
        if !header.iter().any(|h| h == need) {
            return Err(staggered::Error::Schema(format!(
                "no schema given and column `{need}` is missing from the input"
            ))
            .into());
        }
    }
    let known = ["unit", "time", "outcome", "cohort", "exposure"];
    Ok(PanelSchema {
        unit: "unit".into(),
        time: "time".into(),
        outcome: "outcome".into(),
        cohort: header.iter().any(|h| h == "cohort").then(|| "cohort".into()),
        treatment_date: None,
        exposure: header.iter().any(|h| h == "exposure").then(|| "exposure".into()),
        covariates_static: vec![],
        covariates_tv: header.iter().filter(|h| !known.contains(&h.as_str())).cloned().collect(),
        time_format: Default::default(),
    })
}

fn panel_bytes(ds: &PanelDataset) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    ds.write_csv_to(&mut buf)?;
    // Self-check: the emitted panel must load back to the same data.
    let (back, _) = read_panel(buf.as_slice(), &PanelSchema::canonical(ds))?;
    if &back != ds {
        bail!("emitted panel does not round-trip");
    }
    Ok(buf)
}

fn emit_panel(out: &mut Emitter, ds: &PanelDataset) -> Result<()> {
    out.write("panel.csv", &panel_bytes(ds)?)?;
    out.write_json("schema.json", &PanelSchema::canonical(ds))
}

pub fn ingest(a: &IngestArgs) -> Result<()> {
    let (cfg, mut inputs) = load_config(a.common.config.as_deref())?;
    ensure_distinct(&a.common.output, &[&a.input])?;
    let (bytes, rec) = read_input(&a.input)?;
    inputs.push(rec);
    let schema = resolve_schema(a.schema.as_deref(), &cfg, &a.input, &bytes, &mut inputs)?;
    let (mut ds, info): (PanelDataset, IngestInfo) =
        read_panel(bytes.as_slice(), &schema).with_context(|| format!("loading `{}`", a.input.display()))?;
    let repair = a.repair || cfg.repair.unwrap_or(false);
    let asinh = a.asinh || cfg.asinh.unwrap_or(false);
    let mut report = CleaningReport::default();
    if repair {
        let (fixed, r) = repair_panel(&ds)?;
        ds = fixed;
        report = r;
    }
    report.week_origin = info.week_origin.clone();
    if asinh {
        ds = asinh_panel(&ds)?;
    }
    let mut out = Emitter::new(&a.common.output)?;
    emit_panel(&mut out, &ds)?;
    out.write_json(
        "cleaning_report.json",
        &json!({
            "n_units": ds.n_units(),
            "n_periods": ds.n_periods(),
            "repair": report,
            "asinh": asinh,
            "treated_after_window": info.treated_after_window,
        }),
    )?;
    let echo = RunConfig {
        schema: Some(schema),
        repair: Some(repair),
        asinh: Some(asinh),
        input: Some(a.input.clone()),
        ..Default::default()
    };
    out.finish("ingest", None, &echo, &inputs)
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let (cfg, inputs) = load_config(a.common.config.as_deref())?;
    let mut spec = cfg.simulation.clone().unwrap_or_default();
    if let Some(s) = a.seed.or(cfg.seed) {
        spec.seed = s;
    }
    let (ds, truth) = generate(&spec)?;
    let mut out = Emitter::new(&a.common.output)?;
    emit_panel(&mut out, &ds)?;
    out.write_json("truth.json", &json!({ "att": truth.att, "theta_es": truth.theta_es }))?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["unit", "time", "y_untreated", "y_treated"])?;
    let t_max = ds.n_periods() as usize;
    for (i, unit) in ds.units().iter().enumerate() {
        for t in 0..t_max {
            let k = i * t_max + t;
            w.write_record([
                unit.clone(),
                (t + 1).to_string(),
                truth.y_untreated[k].to_string(),
                truth.y_treated[k].to_string(),
            ])?;
        }
    }
    out.write("potential_outcomes.csv", &w.into_inner()?)?;
    let echo = RunConfig {
        seed: Some(spec.seed),
        simulation: Some(spec.clone()),
        ..Default::default()
    };
    out.finish("simulate", Some(spec.seed), &echo, &inputs)
}

/// Writes the event-study CSV and JSON, then re-reads the CSV as a check.
pub fn emit_event_study(out: &mut Emitter, es: &EventStudyResult) -> Result<()> {
    es.validate()?;
    let csv = es.to_csv()?;
    out.write("event_study.csv", csv.as_bytes())?;
    let back = read_event_study_csv(out.path("event_study.csv"))?;
    if back.len() != es.entries.len() || back.iter().zip(&es.entries).any(|(a, b)| a.e != b.e) {
        bail!("emitted event-study file does not round-trip");
    }
    out.write_json("event_study.json", es)
}

pub fn estimate(a: &EstimateArgs) -> Result<()> {
    let (cfg, mut inputs) = load_config(a.common.config.as_deref())?;
    let method = match (&a.method, cfg.method) {
        (Some(m), _) => parse_method(m)?,
        (None, Some(m)) => m,
        (None, None) => return Err(Failure::usage("estimate needs --method (nb, drdid, iwes or ascm)").into()),
    };
    let input = a
        .input
        .clone()
        .or_else(|| cfg.input.clone())
        .ok_or_else(|| Failure::usage("estimate needs --input"))?;
    ensure_distinct(&a.common.output, &[&input])?;
    let opts = resolve_options(&cfg, &a.flags)?;
    let (bytes, rec) = read_input(&input)?;
    inputs.push(rec);
    let schema = resolve_schema(a.schema.as_deref(), &cfg, &input, &bytes, &mut inputs)?;
    let (ds, _) = read_panel(bytes.as_slice(), &schema).with_context(|| format!("loading `{}`", input.display()))?;
    let result = pipeline::estimate(&ds, method, &opts).with_context(|| format!("estimating with {method}"))?;

    let mut out = Emitter::new(&a.common.output)?;
    emit_event_study(&mut out, &result.event_study)?;
    out.write_json("diagnostics.json", &result.diagnostics)?;
    for (name, table) in &result.tables {
        out.write(name, table.as_bytes())?;
    }
    let echo = RunConfig {
        method: Some(method),
        input: Some(input),
        schema: Some(schema),
        seed: Some(opts.seed),
        estimate: Some(opts.clone()),
        ..Default::default()
    };
    out.finish("estimate", Some(opts.seed), &echo, &inputs)
}

pub fn benchmark(a: &BenchmarkArgs) -> Result<()> {
    let (cfg, inputs) = load_config(a.common.config.as_deref())?;
    let methods = match &a.methods {
        Some(names) => names.iter().map(|n| parse_method(n)).collect::<Result<Vec<_>>>()?,
        None => cfg.methods.clone().unwrap_or_else(|| vec![Method::Drdid, Method::Iwes, Method::Ascm]),
    };
    let reps = a.reps.or(cfg.reps).unwrap_or(200);
    let seed = a.flags.seed.or(cfg.seed).unwrap_or(0);
    let estimate = resolve_options(&cfg, &a.flags)?;
    let spec = cfg.simulation.clone().unwrap_or_default();
    let opts = BenchmarkOptions {
        methods: methods.clone(),
        reps,
        seed,
        estimate: estimate.clone(),
        execution: Default::default(),
    };
    let report = run_benchmark(&spec, &opts)?;
    let mut out = Emitter::new(&a.common.output)?;
    out.write("benchmark.csv", report.to_csv()?.as_bytes())?;
    out.write_json("benchmark.json", &report)?;
    let echo = RunConfig {
        methods: Some(methods),
        reps: Some(reps),
        seed: Some(seed),
        estimate: Some(estimate),
        simulation: Some(spec),
        ..Default::default()
    };
    out.finish("benchmark", Some(seed), &echo, &inputs)
}
