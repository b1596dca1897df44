//! One entry point per estimator producing the common event-study result
//! plus method-specific diagnostics and tables.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::aggregate::{aggregate, AggregateOptions, CellInput, EventStudyResult, DEFAULT_WINDOW};
use crate::ascm::{fit_partially_pooled, AscmOptions};
use crate::bootstrap::BootstrapOptions;
use crate::drdid::{att_surface, BasePeriod, ControlGroup, DrDidOptions, DrMethod};
use crate::error::{Error, Result};
use crate::iwes::{iwes_aggregate, iwes_fit};
use crate::nb_event::{irr_csv, nb_event_study, NbEventOptions};
use crate::panel::PanelDataset;
use crate::par::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Nb,
    Drdid,
    Iwes,
    Ascm,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Nb, Method::Drdid, Method::Iwes, Method::Ascm];

    pub fn name(self) -> &'static str {
        match self {
            Method::Nb => "nb",
            Method::Drdid => "drdid",
            Method::Iwes => "iwes",
            Method::Ascm => "ascm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}` (expected nb, drdid, iwes or ascm)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimateOptions {
    pub control_group: ControlGroup,
    pub covariates: Vec<String>,
    pub anticipation: u32,
    pub base_period: BasePeriod,
    pub dr_method: DrMethod,
    pub window: (i64, i64),
    pub level: f64,
    /// Multiplier-bootstrap replications; 0 disables the simultaneous band.
    pub bootstrap_b: usize,
    pub seed: u64,
    pub lambda: f64,
    pub nu: f64,
    pub demean: bool,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            control_group: ControlGroup::NeverTreated,
            covariates: vec![],
            anticipation: 0,
            base_period: BasePeriod::Varying,
            dr_method: DrMethod::Dr,
            window: DEFAULT_WINDOW,
            level: 0.95,
            bootstrap_b: 999,
            seed: 0,
            lambda: 0.0,
            nu: 0.5,
            demean: true,
            execution: Execution::Parallel,
        }
    }
}

impl EstimateOptions {
    fn bootstrap(&self) -> Option<BootstrapOptions> {
        (self.bootstrap_b > 0).then_some(BootstrapOptions {
            replications: self.bootstrap_b,
            level: self.level,
            seed: self.seed,
            execution: self.execution,
        })
    }

    fn aggregate_options(&self) -> AggregateOptions {
        AggregateOptions {
            window: self.window,
            level: self.level,
            bootstrap: self.bootstrap(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EstimateOutput {
    pub event_study: EventStudyResult,
    pub diagnostics: serde_json::Value,
    /// Extra CSV tables as `(file name, contents)`.
    pub tables: Vec<(String, String)>,
}

pub fn estimate(dataset: &PanelDataset, method: Method, opts: &EstimateOptions) -> Result<EstimateOutput> {
    if opts.window.0 > opts.window.1 {
        return Err(Error::InvalidArgument(format!("empty event window {:?}", opts.window)));
    }
    match method {
        Method::Drdid => {
            let dr = DrDidOptions {
                control_group: opts.control_group,
                covariates: opts.covariates.clone(),
                method: opts.dr_method,
                anticipation: opts.anticipation,
                base_period: opts.base_period,
            };
            let surface = att_surface(dataset, &dr, opts.execution);
            if surface.cells.is_empty() {
                let first = surface.failures.first().map(|f| format!("(g={}, t={}): {}", f.g, f.t, f.error));
                return Err(Error::InsufficientSupport(format!(
                    "no group-time cell could be estimated; first failure {}",
                    first.unwrap_or_else(|| "none".into())
                )));
            }
            let cells: Vec<CellInput<'_>> = surface.cells.iter().map(CellInput::from).collect();
            let mut es = aggregate("drdid", &cells, &dataset.cohort_sizes(), dataset.n_periods(), &opts.aggregate_options())?;
            es.insert_reference(-1 - opts.anticipation as i64);
            let diagnostics = json!({
                "method": "drdid",
                "n_units": dataset.n_units(),
                "n_periods": dataset.n_periods(),
                "cohort_sizes": dataset.cohort_sizes(),
                "n_cells": surface.cells.len(),
                "failed_cells": surface.failures,
                "reference_event_time": -1 - opts.anticipation as i64,
                "omitted_event_times": es.omitted,
                "weights": es.weights,
                "critical_value": es.critical_value,
                "options": dr,
            });
            Ok(EstimateOutput {
                tables: vec![("att_gt.csv".into(), surface.to_csv()?)],
                event_study: es,
                diagnostics,
            })
        }
        Method::Iwes => {
            let fit = iwes_fit(dataset, &opts.covariates)?;
            let mut es = iwes_aggregate(&fit, dataset, &opts.aggregate_options())?;
            es.insert_reference(crate::iwes::EXCLUDED_PERIOD);
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["g", "e", "estimate", "se"])?;
            for c in &fit.coefficients {
                w.write_record([c.g.to_string(), c.e.to_string(), c.estimate.to_string(), c.se.to_string()])?;
            }
            let table = String::from_utf8(w.into_inner().map_err(|e| Error::Numerical(e.to_string()))?)
                .expect("csv is utf-8");
            let diagnostics = json!({
                "method": "iwes",
                "n_units": dataset.n_units(),
                "n_periods": dataset.n_periods(),
                "n_obs": fit.n_obs,
                "n_coefficients": fit.coefficients.len(),
                "aliased": fit.aliased,
                "controls": fit.controls,
                "reference_event_time": crate::iwes::EXCLUDED_PERIOD,
                "omitted_event_times": es.omitted,
                "weights": es.weights,
                "critical_value": es.critical_value,
            });
            Ok(EstimateOutput {
                event_study: es,
                diagnostics,
                tables: vec![("iwes_coefficients.csv".into(), table)],
            })
        }
        Method::Nb => {
            let mut nb = nb_event_study(
                dataset,
                &NbEventOptions {
                    covariates: opts.covariates.clone(),
                    window: opts.window,
                    level: opts.level,
                    bootstrap: opts.bootstrap(),
                },
            )?;
            nb.event_study.insert_reference(-1);
            let diagnostics = json!({
                "method": "nb",
                "n_units": dataset.n_units(),
                "n_periods": dataset.n_periods(),
                "n_obs": nb.fit.n_obs,
                "dispersion": nb.fit.dispersion,
                "converged": nb.fit.converged,
                "iterations": nb.fit.iterations,
                "aliased": nb.fit.aliased,
                "exposure_offset": dataset.has_exposure(),
                "reference_event_time": -1,
                "omitted_event_times": nb.event_study.omitted,
                "critical_value": nb.event_study.critical_value,
            });
            Ok(EstimateOutput {
                tables: vec![("irr.csv".into(), irr_csv(&nb.irr)?)],
                event_study: nb.event_study,
                diagnostics,
            })
        }
        Method::Ascm => {
            let ao = AscmOptions {
                lambda: opts.lambda,
                nu: opts.nu,
                demean: opts.demean,
                window: opts.window,
                level: opts.level,
                execution: opts.execution,
                ..Default::default()
            };
            let fit = fit_partially_pooled(dataset, &ao)?;
            let es = fit.event_study(dataset, opts.window, opts.level)?;
            let mut diagnostics = serde_json::to_value(&fit)?;
            if let serde_json::Value::Object(m) = &mut diagnostics {
                m.insert("method".into(), json!("ascm"));
                m.insert("n_units".into(), json!(dataset.n_units()));
                m.insert("n_periods".into(), json!(dataset.n_periods()));
                m.insert("omitted_event_times".into(), json!(es.omitted));
            }
            Ok(EstimateOutput {
                tables: vec![("ascm_table.csv".into(), fit.table_csv(opts.level)?)],
                event_study: es,
                diagnostics,
            })
        }
    }
}
