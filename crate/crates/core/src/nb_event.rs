//! Negative-binomial two-way fixed-effects event study:
//! `log mu_it = a_i + l_t + sum_{e != -1} b_e D_it^e + log(exposure_i)`,
//! where `D_it^e` marks treated units at event time `e`. Coefficients are
//! log incidence-rate ratios with standard errors clustered by unit.

use serde::{Deserialize, Serialize};

use crate::aggregate::{normal_quantile, EventStudyEntry, EventStudyResult, DEFAULT_WINDOW};
use crate::bootstrap::BootstrapOptions;
use crate::error::{Error, Result};
use crate::glm::{irr, negbin_fit, Irr, NegBinOptions, RegressionFit};
use crate::panel::PanelDataset;
use crate::twfe::{stacked, TwfeBuilder};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbEventOptions {
    pub covariates: Vec<String>,
    /// Display window; coefficients are estimated for every observed event time.
    pub window: (i64, i64),
    pub level: f64,
    pub bootstrap: Option<BootstrapOptions>,
}

impl Default for NbEventOptions {
    fn default() -> Self {
        NbEventOptions {
            covariates: vec![],
            window: DEFAULT_WINDOW,
            level: 0.95,
            bootstrap: Some(BootstrapOptions::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrrRow {
    pub e: i64,
    pub log_irr: f64,
    pub se: f64,
    #[serde(flatten)]
    pub irr: Irr,
}

#[derive(Debug, Clone)]
pub struct NbEventFit {
    pub fit: RegressionFit,
    pub event_study: EventStudyResult,
    pub irr: Vec<IrrRow>,
}

fn event_name(e: i64) -> String {
    format!("event[{e}]")
}

pub fn nb_event_study(dataset: &PanelDataset, opts: &NbEventOptions) -> Result<NbEventFit> {
    if dataset.treated_cohorts().is_empty() {
        return Err(Error::InsufficientSupport("no treated cohort".into()));
    }
    let mut b = TwfeBuilder::new(dataset);
    for name in &opts.covariates {
        let cref = dataset.covariate_ref(name)?;
        b.covariate(name, cref);
    }
    let t_max = dataset.n_periods() as i64;
    let mut events = Vec::new();
    for e in (1 - t_max)..t_max {
        if e == -1 {
            continue;
        }
        let hit = b.indicator(event_name(e), |u, t| match dataset.cohort(u).period() {
            Some(g) => t as i64 - g as i64 == e,
            None => false,
        });
        if hit {
            events.push(e);
        }
    }
    let design = b.build();
    let (y, clusters) = stacked(dataset);
    let t_len = dataset.n_periods() as usize;
    let offset: Vec<f64> = (0..y.len())
        .map(|r| dataset.exposure(r / t_len).map(f64::ln).unwrap_or(0.0))
        .collect();
    let fit = negbin_fit(&design, &y, &offset, &clusters, NegBinOptions::default())?;
    if !fit.converged {
        log::warn!("negative binomial fit did not converge after {} rounds", fit.iterations);
    }

    let z = normal_quantile(opts.level)?;
    let mut entries = Vec::new();
    let mut influence = Vec::new();
    let mut irr_rows = Vec::new();
    let mut omitted = Vec::new();
    for e in opts.window.0..=opts.window.1 {
        if !events.contains(&e) {
            omitted.push(e);
            continue;
        }
        let name = event_name(e);
        let k = match fit.index_of(&name) {
            Ok(k) => k,
            Err(Error::Aliased(_)) => {
                omitted.push(e);
                continue;
            }
            Err(err) => return Err(err),
        };
        let est = fit.coefficients[k];
        let se = fit.covariance[(k, k)].max(0.0).sqrt();
        entries.push(EventStudyEntry::pointwise(e, est, Some(se), z, 0));
        influence.push(fit.cluster_influence(k));
        irr_rows.push(IrrRow {
            e,
            log_irr: est,
            se,
            irr: irr(&fit, &name)?,
        });
    }
    if entries.is_empty() {
        return Err(Error::InsufficientSupport("no event-time coefficient inside the window".into()));
    }
    let mut event_study = EventStudyResult {
        method: "nb".into(),
        horizon: dataset.n_periods(),
        level: opts.level,
        critical_value: None,
        entries,
        weights: vec![],
        omitted,
        influence,
    };
    if let Some(bo) = &opts.bootstrap {
        let mut bo = *bo;
        bo.level = opts.level;
        event_study.apply_bootstrap(&bo)?;
    }
    Ok(NbEventFit {
        fit,
        event_study,
        irr: irr_rows,
    })
}

/// CSV with columns `event_time,log_irr,se,irr,irr_low,irr_high`.
pub fn irr_csv(rows: &[IrrRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["event_time", "log_irr", "se", "irr", "irr_low", "irr_high"])?;
    for r in rows {
        w.write_record([
            r.e.to_string(),
            r.log_irr.to_string(),
            r.se.to_string(),
            r.irr.ratio.to_string(),
            r.irr.ci_low.to_string(),
            r.irr.ci_high.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}
