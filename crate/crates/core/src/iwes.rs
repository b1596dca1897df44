//! Interaction-weighted event study: one least-squares regression of the
//! outcome on unit and period effects, covariates and a saturated set of
//! cohort x relative-period indicators (relative period -1 omitted), followed
//! by cohort-share aggregation over relative periods.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::aggregate::{aggregate, AggregateOptions, CellInput, EventStudyResult};
use crate::error::{Error, Result};
use crate::glm::wls_fit;
use crate::panel::PanelDataset;
use crate::twfe::{stacked, TwfeBuilder};

pub const EXCLUDED_PERIOD: i64 = -1;

/// One cohort x relative-period coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IwesCoefficient {
    pub g: u32,
    pub e: i64,
    pub estimate: f64,
    pub se: f64,
    /// Per-unit influence, scaled so that `se = sqrt(mean(psi^2) / N)`.
    #[serde(skip)]
    pub influence: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct IwesFit {
    pub coefficients: Vec<IwesCoefficient>,
    /// Cluster-robust covariance over `coefficients`, same order.
    pub covariance: DMatrix<f64>,
    /// Interaction or covariate columns dropped as collinear.
    pub aliased: Vec<String>,
    pub controls: Vec<String>,
    pub n_obs: usize,
}

impl IwesFit {
    pub fn beta(&self, g: u32, e: i64) -> Option<f64> {
        self.coefficients.iter().find(|c| c.g == g && c.e == e).map(|c| c.estimate)
    }

    /// Coefficients as (g, t) cells for aggregation.
    pub fn cells(&self) -> Vec<CellInput<'_>> {
        self.coefficients
            .iter()
            .map(|c| CellInput {
                g: c.g,
                t: (c.g as i64 + c.e) as u32,
                estimate: c.estimate,
                influence: &c.influence,
            })
            .collect()
    }
}

fn interaction_name(g: u32, e: i64) -> String {
    format!("cohort[{g}]:e[{e}]")
}

/// Fits the saturated regression with never-treated units as the control
/// cohort; standard errors are clustered by unit.
pub fn iwes_fit(dataset: &PanelDataset, covariates: &[String]) -> Result<IwesFit> {
    if dataset.never_treated_units().is_empty() {
        return Err(Error::InsufficientSupport(
            "interaction-weighted event study needs never-treated units as the control cohort".into(),
        ));
    }
    let cohorts = dataset.treated_cohorts();
    if cohorts.is_empty() {
        return Err(Error::InsufficientSupport("no treated cohort".into()));
    }
    let mut b = TwfeBuilder::new(dataset);
    for name in covariates {
        let cref = dataset.covariate_ref(name)?;
        b.covariate(name, cref);
    }
    let mut slots = Vec::new();
    for &g in &cohorts {
        for t in 1..=dataset.n_periods() {
            let e = t as i64 - g as i64;
            if e == EXCLUDED_PERIOD {
                continue;
            }
            let member = |u: usize| dataset.cohort(u).period() == Some(g);
            if b.indicator(interaction_name(g, e), |u, s| s == t && member(u)) {
                slots.push((g, e));
            }
        }
    }
    let design = b.build();
    let (y, clusters) = stacked(dataset);
    let fit = wls_fit(&design, &y, &vec![1.0; y.len()], &clusters)?;

    let mut coefficients = Vec::with_capacity(slots.len());
    let mut idx = Vec::with_capacity(slots.len());
    for (g, e) in slots {
        match fit.index_of(&interaction_name(g, e)) {
            Ok(k) => {
                let influence = fit.cluster_influence(k);
                coefficients.push(IwesCoefficient {
                    g,
                    e,
                    estimate: fit.coefficients[k],
                    se: fit.covariance[(k, k)].max(0.0).sqrt(),
                    influence,
                });
                idx.push(k);
            }
            Err(Error::Aliased(_)) => {}
            Err(e) => return Err(e),
        }
    }
    let covariance = DMatrix::from_fn(idx.len(), idx.len(), |r, c| fit.covariance[(idx[r], idx[c])]);
    Ok(IwesFit {
        coefficients,
        covariance,
        aliased: fit.aliased.clone(),
        controls: covariates.to_vec(),
        n_obs: fit.n_obs,
    })
}

/// Aggregates the coefficients into `theta(e)` with cohort shares from the
/// panel; shares are treated as known.
pub fn iwes_aggregate(fit: &IwesFit, dataset: &PanelDataset, opts: &AggregateOptions) -> Result<EventStudyResult> {
    let sizes: BTreeMap<u32, usize> = dataset.cohort_sizes();
    aggregate("iwes", &fit.cells(), &sizes, dataset.n_periods(), opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drdid::{group_time_att, DrDidOptions};
    use crate::panel::{Cohort, PanelParts};

    fn panel(y: Vec<Vec<f64>>, cohort: Vec<Cohort>) -> PanelDataset {
        PanelDataset::new(PanelParts {
            units: (0..y.len()).map(|i| format!("u{i}")).collect(),
            n_periods: y[0].len() as u32,
            outcome: y.concat(),
            static_names: vec![],
            static_values: vec![],
            tv_names: vec![],
            tv_values: vec![],
            cohort,
            exposure: None,
        })
        .unwrap()
    }

    fn toy() -> PanelDataset {
        use Cohort::*;
        let y: Vec<Vec<f64>> = (0..6)
            .map(|i| (0..6).map(|t| ((i * 17 + t * 5 + i * t) % 13) as f64 / 2.0).collect())
            .collect();
        panel(y, vec![Treated(3), Treated(3), Treated(5), Never, Never, Never])
    }

    #[test]
    fn cell_means_oracle() {
        let d = toy();
        let fit = iwes_fit(&d, &[]).unwrap();
        let mean_change = |units: &[usize], from: u32, to: u32| {
            units.iter().map(|&u| d.y(u, to) - d.y(u, from)).sum::<f64>() / units.len() as f64
        };
        let never = d.never_treated_units();
        for c in &fit.coefficients {
            let members = d.units_in_cohort(c.g);
            let to = (c.g as i64 + c.e) as u32;
            let oracle = mean_change(&members, c.g - 1, to) - mean_change(&never, c.g - 1, to);
            assert!((c.estimate - oracle).abs() < 1e-10, "g={} e={}", c.g, c.e);
        }
        assert_eq!(fit.coefficients.len(), 2 * 5);
        assert!(fit.coefficients.iter().all(|c| c.e != -1));
    }

    #[test]
    fn translation_invariant() {
        let d = toy();
        let shifted = d.map_outcome(|v| v + 100.0).unwrap();
        let a = iwes_fit(&d, &[]).unwrap();
        let b = iwes_fit(&shifted, &[]).unwrap();
        for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
            assert!((x.estimate - y.estimate).abs() < 1e-8);
        }
    }

    #[test]
    fn single_cohort_matches_two_by_two() {
        use Cohort::*;
        let y: Vec<Vec<f64>> = (0..5)
            .map(|i| (0..5).map(|t| ((i * 7 + t * 3 + i * t * t) % 11) as f64).collect())
            .collect();
        let d = panel(y, vec![Treated(3), Treated(3), Never, Never, Never]);
        let fit = iwes_fit(&d, &[]).unwrap();
        for e in 0..=2 {
            let dr = group_time_att(&d, 3, (3 + e) as u32, &DrDidOptions::default()).unwrap();
            assert!((fit.beta(3, e).unwrap() - dr.estimate).abs() < 1e-8);
        }
    }

    #[test]
    fn aggregation_weights_and_variance() {
        let d = toy();
        let fit = iwes_fit(&d, &[]).unwrap();
        let opts = AggregateOptions {
            bootstrap: None,
            ..Default::default()
        };
        let es = iwes_aggregate(&fit, &d, &opts).unwrap();
        // e = 0: cohorts 3 (2 units) and 5 (1 unit).
        let k3 = fit.coefficients.iter().position(|c| c.g == 3 && c.e == 0).unwrap();
        let k5 = fit.coefficients.iter().position(|c| c.g == 5 && c.e == 0).unwrap();
        let w = [2.0 / 3.0, 1.0 / 3.0];
        let est = w[0] * fit.coefficients[k3].estimate + w[1] * fit.coefficients[k5].estimate;
        let v = &fit.covariance;
        let var = w[0] * w[0] * v[(k3, k3)] + 2.0 * w[0] * w[1] * v[(k3, k5)] + w[1] * w[1] * v[(k5, k5)];
        let entry = es.entry(0).unwrap();
        assert!((entry.estimate - est).abs() < 1e-12);
        assert!((entry.se.unwrap() - var.sqrt()).abs() < 1e-10);
        // e = 2 only cohort 3 is observed (5 + 2 > 6).
        let k = fit.coefficients.iter().position(|c| c.g == 3 && c.e == 2).unwrap();
        assert_eq!(es.entry(2).unwrap().estimate, fit.coefficients[k].estimate);
    }

    #[test]
    fn needs_never_treated() {
        use Cohort::*;
        let d = panel(vec![vec![0.0, 1.0, 2.0], vec![1.0, 1.0, 3.0]], vec![Treated(2), Treated(3)]);
        assert!(matches!(iwes_fit(&d, &[]), Err(Error::InsufficientSupport(_))));
    }
}
