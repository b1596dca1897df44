//! Group-time average treatment effects ATT(g,t) from the doubly-robust
//! difference-in-differences estimand, plus outcome-regression-only and
//! IPW-only variants.
//!
//! For a cell `(g, t)` with base period `b`, the sample estimand is
//!
//! ```text
//! ATT(g,t) = mean_T[dY - m(X)] - sum_C w_i (dY_i - m(X_i)) / sum_C w_i,
//! w_i = p(X_i) / (1 - p(X_i)),   dY = Y_t - Y_b,
//! ```
//!
//! where `p` is a logit propensity for membership in cohort `g` versus the
//! control pool and `m` a least-squares regression of `dY` on covariates
//! among controls. Each cell also carries its influence function, including
//! the estimation effect of both nuisance models, so that cells can be
//! aggregated and bootstrapped jointly.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{logit_fit, wls_fit, Design, LogitOptions};
use crate::panel::{Cohort, CovariateRef, PanelDataset};
use crate::par::{self, Execution};

pub const PROPENSITY_BOUNDS: (f64, f64) = (0.001, 0.999);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlGroup {
    #[default]
    NeverTreated,
    NotYetTreated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DrMethod {
    #[default]
    Dr,
    Or,
    Ipw,
}

/// Base-period convention for cells before treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasePeriod {
    /// Pre-treatment cells compare `t` with `t - 1` (one-period placebos).
    #[default]
    Varying,
    /// Every cell compares with `g - delta - 1`.
    Universal,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DrDidOptions {
    pub control_group: ControlGroup,
    pub covariates: Vec<String>,
    pub method: DrMethod,
    /// Anticipation periods `delta`.
    pub anticipation: u32,
    pub base_period: BasePeriod,
}

/// One ATT(g,t) estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTimeATT {
    pub g: u32,
    pub t: u32,
    pub base: u32,
    pub estimate: f64,
    /// Per-unit influence values over the full panel (zero outside the cell),
    /// scaled so that `se = sqrt(mean(influence^2) / N)`.
    pub influence: Vec<f64>,
    pub se: f64,
    pub n_treated: usize,
    pub n_control: usize,
    pub control_group: ControlGroup,
    pub method: DrMethod,
    pub delta: u32,
}

impl GroupTimeATT {
    pub fn event_time(&self) -> i64 {
        self.t as i64 - self.g as i64
    }
}

/// Base period of cell `(g, t)` or an error when the cell is not admissible.
pub fn base_period(g: u32, t: u32, delta: u32, convention: BasePeriod) -> Result<u32> {
    let reference = g as i64 - delta as i64 - 1;
    if reference < 1 {
        return Err(Error::NoReferencePeriod { g, delta });
    }
    let reference = reference as u32;
    if t == reference {
        return Err(Error::InvalidArgument(format!(
            "t = {t} is the reference period of cohort {g}"
        )));
    }
    if t > reference || convention == BasePeriod::Universal {
        return Ok(reference);
    }
    if t < 2 {
        return Err(Error::InvalidArgument(format!("no period before t = {t}")));
    }
    Ok(t - 1)
}

/// Units serving as controls for cell `(g, t)`.
pub fn control_pool(dataset: &PanelDataset, g: u32, t: u32, delta: u32, group: ControlGroup) -> Vec<usize> {
    let cutoff = t.max(g) + delta;
    (0..dataset.n_units())
        .filter(|&i| match dataset.cohort(i) {
            Cohort::Never => true,
            Cohort::Treated(h) => group == ControlGroup::NotYetTreated && h > cutoff && h != g,
        })
        .collect()
}

fn covariate_design(
    dataset: &PanelDataset,
    units: &[usize],
    covs: &[CovariateRef],
    names: &[String],
    at: u32,
) -> Result<Design> {
    let n = units.len();
    let mut x = DMatrix::from_element(n, covs.len() + 1, 1.0);
    for (r, &i) in units.iter().enumerate() {
        for (k, c) in covs.iter().enumerate() {
            x[(r, k + 1)] = dataset.covariate(*c, i, at);
        }
    }
    let mut all = vec!["(Intercept)".to_string()];
    all.extend(names.iter().cloned());
    Design::new(all, x)
}

/// Estimates one ATT(g,t).
pub fn group_time_att(dataset: &PanelDataset, g: u32, t: u32, opts: &DrDidOptions) -> Result<GroupTimeATT> {
    let delta = opts.anticipation;
    if t < 1 || t > dataset.n_periods() {
        return Err(Error::InvalidArgument(format!("period {t} outside 1..={}", dataset.n_periods())));
    }
    let base = base_period(g, t, delta, opts.base_period)?;
    let reference = g - delta - 1;

    let treated = dataset.units_in_cohort(g);
    if treated.is_empty() {
        return Err(Error::InvalidArgument(format!("cohort {g} has no units")));
    }
    let controls = control_pool(dataset, g, t, delta, opts.control_group);
    if controls.is_empty() {
        return Err(Error::EmptyControlPool { g, t });
    }
    let covs: Vec<CovariateRef> = opts
        .covariates
        .iter()
        .map(|c| dataset.covariate_ref(c))
        .collect::<Result<_>>()?;

    let units: Vec<usize> = treated.iter().chain(&controls).copied().collect();
    let n = units.len();
    let n1 = treated.len();
    let d: Vec<f64> = (0..n).map(|r| if r < n1 { 1.0 } else { 0.0 }).collect();
    let dy: Vec<f64> = units.iter().map(|&i| dataset.y(i, t) - dataset.y(i, base)).collect();
    // Time-varying covariates are frozen at the reference period.
    let design = covariate_design(dataset, &units, &covs, &opts.covariates, reference)?;
    let nf = n as f64;

    // Propensity model.
    let use_ps_covariates = opts.method != DrMethod::Or && !covs.is_empty();
    let ps_design = if use_ps_covariates {
        design.clone()
    } else {
        Design::intercept(n)
    };
    let cluster_ids: Vec<usize> = (0..n).collect();
    let ps_fit = logit_fit(&ps_design, &d, &cluster_ids, LogitOptions::default())?;
    let ps = ps_fit.fitted.clone();
    if let Some(&bad) = ps
        .iter()
        .find(|&&p| !(PROPENSITY_BOUNDS.0..=PROPENSITY_BOUNDS.1).contains(&p))
    {
        return Err(Error::Overlap { value: bad });
    }
    let xps = ps_design.x.select_columns(&ps_fit.kept);

    // Outcome regression among controls.
    let (m_hat, or_parts) = if opts.method == DrMethod::Ipw {
        (vec![0.0; n], None)
    } else {
        let ctrl_rows: Vec<usize> = (n1..n).collect();
        let xc = design.x.select_rows(&ctrl_rows);
        let dc = Design::new(design.names.clone(), xc)?;
        let yc: Vec<f64> = ctrl_rows.iter().map(|&r| dy[r]).collect();
        let fit = wls_fit(&dc, &yc, &vec![1.0; yc.len()], &(0..yc.len()).collect::<Vec<_>>())?;
        let xor = design.x.select_columns(&fit.kept);
        let beta = DVector::from_vec(fit.coefficients.clone());
        let m: Vec<f64> = (&xor * &beta).iter().copied().collect();
        (m, Some(xor))
    };

    let r: Vec<f64> = (0..n).map(|i| dy[i] - m_hat[i]).collect();
    let w_treat = d.clone();
    let w_cont: Vec<f64> = (0..n).map(|i| ps[i] * (1.0 - d[i]) / (1.0 - ps[i])).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / nf;
    let mw_treat = mean(&w_treat);
    let mw_cont = mean(&w_cont);
    let eta_treat = (0..n).map(|i| w_treat[i] * r[i]).sum::<f64>() / nf / mw_treat;
    let eta_cont = (0..n).map(|i| w_cont[i] * r[i]).sum::<f64>() / nf / mw_cont;
    let estimate = eta_treat - eta_cont;

    // Influence function.
    let mut inf_treat: Vec<f64> = (0..n).map(|i| w_treat[i] * (r[i] - eta_treat)).collect();
    let mut inf_cont: Vec<f64> = (0..n).map(|i| w_cont[i] * (r[i] - eta_cont)).collect();

    // Propensity estimation effect.
    {
        let w: Vec<f64> = ps.iter().map(|p| p * (1.0 - p)).collect();
        let mut info = crate::glm::weighted_gram(&xps, &w);
        info /= nf;
        let hess = info
            .try_inverse()
            .ok_or_else(|| Error::Numerical("propensity information is singular".into()))?;
        let k = xps.ncols();
        let mut m2 = DVector::zeros(k);
        for i in 0..n {
            let c = w_cont[i] * (r[i] - eta_cont) / nf;
            for j in 0..k {
                m2[j] += c * xps[(i, j)];
            }
        }
        let hm2 = &hess * m2;
        for i in 0..n {
            let lin: f64 = (0..k).map(|j| xps[(i, j)] * hm2[j]).sum();
            inf_cont[i] += (d[i] - ps[i]) * lin;
        }
    }

    // Outcome-regression estimation effect.
    if let Some(xor) = &or_parts {
        let k = xor.ncols();
        let mut xpx = DMatrix::zeros(k, k);
        for i in n1..n {
            let row = xor.row(i);
            xpx += row.transpose() * row;
        }
        xpx /= nf;
        let xpx_inv = xpx
            .try_inverse()
            .ok_or_else(|| Error::Numerical("outcome regression information is singular".into()))?;
        let mut m1 = DVector::zeros(k);
        let mut m3 = DVector::zeros(k);
        for i in 0..n {
            for j in 0..k {
                m1[j] += w_treat[i] * xor[(i, j)] / nf;
                m3[j] += w_cont[i] * xor[(i, j)] / nf;
            }
        }
        let a1 = &xpx_inv * m1;
        let a3 = &xpx_inv * m3;
        for i in n1..n {
            let row = xor.row(i);
            let lin1: f64 = (0..k).map(|j| row[j] * a1[j]).sum();
            let lin3: f64 = (0..k).map(|j| row[j] * a3[j]).sum();
            inf_treat[i] -= r[i] * lin1;
            inf_cont[i] -= r[i] * lin3;
        }
    }

    let mut psi: Vec<f64> = (0..n).map(|i| inf_treat[i] / mw_treat - inf_cont[i] / mw_cont).collect();
    let center = psi.iter().sum::<f64>() / nf;
    psi.iter_mut().for_each(|v| *v -= center);

    let big_n = dataset.n_units();
    let scale = big_n as f64 / nf;
    let mut influence = vec![0.0; big_n];
    for (r, &i) in units.iter().enumerate() {
        influence[i] = scale * psi[r];
    }
    let se = influence_se(&influence);

    Ok(GroupTimeATT {
        g,
        t,
        base,
        estimate,
        influence,
        se,
        n_treated: n1,
        n_control: n - n1,
        control_group: opts.control_group,
        method: opts.method,
        delta,
    })
}

/// `sqrt(mean(psi^2) / N)`.
pub fn influence_se(influence: &[f64]) -> f64 {
    let n = influence.len() as f64;
    (influence.iter().map(|v| v * v).sum::<f64>() / n / n).sqrt()
}

/// A cell that could not be estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub g: u32,
    pub t: u32,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttSurface {
    pub cells: Vec<GroupTimeATT>,
    pub failures: Vec<CellFailure>,
}

/// Admissible `(g, t)` pairs for a panel.
pub fn admissible_cells(dataset: &PanelDataset, delta: u32, convention: BasePeriod) -> (Vec<(u32, u32)>, Vec<CellFailure>) {
    let mut cells = Vec::new();
    let mut failures = Vec::new();
    for g in dataset.treated_cohorts() {
        if (g as i64) - (delta as i64) - 1 < 1 {
            failures.push(CellFailure {
                g,
                t: g,
                error: Error::NoReferencePeriod { g, delta }.to_string(),
            });
            continue;
        }
        for t in 1..=dataset.n_periods() {
            if base_period(g, t, delta, convention).is_ok() {
                cells.push((g, t));
            }
        }
    }
    (cells, failures)
}

/// Every admissible ATT(g,t). Cell failures are collected, not fatal.
pub fn att_surface(dataset: &PanelDataset, opts: &DrDidOptions, exec: Execution) -> AttSurface {
    let (pairs, mut failures) = admissible_cells(dataset, opts.anticipation, opts.base_period);
    let results = par::map_slice(exec, &pairs, |&(g, t)| group_time_att(dataset, g, t, opts));
    let mut cells = Vec::with_capacity(pairs.len());
    for ((g, t), res) in pairs.into_iter().zip(results) {
        match res {
            Ok(c) => cells.push(c),
            Err(e) => failures.push(CellFailure { g, t, error: e.to_string() }),
        }
    }
    AttSurface { cells, failures }
}

impl AttSurface {
    /// CSV with columns `g,t,estimate,se,n_treated,n_control`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["g", "t", "estimate", "se", "n_treated", "n_control"])?;
        for c in &self.cells {
            w.write_record([
                c.g.to_string(),
                c.t.to_string(),
                c.estimate.to_string(),
                c.se.to_string(),
                c.n_treated.to_string(),
                c.n_control.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Numerical(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}
