//! Partially pooled synthetic control for staggered adoption.
//!
//! Each treated unit `j` (first treated at `T_j`, with `L_j = T_j - 1` lags)
//! receives simplex weights `gamma_j` over its donor pool. With imbalances
//! `d_jl = Y_{j,T_j-l} - sum_i gamma_ij Y_{i,T_j-l}`:
//!
//! ```text
//! q_sep^2  = 1/J sum_j 1/L_j sum_l d_jl^2
//! q_pool^2 = 1/L_max sum_l (1/J_l sum_{j: L_j >= l} d_jl)^2
//! ```
//!
//! and the pooled fit minimizes
//! `nu q_pool^2 / Qp + (1 - nu) q_sep^2 / Qs + lambda / (J Qs) sum_j |gamma_j|^2`,
//! where `Qs`, `Qp` are the squared measures at the separate (`nu = 0`)
//! solution. By default outcomes are de-meaned by each unit's own
//! pre-treatment mean before matching (an intercept shift per unit).

use std::collections::BTreeMap;
use std::ops::AddAssign;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::aggregate::{normal_quantile, EventStudyEntry, EventStudyResult, DEFAULT_WINDOW};
use crate::error::{Error, Result};
use crate::panel::{Cohort, PanelDataset};
use crate::par::{self, Execution};
use crate::simplex::{QpOptions, SimplexQp};

pub const TABLE_HEADER: [&str; 5] = ["event_time", "estimate", "se", "ci_upper", "ci_lower"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AscmOptions {
    pub lambda: f64,
    pub nu: f64,
    /// Match on outcomes net of each unit's pre-treatment mean.
    pub demean: bool,
    pub window: (i64, i64),
    pub level: f64,
    pub max_iter: usize,
    /// KKT tolerance for the per-unit problems.
    pub tol: f64,
    /// KKT tolerance for the pooled problem.
    pub pooled_tol: f64,
    #[serde(default)]
    pub execution: Execution,
}

impl Default for AscmOptions {
    fn default() -> Self {
        AscmOptions {
            lambda: 0.0,
            nu: 0.5,
            demean: true,
            window: DEFAULT_WINDOW,
            level: 0.95,
            max_iter: 10_000,
            tol: 1e-8,
            pooled_tol: 1e-7,
            execution: Execution::Parallel,
        }
    }
}

/// Matching problem of one treated unit. Row `l - 1` of `donor_lags` and
/// entry `l - 1` of `target` hold period `T_j - l`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScmProblem {
    pub unit: usize,
    pub treat_period: u32,
    pub donors: Vec<usize>,
    pub target: Vec<f64>,
    pub donor_lags: DMatrix<f64>,
    /// Pre-period means removed from target and donors (zero without de-meaning).
    pub target_mean: f64,
    pub donor_means: Vec<f64>,
    pub lambda: f64,
}

impl ScmProblem {
    /// Problem from explicit lag data, without de-meaning.
    pub fn from_lags(target: Vec<f64>, donor_lags: DMatrix<f64>, lambda: f64) -> Result<Self> {
        let p = ScmProblem {
            unit: 0,
            treat_period: target.len() as u32 + 1,
            donors: (0..donor_lags.ncols()).collect(),
            donor_means: vec![0.0; donor_lags.ncols()],
            target,
            donor_lags,
            target_mean: 0.0,
            lambda,
        };
        p.validate()?;
        Ok(p)
    }

    /// Problem of treated unit `unit`. Donors are never-treated units and
    /// units first treated after `T_j + k_max`.
    pub fn for_unit(dataset: &PanelDataset, unit: usize, k_max: i64, lambda: f64, demean: bool) -> Result<Self> {
        let tj = dataset
            .cohort(unit)
            .period()
            .ok_or_else(|| Error::InvalidArgument(format!("unit `{}` is never treated", dataset.units()[unit])))?;
        let donors: Vec<usize> = (0..dataset.n_units())
            .filter(|&i| match dataset.cohort(i) {
                Cohort::Never => true,
                Cohort::Treated(h) => h as i64 > tj as i64 + k_max,
            })
            .collect();
        let lags = tj as usize - 1;
        let pre_mean = |i: usize| {
            if demean {
                (1..tj).map(|t| dataset.y(i, t)).sum::<f64>() / lags as f64
            } else {
                0.0
            }
        };
        let target_mean = pre_mean(unit);
        let donor_means: Vec<f64> = donors.iter().map(|&i| pre_mean(i)).collect();
        let target = (1..=lags).map(|l| dataset.y(unit, tj - l as u32) - target_mean).collect();
        let donor_lags = DMatrix::from_fn(lags, donors.len(), |r, c| {
            dataset.y(donors[c], tj - (r as u32 + 1)) - donor_means[c]
        });
        let p = ScmProblem {
            unit,
            treat_period: tj,
            donors,
            target,
            donor_lags,
            target_mean,
            donor_means,
            lambda,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if self.target.is_empty() {
            return Err(Error::InsufficientSupport("synthetic control needs at least one lag".into()));
        }
        if self.donors.is_empty() {
            return Err(Error::InsufficientSupport(format!(
                "treated unit {} (first treated {}) has no eligible donor",
                self.unit, self.treat_period
            )));
        }
        if self.donor_lags.nrows() != self.target.len() || self.donor_lags.ncols() != self.donors.len() {
            return Err(Error::Dimension("donor lag matrix does not match target and donors".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidArgument("lambda must be >= 0".into()));
        }
        if self.target.iter().chain(self.donor_lags.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("lagged outcomes must be finite".into()));
        }
        Ok(())
    }

    pub fn lags(&self) -> usize {
        self.target.len()
    }

    /// Per-lag imbalance `target - A gamma`.
    pub fn imbalance(&self, gamma: &[f64]) -> Vec<f64> {
        let fit = &self.donor_lags * DVector::from_column_slice(gamma);
        self.target.iter().zip(fit.iter()).map(|(y, f)| y - f).collect()
    }

    /// `1/L |target - A gamma|^2 + lambda |gamma|^2`.
    pub fn objective(&self, gamma: &[f64]) -> f64 {
        let d = self.imbalance(gamma);
        d.iter().map(|v| v * v).sum::<f64>() / self.lags() as f64 + self.lambda * gamma.iter().map(|g| g * g).sum::<f64>()
    }

    fn qp(&self) -> SimplexQp {
        let l = self.lags() as f64;
        let a = &self.donor_lags;
        let mut h = a.tr_mul(a) * (2.0 / l);
        for k in 0..h.nrows() {
            h[(k, k)] += 2.0 * self.lambda;
        }
        let c = a.tr_mul(&DVector::from_column_slice(&self.target)) * (-2.0 / l);
        SimplexQp {
            h,
            c,
            blocks: vec![0..self.donors.len()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmSolution {
    pub weights: Vec<f64>,
    pub objective: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Simplex-constrained ridge matching of one treated unit.
pub fn scm_weights(problem: &ScmProblem, max_iter: usize, tol: f64) -> Result<ScmSolution> {
    let n = problem.donors.len();
    let s = problem.qp().solve(&vec![1.0 / n as f64; n], QpOptions { tol, max_iter })?;
    Ok(ScmSolution {
        objective: problem.objective(&s.x),
        weights: s.x,
        residual: s.residual,
        iterations: s.iterations,
    })
}

/// Synthetic counterfactual of the problem's unit at `period`. Donors with
/// positive weight must still be untreated at `period`.
pub fn impute_counterfactual(dataset: &PanelDataset, problem: &ScmProblem, gamma: &[f64], period: u32) -> Result<f64> {
    let mut v = problem.target_mean;
    for (k, &i) in problem.donors.iter().enumerate() {
        if gamma[k] <= 0.0 {
            continue;
        }
        if let Cohort::Treated(h) = dataset.cohort(i) {
            if h <= period {
                return Err(Error::DonorContamination {
                    donor: dataset.units()[i].clone(),
                    period: h,
                });
            }
        }
        v += gamma[k] * (dataset.y(i, period) - problem.donor_means[k]);
    }
    Ok(v)
}

pub fn unit_effect(observed: f64, imputed: f64) -> f64 {
    observed - imputed
}

/// Average of unit effects, `None` when no unit is observed.
pub fn att_k(effects: &[f64]) -> Option<f64> {
    if effects.is_empty() {
        None
    } else {
        Some(effects.iter().sum::<f64>() / effects.len() as f64)
    }
}

/// Leave-one-unit-out jackknife SE of the mean; `None` below two units.
pub fn jackknife_se(effects: &[f64]) -> Option<f64> {
    let j = effects.len();
    if j < 2 {
        return None;
    }
    let total: f64 = effects.iter().sum();
    let loo: Vec<f64> = effects.iter().map(|e| (total - e) / (j - 1) as f64).collect();
    let m = loo.iter().sum::<f64>() / j as f64;
    let ss: f64 = loo.iter().map(|v| (v - m).powi(2)).sum();
    Some(((j - 1) as f64 / j as f64 * ss).sqrt())
}

/// `(q_sep, q_pool)` of weights `gammas` (one vector per problem).
pub fn fit_quality(problems: &[ScmProblem], gammas: &[Vec<f64>]) -> (f64, f64) {
    let j = problems.len() as f64;
    let l_max = problems.iter().map(|p| p.lags()).max().unwrap_or(0);
    let mut sep = 0.0;
    let mut sums = vec![0.0; l_max];
    let mut counts = vec![0usize; l_max];
    for (p, g) in problems.iter().zip(gammas) {
        let d = p.imbalance(g);
        sep += d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64;
        for (l, v) in d.iter().enumerate() {
            sums[l] += v;
            counts[l] += 1;
        }
    }
    let pool: f64 = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| (s / c as f64).powi(2))
        .sum::<f64>()
        / l_max as f64;
    ((sep / j).sqrt(), pool.sqrt())
}

/// Normalizers and weights of the pooled objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PooledObjective {
    pub nu: f64,
    pub lambda: f64,
    /// `q_sep^2` at the separate solution (or 1 after fallback).
    pub qs: f64,
    /// `q_pool^2` at the separate solution (or 1 after fallback).
    pub qp: f64,
}

impl PooledObjective {
    pub fn value(&self, problems: &[ScmProblem], gammas: &[Vec<f64>]) -> f64 {
        let (s, p) = fit_quality(problems, gammas);
        let ridge: f64 = gammas.iter().flatten().map(|g| g * g).sum();
        self.nu * p * p / self.qp
            + (1.0 - self.nu) * s * s / self.qs
            + self.lambda / (problems.len() as f64 * self.qs) * ridge
    }

    fn qp_problem(&self, problems: &[ScmProblem]) -> SimplexQp {
        let j = problems.len() as f64;
        let mut offsets = Vec::with_capacity(problems.len());
        let mut dim = 0;
        for p in problems {
            offsets.push(dim);
            dim += p.donors.len();
        }
        let l_max = problems.iter().map(|p| p.lags()).max().unwrap_or(0);
        let mut h = DMatrix::zeros(dim, dim);
        let mut c = DVector::zeros(dim);
        let sep_w = (1.0 - self.nu) / self.qs;
        for (p, &o) in problems.iter().zip(&offsets) {
            let n = p.donors.len();
            let l = p.lags() as f64;
            let a = &p.donor_lags;
            let scale = 2.0 * sep_w / (j * l);
            let block = a.tr_mul(a) * scale;
            h.view_mut((o, o), (n, n)).add_assign(&block);
            let lin = a.tr_mul(&DVector::from_column_slice(&p.target)) * (-scale);
            c.rows_mut(o, n).add_assign(&lin);
            for k in 0..n {
                h[(o + k, o + k)] += 2.0 * self.lambda / (j * self.qs);
            }
        }
        if self.nu > 0.0 {
            // q_pool^2 = 1/L_max |b - R x|^2.
            let mut r = DMatrix::zeros(l_max, dim);
            let mut b = DVector::zeros(l_max);
            for l in 0..l_max {
                let members: Vec<usize> = (0..problems.len()).filter(|&k| problems[k].lags() > l).collect();
                let jl = members.len() as f64;
                for &k in &members {
                    let p = &problems[k];
                    b[l] += p.target[l] / jl;
                    for d in 0..p.donors.len() {
                        r[(l, offsets[k] + d)] = p.donor_lags[(l, d)] / jl;
                    }
                }
            }
            let scale = 2.0 * self.nu / (self.qp * l_max as f64);
            h += r.tr_mul(&r) * scale;
            c -= r.tr_mul(&b) * scale;
        }
        let blocks = problems
            .iter()
            .zip(&offsets)
            .map(|(p, &o)| o..o + p.donors.len())
            .collect();
        SimplexQp { h, c, blocks }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitWeights {
    pub unit: String,
    pub treat_period: u32,
    pub donors: Vec<String>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitEffect {
    pub unit: String,
    pub k: i64,
    pub effect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttEntry {
    pub k: i64,
    pub estimate: f64,
    pub se: Option<f64>,
    pub n_units: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmFit {
    pub nu: f64,
    pub lambda: f64,
    pub demean: bool,
    pub q_sep: f64,
    pub q_pool: f64,
    /// Fit measures of the separate (`nu = 0`) solution.
    pub q_sep_separate: f64,
    pub q_pool_separate: f64,
    pub objective: PooledObjective,
    /// True when a zero normalizer forced the unnormalized objective.
    pub normalization_fallback: bool,
    pub pooled_residual: f64,
    pub pooled_iterations: usize,
    pub weights: Vec<UnitWeights>,
    pub unit_effects: Vec<UnitEffect>,
    pub att: Vec<AttEntry>,
    #[serde(skip)]
    pub problems: Vec<ScmProblem>,
    #[serde(skip)]
    pub gammas: Vec<Vec<f64>>,
    #[serde(skip)]
    pub separate: Vec<Vec<f64>>,
}

/// Builds every treated unit's problem. `k_max` is the largest event time
/// that will be imputed.
pub fn build_problems(dataset: &PanelDataset, opts: &AscmOptions) -> Result<(Vec<ScmProblem>, i64)> {
    let treated: Vec<usize> = (0..dataset.n_units()).filter(|&i| !dataset.cohort(i).is_never()).collect();
    if treated.is_empty() {
        return Err(Error::InsufficientSupport("no treated unit".into()));
    }
    let first = treated
        .iter()
        .filter_map(|&i| dataset.cohort(i).period())
        .min()
        .expect("treated units");
    let k_max = opts.window.1.min(dataset.n_periods() as i64 - first as i64).max(0);
    let problems = par::map_slice(opts.execution, &treated, |&j| {
        ScmProblem::for_unit(dataset, j, k_max, opts.lambda, opts.demean)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok((problems, k_max))
}

/// Separate and partially pooled fits, unit effects, ATT_k and jackknife SEs.
pub fn fit_partially_pooled(dataset: &PanelDataset, opts: &AscmOptions) -> Result<ScmFit> {
    if !(0.0..=1.0).contains(&opts.nu) {
        return Err(Error::InvalidArgument(format!("nu must lie in [0, 1], got {}", opts.nu)));
    }
    if !(opts.lambda >= 0.0) {
        return Err(Error::InvalidArgument("lambda must be >= 0".into()));
    }
    let (problems, k_max) = build_problems(dataset, opts)?;
    let separate: Vec<Vec<f64>> = par::map_slice(opts.execution, &problems, |p| {
        scm_weights(p, opts.max_iter, opts.tol).map(|s| s.weights)
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let (qs0, qp0) = fit_quality(&problems, &separate);
    let scale = 1.0
        + problems
            .iter()
            .map(|p| p.target.iter().map(|v| v * v).sum::<f64>() / p.lags() as f64)
            .sum::<f64>()
            / problems.len() as f64;
    let tiny = 1e-14 * scale;
    let fallback = qs0 * qs0 <= tiny || qp0 * qp0 <= tiny;
    if fallback {
        log::warn!("separate synthetic-control fit is exact; using the unnormalized pooled objective");
    }
    let objective = PooledObjective {
        nu: opts.nu,
        lambda: opts.lambda,
        qs: if fallback { 1.0 } else { qs0 * qs0 },
        qp: if fallback { 1.0 } else { qp0 * qp0 },
    };

    let (gammas, pooled_residual, pooled_iterations) = if opts.nu > 0.0 && problems.len() > 1 {
        let qp = objective.qp_problem(&problems);
        let start: Vec<f64> = separate.iter().flatten().copied().collect();
        let sol = qp.solve(
            &start,
            QpOptions {
                tol: opts.pooled_tol,
                max_iter: opts.max_iter,
            },
        )?;
        let mut out = Vec::with_capacity(problems.len());
        let mut o = 0;
        for p in &problems {
            out.push(sol.x[o..o + p.donors.len()].to_vec());
            o += p.donors.len();
        }
        (out, sol.residual, sol.iterations)
    } else {
        (separate.clone(), 0.0, 0)
    };
    let (q_sep, q_pool) = fit_quality(&problems, &gammas);

    // Unit effects over the window, placebo residuals before treatment.
    let t_max = dataset.n_periods() as i64;
    let mut unit_effects = Vec::new();
    let mut by_k: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for (p, g) in problems.iter().zip(&gammas) {
        let tj = p.treat_period as i64;
        let lo = opts.window.0.max(-(p.lags() as i64));
        let hi = opts.window.1.min(t_max - tj).min(k_max);
        for k in lo..=hi {
            let period = (tj + k) as u32;
            let imputed = impute_counterfactual(dataset, p, g, period)?;
            let effect = unit_effect(dataset.y(p.unit, period), imputed);
            unit_effects.push(UnitEffect {
                unit: dataset.units()[p.unit].clone(),
                k,
                effect,
            });
            by_k.entry(k).or_default().push(effect);
        }
    }
    let att = by_k
        .iter()
        .map(|(&k, v)| AttEntry {
            k,
            estimate: att_k(v).expect("non-empty"),
            se: jackknife_se(v),
            n_units: v.len(),
        })
        .collect();

    let weights = problems
        .iter()
        .zip(&gammas)
        .map(|(p, g)| UnitWeights {
            unit: dataset.units()[p.unit].clone(),
            treat_period: p.treat_period,
            donors: p.donors.iter().map(|&i| dataset.units()[i].clone()).collect(),
            weights: g.clone(),
        })
        .collect();

    Ok(ScmFit {
        nu: opts.nu,
        lambda: opts.lambda,
        demean: opts.demean,
        q_sep,
        q_pool,
        q_sep_separate: qs0,
        q_pool_separate: qp0,
        objective,
        normalization_fallback: fallback,
        pooled_residual,
        pooled_iterations,
        weights,
        unit_effects,
        att,
        problems,
        gammas,
        separate,
    })
}

/// Solves the pooled problem from an arbitrary feasible start.
pub fn solve_pooled(
    problems: &[ScmProblem],
    objective: &PooledObjective,
    start: &[Vec<f64>],
    opts: QpOptions,
) -> Result<Vec<Vec<f64>>> {
    let qp = objective.qp_problem(problems);
    let flat: Vec<f64> = start.iter().flatten().copied().collect();
    let sol = qp.solve(&flat, opts)?;
    let mut out = Vec::with_capacity(problems.len());
    let mut o = 0;
    for p in problems {
        out.push(sol.x[o..o + p.donors.len()].to_vec());
        o += p.donors.len();
    }
    Ok(out)
}

impl ScmFit {
    /// Event study with jackknife pointwise intervals; the simultaneous
    /// band is the pointwise one.
    pub fn event_study(&self, dataset: &PanelDataset, window: (i64, i64), level: f64) -> Result<EventStudyResult> {
        let z = normal_quantile(level)?;
        let mut entries = Vec::new();
        let mut omitted = Vec::new();
        for e in window.0..=window.1 {
            match self.att.iter().find(|a| a.k == e) {
                Some(a) => {
                    let cohorts: std::collections::BTreeSet<u32> = self
                        .unit_effects
                        .iter()
                        .filter(|u| u.k == e)
                        .filter_map(|u| self.weights.iter().find(|w| w.unit == u.unit).map(|w| w.treat_period))
                        .collect();
                    entries.push(EventStudyEntry::pointwise(e, a.estimate, a.se, z, cohorts.len()))
                }
                None => omitted.push(e),
            }
        }
        if entries.is_empty() {
            return Err(Error::InsufficientSupport("no synthetic-control effect inside the window".into()));
        }
        Ok(EventStudyResult {
            method: "ascm".into(),
            horizon: dataset.n_periods(),
            level,
            critical_value: None,
            entries,
            weights: vec![],
            omitted,
            influence: vec![],
        })
    }

    /// CSV with columns `event_time,estimate,se,ci_upper,ci_lower`.
    pub fn table_csv(&self, level: f64) -> Result<String> {
        let z = normal_quantile(level)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(TABLE_HEADER)?;
        let fmt = crate::aggregate::fmt_num;
        for a in &self.att {
            w.write_record([
                a.k.to_string(),
                fmt(Some(a.estimate)),
                fmt(a.se),
                fmt(a.se.map(|s| a.estimate + z * s)),
                fmt(a.se.map(|s| a.estimate - z * s)),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Numerical(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::PanelParts;

    fn problem(target: Vec<f64>, donors: Vec<Vec<f64>>, lambda: f64) -> ScmProblem {
        let l = target.len();
        let a = DMatrix::from_fn(l, donors.len(), |r, c| donors[c][r]);
        ScmProblem::from_lags(target, a, lambda).unwrap()
    }

    #[test]
    fn closed_form_two_donors() {
        let p = problem(vec![2.0], vec![vec![0.0], vec![4.0]], 0.0);
        let s = scm_weights(&p, 10_000, 1e-8).unwrap();
        assert!((s.weights[0] - 0.5).abs() < 1e-9 && (s.weights[1] - 0.5).abs() < 1e-9);
        assert!(s.objective < 1e-15);
    }

    #[test]
    fn exact_replica_gets_all_weight() {
        let p = problem(
            vec![1.0, 3.0, 2.0, 5.0],
            vec![vec![0.0, 1.0, 0.0, 1.0], vec![1.0, 3.0, 2.0, 5.0], vec![4.0, 2.0, 2.0, 0.0]],
            0.0,
        );
        let s = scm_weights(&p, 10_000, 1e-8).unwrap();
        assert!(s.weights[1] >= 1.0 - 1e-6);
        assert!(s.objective < 1e-12);
    }

    #[test]
    fn huge_penalty_is_uniform() {
        let p = problem(
            vec![1.0, 3.0, 2.0],
            vec![vec![0.0, 1.0, 0.0], vec![1.0, 3.0, 2.0], vec![4.0, 2.0, 2.0], vec![9.0, 9.0, 9.0]],
            1e9,
        );
        let s = scm_weights(&p, 10_000, 1e-8).unwrap();
        assert!(s.weights.iter().all(|w| (w - 0.25).abs() < 1e-6));
    }

    #[test]
    fn imputation_examples() {
        let ds = PanelDataset::new(PanelParts {
            units: vec!["j".into(), "a".into(), "b".into(), "late".into()],
            n_periods: 3,
            outcome: vec![1.0, 1.0, 9.0, 0.0, 0.0, 8.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            static_names: vec![],
            static_values: vec![],
            tv_names: vec![],
            tv_values: vec![],
            cohort: vec![Cohort::Treated(3), Cohort::Never, Cohort::Never, Cohort::Treated(3)],
            exposure: None,
        })
        .unwrap();
        let mut p = ScmProblem::for_unit(&ds, 0, 0, 0.0, false).unwrap();
        assert_eq!(p.donors, vec![1, 2]);
        assert_eq!(impute_counterfactual(&ds, &p, &[1.0, 0.0], 3).unwrap(), 8.0);
        assert_eq!(impute_counterfactual(&ds, &p, &[0.25, 0.75], 3).unwrap(), 2.0);
        assert_eq!(unit_effect(9.0, 9.0), 0.0);
        // A contaminated donor with positive weight is rejected.
        p.donors = vec![1, 3];
        p.donor_means = vec![0.0, 0.0];
        assert!(matches!(
            impute_counterfactual(&ds, &p, &[0.5, 0.5], 3),
            Err(Error::DonorContamination { .. })
        ));
    }

    #[test]
    fn att_and_jackknife() {
        assert_eq!(att_k(&[1.0, 3.0]), Some(2.0));
        assert_eq!(att_k(&[]), None);
        assert_eq!(jackknife_se(&[0.0, 2.0]), Some(1.0));
        assert_eq!(jackknife_se(&[1.5, 1.5, 1.5]), Some(0.0));
        assert_eq!(jackknife_se(&[4.0]), None);
        let a = jackknife_se(&[0.3, 1.2, -0.4, 2.2]).unwrap();
        let b = jackknife_se(&[2.2, -0.4, 0.3, 1.2]).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn fit_quality_examples() {
        // Imbalances equal the targets when every donor is identically zero.
        let zero = |t: Vec<f64>| problem(t.clone(), vec![vec![0.0; t.len()]], 0.0);
        let ps = vec![zero(vec![1.0, 1.0]), zero(vec![1.0, 3.0])];
        let g = vec![vec![1.0], vec![1.0]];
        let (s, p) = fit_quality(&ps, &g);
        assert!((s - 3f64.sqrt()).abs() < 1e-15);
        assert!((p - 2.5f64.sqrt()).abs() < 1e-15);

        let ps = vec![zero(vec![0.7, 0.7]), zero(vec![-0.7, -0.7])];
        let (s, p) = fit_quality(&ps, &g);
        assert!((s - 0.7).abs() < 1e-15 && p.abs() < 1e-15);

        let (s, p) = fit_quality(&[zero(vec![0.0, 0.0])], &[vec![1.0]]);
        assert_eq!((s, p), (0.0, 0.0));
    }

    #[test]
    fn pooled_lowers_objective() {
        let ps = vec![
            problem(
                vec![1.0, 2.0, 1.5],
                vec![vec![0.0, 1.0, 3.0], vec![2.0, 2.5, 1.0], vec![1.0, 1.0, 1.0]],
                0.0,
            ),
            problem(
                vec![2.0, 0.5, 1.0],
                vec![vec![0.0, 1.0, 3.0], vec![2.0, 2.5, 1.0], vec![3.0, 0.0, 0.5]],
                0.0,
            ),
        ];
        let sep: Vec<Vec<f64>> = ps.iter().map(|p| scm_weights(p, 10_000, 1e-10).unwrap().weights).collect();
        let (s0, p0) = fit_quality(&ps, &sep);
        let obj = PooledObjective {
            nu: 0.5,
            lambda: 0.0,
            qs: s0 * s0,
            qp: p0 * p0,
        };
        let uniform = vec![vec![1.0 / 3.0; 3]; 2];
        let pooled = solve_pooled(&ps, &obj, &sep, QpOptions { tol: 1e-9, max_iter: 10_000 }).unwrap();
        let f = obj.value(&ps, &pooled);
        assert!(f <= obj.value(&ps, &sep) + 1e-12);
        assert!(f <= obj.value(&ps, &uniform) + 1e-12);
        for g in &pooled {
            assert!(g.iter().all(|w| *w >= -1e-8));
            assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn nu_zero_pooled_solver_matches_separate() {
        let ps = vec![
            problem(vec![1.0, 2.0], vec![vec![0.0, 1.0], vec![2.0, 2.5], vec![1.0, 1.0]], 0.1),
            problem(vec![2.0, 0.5], vec![vec![0.0, 1.0], vec![2.0, 2.5], vec![3.0, 0.0]], 0.1),
        ];
        let sep: Vec<Vec<f64>> = ps.iter().map(|p| scm_weights(p, 10_000, 1e-10).unwrap().weights).collect();
        let (s0, _) = fit_quality(&ps, &sep);
        let obj = PooledObjective {
            nu: 0.0,
            lambda: 0.1,
            qs: s0 * s0,
            qp: 1.0,
        };
        let uniform = vec![vec![1.0 / 3.0; 3]; 2];
        let pooled = solve_pooled(&ps, &obj, &uniform, QpOptions { tol: 1e-10, max_iter: 10_000 }).unwrap();
        for (a, b) in pooled.iter().flatten().zip(sep.iter().flatten()) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
