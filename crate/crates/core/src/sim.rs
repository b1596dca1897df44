//! Ground-truth panel simulator.
//!
//! Untreated potential outcomes are
//!
//! ```text
//! Y_it(inf) = a_i + l_t + sum_k level_k x_ik + (t - 1) * trend(x_i) + eps_it
//! ```
//!
//! and `Y_it(g) = Y_it(inf) + tau(g, t - g)` for `t >= g`. With `count` set,
//! the linear index is the log mean of an NB2 draw and `tau` acts on the log
//! rate. Both potential outcomes are stored so the truth is exact.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Gamma, Normal, Poisson, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{Cohort, PanelDataset, PanelParts};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateDist {
    Normal { mean: f64, sd: f64 },
    Uniform { low: f64, high: f64 },
    Bernoulli { p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    pub dist: CovariateDist,
    /// Loading on the outcome level.
    #[serde(default)]
    pub level: f64,
    /// Loading on the per-period outcome trend.
    #[serde(default)]
    pub trend: f64,
    /// Loading on the adoption log-odds.
    #[serde(default)]
    pub adoption: f64,
}

/// `coef * x^power` for covariate `covariate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub covariate: String,
    pub power: i32,
    pub coef: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSize {
    pub period: u32,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CohortScheme {
    /// Fixed cohort sizes; remaining units are never treated. Assignment to
    /// units is a seeded random permutation.
    Explicit { cohorts: Vec<CohortSize> },
    /// Treated with probability `logistic(c + sum adoption terms)`, `c`
    /// calibrated on the drawn covariates so the expected never-treated
    /// share is `never_treated_fraction`; treated units draw a period
    /// uniformly from `periods`.
    Logistic {
        never_treated_fraction: f64,
        periods: Vec<u32>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectCell {
    pub g: u32,
    pub k: i64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EffectSpec {
    Constant { tau: f64 },
    /// `intercept + slope * k` for `k >= 0`.
    Linear { intercept: f64, slope: f64 },
    /// Every `(g, k)` with `k >= 0` that occurs must be listed.
    Table { cells: Vec<EffectCell> },
}

impl EffectSpec {
    pub fn tau(&self, g: u32, k: i64) -> Result<f64> {
        if k < 0 {
            return Ok(0.0);
        }
        match self {
            EffectSpec::Constant { tau } => Ok(*tau),
            EffectSpec::Linear { intercept, slope } => Ok(intercept + slope * k as f64),
            EffectSpec::Table { cells } => cells
                .iter()
                .find(|c| c.g == g && c.k == k)
                .map(|c| c.tau)
                .ok_or_else(|| Error::InvalidArgument(format!("effect table has no entry for (g={g}, k={k})"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorSpec {
    Iid { sigma: f64 },
    /// Stationary AR(1): `eps_t = rho eps_{t-1} + sigma u_t`.
    Ar1 { rho: f64, sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountSpec {
    /// NB2 dispersion: variance `mu + dispersion mu^2`; 0 gives Poisson.
    pub dispersion: f64,
    /// Baseline log rate added to the linear index.
    #[serde(default)]
    pub log_rate: f64,
    /// Exposure drawn log-uniformly from this range and used as an offset.
    #[serde(default)]
    pub exposure_range: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub n_units: usize,
    pub n_periods: u32,
    pub cohorts: CohortScheme,
    pub effect: EffectSpec,
    pub error: ErrorSpec,
    #[serde(default)]
    pub covariates: Vec<CovariateSpec>,
    /// Extra adoption log-odds terms.
    #[serde(default)]
    pub adoption_terms: Vec<Term>,
    /// Extra per-period trend terms.
    #[serde(default)]
    pub trend_terms: Vec<Term>,
    #[serde(default)]
    pub unit_effect_sd: f64,
    #[serde(default)]
    pub time_effect_sd: f64,
    #[serde(default)]
    pub count: Option<CountSpec>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SimSpec {
    /// 59 units over 37 weekly periods: nine cohorts first treated in
    /// periods 10, 12, .., 26 and 15 never-treated units, effect 1.
    fn default() -> Self {
        let cohorts = (0..9)
            .map(|k| CohortSize {
                period: 10 + 2 * k,
                size: if k < 8 { 5 } else { 4 },
            })
            .collect();
        SimSpec {
            n_units: 59,
            n_periods: 37,
            cohorts: CohortScheme::Explicit { cohorts },
            effect: EffectSpec::Constant { tau: 1.0 },
            error: ErrorSpec::Ar1 { rho: 0.3, sigma: 0.5 },
            covariates: vec![CovariateSpec {
                name: "x".into(),
                dist: CovariateDist::Normal { mean: 0.0, sd: 1.0 },
                level: 0.5,
                trend: 0.0,
                adoption: 0.0,
            }],
            adoption_terms: vec![],
            trend_terms: vec![],
            unit_effect_sd: 1.0,
            time_effect_sd: 0.5,
            count: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthCell {
    pub g: u32,
    pub t: u32,
    pub att: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    /// ATT(g,t) for every treated cohort and period, zero before `g`.
    pub att: Vec<TruthCell>,
    /// Share-weighted event-time truth over cohorts observed at `g + e`.
    pub theta_es: BTreeMap<i64, f64>,
    /// Untreated potential outcomes, unit-major like the panel.
    pub y_untreated: Vec<f64>,
    /// Potential outcomes under each unit's own cohort (equal to
    /// `y_untreated` for never-treated units).
    pub y_treated: Vec<f64>,
}

impl SimTruth {
    pub fn att(&self, g: u32, t: u32) -> Option<f64> {
        self.att.iter().find(|c| c.g == g && c.t == t).map(|c| c.att)
    }

    pub fn theta(&self, e: i64) -> Option<f64> {
        self.theta_es.get(&e).copied()
    }
}

impl SimSpec {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_units == 0 || self.n_periods < 2 {
            return bad("simulation needs at least one unit and two periods".into());
        }
        let check_period = |p: u32| -> Result<()> {
            if p < 2 || p > self.n_periods {
                return Err(Error::InvalidArgument(format!(
                    "cohort period {p} outside 2..={}",
                    self.n_periods
                )));
            }
            Ok(())
        };
        match &self.cohorts {
            CohortScheme::Explicit { cohorts } => {
                for c in cohorts {
                    check_period(c.period)?;
                }
                let total: usize = cohorts.iter().map(|c| c.size).sum();
                if total > self.n_units {
                    return bad(format!("cohort sizes sum to {total} > {} units", self.n_units));
                }
            }
            CohortScheme::Logistic {
                never_treated_fraction: f,
                periods,
            } => {
                if !(*f > 0.0 && *f < 1.0) {
                    return bad(format!(
                        "never-treated fraction must lie in (0, 1), got {f}: estimators need a control pool"
                    ));
                }
                if periods.is_empty() {
                    return bad("logistic adoption needs at least one cohort period".into());
                }
                for &p in periods {
                    check_period(p)?;
                }
            }
        }
        match self.error {
            ErrorSpec::Iid { sigma } if !(sigma >= 0.0) => return bad("sigma must be >= 0".into()),
            ErrorSpec::Ar1 { rho, sigma } if !(rho > -1.0 && rho < 1.0) || !(sigma >= 0.0) => {
                return bad("AR(1) needs rho in (-1, 1) and sigma >= 0".into())
            }
            _ => {}
        }
        if let Some(c) = &self.count {
            if !(c.dispersion >= 0.0) {
                return bad("count dispersion must be >= 0".into());
            }
            if let Some((lo, hi)) = c.exposure_range {
                if !(lo > 0.0 && hi >= lo) {
                    return bad("exposure range must be positive and ordered".into());
                }
            }
        }
        if !(self.unit_effect_sd >= 0.0 && self.time_effect_sd >= 0.0) {
            return bad("effect standard deviations must be >= 0".into());
        }
        let names: Vec<&str> = self.covariates.iter().map(|c| c.name.as_str()).collect();
        for term in self.adoption_terms.iter().chain(&self.trend_terms) {
            if !names.contains(&term.covariate.as_str()) {
                return bad(format!("term refers to unknown covariate `{}`", term.covariate));
            }
        }
        Ok(())
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn term_value(terms: &[Term], names: &[String], x: &[f64]) -> f64 {
    terms
        .iter()
        .map(|t| {
            let k = names.iter().position(|n| *n == t.covariate).expect("validated");
            t.coef * x[k].powi(t.power)
        })
        .sum()
}

/// Intercept `c` with `mean_i logistic(c + s_i) = target`.
fn calibrate_intercept(scores: &[f64], target: f64) -> f64 {
    let f = |c: f64| scores.iter().map(|s| logistic(c + s)).sum::<f64>() / scores.len() as f64 - target;
    let (mut lo, mut hi) = (-50.0, 50.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Draws covariates and assigns cohorts; exposed for adoption checks.
pub fn selection_on_covariates(spec: &SimSpec) -> Result<(Vec<Vec<f64>>, Vec<Cohort>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let x = draw_covariates(spec, &mut rng)?;
    let cohorts = assign_cohorts(spec, &x, &mut rng)?;
    Ok((x, cohorts))
}

fn draw_covariates(spec: &SimSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let mut x = vec![Vec::with_capacity(spec.covariates.len()); spec.n_units];
    for c in &spec.covariates {
        let bad = |m: &str| Error::InvalidArgument(format!("covariate `{}`: {m}", c.name));
        for row in x.iter_mut() {
            let v = match c.dist {
                CovariateDist::Normal { mean, sd } => {
                    Normal::new(mean, sd).map_err(|_| bad("invalid normal"))?.sample(rng)
                }
                CovariateDist::Uniform { low, high } => {
                    Uniform::new(low, high).map_err(|_| bad("invalid uniform"))?.sample(rng)
                }
                CovariateDist::Bernoulli { p } => {
                    if Bernoulli::new(p).map_err(|_| bad("invalid bernoulli"))?.sample(rng) {
                        1.0
                    } else {
                        0.0
                    }
                }
            };
            row.push(v);
        }
    }
    Ok(x)
}

fn assign_cohorts(spec: &SimSpec, x: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Result<Vec<Cohort>> {
    let names: Vec<String> = spec.covariates.iter().map(|c| c.name.clone()).collect();
    match &spec.cohorts {
        CohortScheme::Explicit { cohorts } => {
            let mut labels: Vec<Cohort> = cohorts
                .iter()
                .flat_map(|c| std::iter::repeat_n(Cohort::Treated(c.period), c.size))
                .collect();
            labels.resize(spec.n_units, Cohort::Never);
            labels.shuffle(rng);
            Ok(labels)
        }
        CohortScheme::Logistic {
            never_treated_fraction,
            periods,
        } => {
            let scores: Vec<f64> = x
                .iter()
                .map(|xi| {
                    let linear: f64 = spec.covariates.iter().zip(xi).map(|(c, v)| c.adoption * v).sum();
                    linear + term_value(&spec.adoption_terms, &names, xi)
                })
                .collect();
            let c = calibrate_intercept(&scores, 1.0 - never_treated_fraction);
            let pick = Uniform::new(0, periods.len()).expect("non-empty");
            Ok(scores
                .iter()
                .map(|s| {
                    let u: f64 = rng.random();
                    let k = pick.sample(rng);
                    if u < logistic(c + s) {
                        Cohort::Treated(periods[k])
                    } else {
                        Cohort::Never
                    }
                })
                .collect())
        }
    }
}

/// Simulates a panel and its exact truth. Deterministic in `spec.seed`.
pub fn generate(spec: &SimSpec) -> Result<(PanelDataset, SimTruth)> {
    spec.validate()?;
    let n = spec.n_units;
    let t_len = spec.n_periods as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let x = draw_covariates(spec, &mut rng)?;
    let cohorts = assign_cohorts(spec, &x, &mut rng)?;
    let names: Vec<String> = spec.covariates.iter().map(|c| c.name.clone()).collect();

    let std_normal = Normal::new(0.0, 1.0).expect("standard normal");
    let unit_fx: Vec<f64> = (0..n).map(|_| spec.unit_effect_sd * std_normal.sample(&mut rng)).collect();
    let time_fx: Vec<f64> = (0..t_len).map(|_| spec.time_effect_sd * std_normal.sample(&mut rng)).collect();
    let exposure: Option<Vec<f64>> = spec.count.as_ref().and_then(|c| c.exposure_range).map(|(lo, hi)| {
        let u = Uniform::new_inclusive(lo.ln(), hi.ln()).expect("ordered range");
        (0..n).map(|_| u.sample(&mut rng).exp()).collect()
    });

    let mut y0 = Vec::with_capacity(n * t_len);
    let mut y1 = Vec::with_capacity(n * t_len);
    for i in 0..n {
        let level: f64 = spec.covariates.iter().zip(&x[i]).map(|(c, v)| c.level * v).sum();
        let trend: f64 = spec.covariates.iter().zip(&x[i]).map(|(c, v)| c.trend * v).sum::<f64>()
            + term_value(&spec.trend_terms, &names, &x[i]);
        let mut eps = 0.0;
        for t in 0..t_len {
            let u = std_normal.sample(&mut rng);
            eps = match spec.error {
                ErrorSpec::Iid { sigma } => sigma * u,
                ErrorSpec::Ar1 { rho, sigma } if t == 0 => sigma * u / (1.0 - rho * rho).sqrt(),
                ErrorSpec::Ar1 { rho, sigma } => rho * eps + sigma * u,
            };
            let base = unit_fx[i] + time_fx[t] + level + trend * t as f64 + eps;
            let tau = match cohorts[i] {
                Cohort::Treated(g) => spec.effect.tau(g, t as i64 + 1 - g as i64)?,
                Cohort::Never => 0.0,
            };
            y0.push(base);
            y1.push(base + tau);
        }
    }

    let outcome: Vec<f64> = match &spec.count {
        None => y1.clone(),
        Some(c) => {
            let mut out = Vec::with_capacity(n * t_len);
            for i in 0..n {
                let off = exposure.as_ref().map(|e| e[i].ln()).unwrap_or(0.0);
                for t in 0..t_len {
                    let mu = (c.log_rate + off + y1[i * t_len + t]).exp();
                    out.push(draw_nb2(mu, c.dispersion, &mut rng)?);
                }
            }
            out
        }
    };

    let mut att = Vec::new();
    let mut sizes: BTreeMap<u32, usize> = BTreeMap::new();
    for c in &cohorts {
        if let Cohort::Treated(g) = c {
            *sizes.entry(*g).or_default() += 1;
        }
    }
    for &g in sizes.keys() {
        for t in 1..=spec.n_periods {
            att.push(TruthCell {
                g,
                t,
                att: spec.effect.tau(g, t as i64 - g as i64)?,
            });
        }
    }
    let mut theta_es = BTreeMap::new();
    let horizon = spec.n_periods as i64;
    for e in (1 - horizon)..horizon {
        let eligible: Vec<(u32, usize)> = sizes
            .iter()
            .filter(|(g, _)| {
                let t = **g as i64 + e;
                t >= 1 && t <= horizon
            })
            .map(|(g, s)| (*g, *s))
            .collect();
        let total: usize = eligible.iter().map(|(_, s)| s).sum();
        if total == 0 {
            continue;
        }
        let mut v = 0.0;
        for (g, s) in eligible {
            v += s as f64 / total as f64 * spec.effect.tau(g, e)?;
        }
        theta_es.insert(e, v);
    }

    let k = spec.covariates.len();
    let dataset = PanelDataset::new(PanelParts {
        units: (0..n).map(|i| format!("unit{:03}", i + 1)).collect(),
        n_periods: spec.n_periods,
        outcome,
        static_names: names,
        static_values: x.iter().flat_map(|r| r.iter().copied()).collect::<Vec<_>>(),
        tv_names: vec![],
        tv_values: vec![],
        cohort: cohorts,
        exposure,
    })?;
    debug_assert_eq!(dataset.static_names().len(), k);
    Ok((
        dataset,
        SimTruth {
            att,
            theta_es,
            y_untreated: y0,
            y_treated: y1,
        },
    ))
}

/// Gamma-Poisson mixture with mean `mu` and variance `mu + alpha mu^2`.
fn draw_nb2(mu: f64, alpha: f64, rng: &mut ChaCha8Rng) -> Result<f64> {
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(Error::Numerical(format!("count mean {mu} is not finite")));
    }
    if mu == 0.0 {
        return Ok(0.0);
    }
    let rate = if alpha > 0.0 {
        Gamma::new(1.0 / alpha, alpha * mu)
            .map_err(|e| Error::Numerical(e.to_string()))?
            .sample(rng)
    } else {
        mu
    };
    if rate <= 0.0 {
        return Ok(0.0);
    }
    Ok(Poisson::new(rate).map_err(|e| Error::Numerical(e.to_string()))?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_geometry() {
        let (ds, truth) = generate(&SimSpec::default()).unwrap();
        assert_eq!(ds.n_units(), 59);
        assert_eq!(ds.n_periods(), 37);
        assert_eq!(ds.never_treated_units().len(), 15);
        assert_eq!(ds.treated_cohorts(), vec![10, 12, 14, 16, 18, 20, 22, 24, 26]);
        for e in 0..=11 {
            assert!((truth.theta(e).unwrap() - 1.0).abs() < 1e-15);
        }
        assert_eq!(truth.theta(-3), Some(0.0));
    }

    #[test]
    fn zero_effect_means_untreated_outcomes() {
        let spec = SimSpec {
            effect: EffectSpec::Constant { tau: 0.0 },
            seed: 3,
            ..Default::default()
        };
        let (ds, truth) = generate(&spec).unwrap();
        assert_eq!(ds.parts().outcome, truth.y_untreated);
        assert!(truth.att.iter().all(|c| c.att == 0.0));
    }

    #[test]
    fn seeded_determinism() {
        let spec = SimSpec {
            seed: 99,
            ..Default::default()
        };
        let (a, _) = generate(&spec).unwrap();
        let (b, _) = generate(&spec).unwrap();
        let mut ba = Vec::new();
        let mut bb = Vec::new();
        a.write_csv_to(&mut ba).unwrap();
        b.write_csv_to(&mut bb).unwrap();
        assert_eq!(ba, bb);
        let (c, _) = generate(&SimSpec { seed: 100, ..spec }).unwrap();
        assert_ne!(a.parts().outcome, c.parts().outcome);
    }

    #[test]
    fn treated_outcomes_shift_by_tau() {
        let spec = SimSpec {
            effect: EffectSpec::Linear {
                intercept: 1.0,
                slope: 0.5,
            },
            ..Default::default()
        };
        let (ds, truth) = generate(&spec).unwrap();
        let t_len = 37;
        for i in 0..ds.n_units() {
            for t in 1..=37u32 {
                let r = i * t_len + t as usize - 1;
                let diff = truth.y_treated[r] - truth.y_untreated[r];
                let want = match ds.cohort(i) {
                    Cohort::Treated(g) if t >= g => 1.0 + 0.5 * (t - g) as f64,
                    _ => 0.0,
                };
                assert!((diff - want).abs() < 1e-12);
            }
        }
        assert_eq!(truth.att(10, 12), Some(2.0));
    }

    #[test]
    fn two_cohorts_unit_effect_gives_flat_theta() {
        let spec = SimSpec {
            n_units: 10,
            n_periods: 6,
            cohorts: CohortScheme::Explicit {
                cohorts: vec![CohortSize { period: 3, size: 3 }, CohortSize { period: 5, size: 2 }],
            },
            ..Default::default()
        };
        let (_, truth) = generate(&spec).unwrap();
        for e in 0..=3 {
            assert_eq!(truth.theta(e), Some(1.0));
        }
    }

    #[test]
    fn missing_table_entry() {
        let spec = SimSpec {
            effect: EffectSpec::Table {
                cells: vec![EffectCell { g: 10, k: 0, tau: 1.0 }],
            },
            ..Default::default()
        };
        let err = generate(&spec).unwrap_err().to_string();
        assert!(err.contains("no entry"), "{err}");
    }

    #[test]
    fn invalid_specs() {
        let mut s = SimSpec {
            error: ErrorSpec::Ar1 { rho: 1.0, sigma: 1.0 },
            ..Default::default()
        };
        assert!(generate(&s).is_err());
        s.error = ErrorSpec::Iid { sigma: 1.0 };
        s.cohorts = CohortScheme::Logistic {
            never_treated_fraction: 0.0,
            periods: vec![3],
        };
        assert!(generate(&s).unwrap_err().to_string().contains("control pool"));
        s.cohorts = CohortScheme::Explicit {
            cohorts: vec![CohortSize { period: 1, size: 2 }],
        };
        assert!(generate(&s).is_err());
    }

    fn logistic_spec(loading: f64, n: usize, seed: u64) -> SimSpec {
        SimSpec {
            n_units: n,
            n_periods: 8,
            cohorts: CohortScheme::Logistic {
                never_treated_fraction: 0.5,
                periods: vec![3, 5, 7],
            },
            covariates: vec![CovariateSpec {
                name: "x".into(),
                dist: CovariateDist::Normal { mean: 0.0, sd: 1.0 },
                level: 0.0,
                trend: 0.0,
                adoption: loading,
            }],
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn adoption_independent_of_covariate_without_loading() {
        // 2 x 4 contingency table: x above/below median by cohort label.
        let (x, cohorts) = selection_on_covariates(&logistic_spec(0.0, 5000, 5)).unwrap();
        let mut xs: Vec<f64> = x.iter().map(|r| r[0]).collect();
        xs.sort_by(f64::total_cmp);
        let median = xs[xs.len() / 2];
        let col = |c: Cohort| match c {
            Cohort::Never => 0,
            Cohort::Treated(3) => 1,
            Cohort::Treated(5) => 2,
            _ => 3,
        };
        let mut table = [[0.0f64; 4]; 2];
        for (r, c) in x.iter().zip(&cohorts) {
            table[usize::from(r[0] > median)][col(*c)] += 1.0;
        }
        let n = 5000.0;
        let mut chi2 = 0.0;
        for (i, row) in table.iter().enumerate() {
            for (j, obs) in row.iter().enumerate() {
                let r: f64 = table[i].iter().sum();
                let c: f64 = table.iter().map(|row| row[j]).sum();
                let e = r * c / n;
                chi2 += (obs - e).powi(2) / e;
            }
        }
        // chi-square(3) upper 1% point.
        assert!(chi2 < 11.345, "chi2 = {chi2}");
        let never = cohorts.iter().filter(|c| c.is_never()).count() as f64 / n;
        assert!((never - 0.5).abs() < 0.03);
    }

    #[test]
    fn positive_loading_selects_high_x() {
        let (x, cohorts) = selection_on_covariates(&logistic_spec(2.0, 2000, 6)).unwrap();
        let mean = |pred: &dyn Fn(Cohort) -> bool| {
            let v: Vec<f64> = x.iter().zip(&cohorts).filter(|(_, c)| pred(**c)).map(|(r, _)| r[0]).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let early = mean(&|c| c == Cohort::Treated(3));
        let never = mean(&|c: Cohort| c.is_never());
        assert!(early > never + 0.5);
        // Calibration holds the never-treated share near target.
        for seed in 0..20 {
            let (_, c) = selection_on_covariates(&logistic_spec(2.0, 400, seed)).unwrap();
            let share = c.iter().filter(|c| c.is_never()).count() as f64 / 400.0;
            assert!((share - 0.5).abs() < 0.1);
        }
    }

    #[test]
    fn ar1_lag_one_autocorrelation() {
        let spec = SimSpec {
            n_units: 60,
            n_periods: 200,
            cohorts: CohortScheme::Explicit { cohorts: vec![] },
            effect: EffectSpec::Constant { tau: 0.0 },
            error: ErrorSpec::Ar1 { rho: 0.6, sigma: 1.0 },
            covariates: vec![],
            unit_effect_sd: 0.0,
            time_effect_sd: 0.0,
            seed: 8,
            ..Default::default()
        };
        let (ds, _) = generate(&spec).unwrap();
        let mut acf = 0.0;
        for i in 0..ds.n_units() {
            let y = ds.outcome_row(i);
            let m = y.iter().sum::<f64>() / y.len() as f64;
            let c0: f64 = y.iter().map(|v| (v - m).powi(2)).sum();
            let c1: f64 = y.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
            acf += c1 / c0;
        }
        acf /= ds.n_units() as f64;
        // Average of per-series estimates has O(1/T) downward bias.
        assert!((acf - 0.6).abs() < 0.05, "acf = {acf}");
    }

    #[test]
    fn counts_are_nonnegative_integers() {
        let spec = SimSpec {
            count: Some(CountSpec {
                dispersion: 0.3,
                log_rate: 1.0,
                exposure_range: Some((1.0, 5.0)),
            }),
            ..Default::default()
        };
        let (ds, _) = generate(&spec).unwrap();
        assert!(ds.parts().outcome.iter().all(|v| *v >= 0.0 && v.fract() == 0.0));
        assert!(ds.has_exposure());
    }

    #[test]
    fn csv_round_trip() {
        let (ds, _) = generate(&SimSpec::default()).unwrap();
        let mut buf = Vec::new();
        ds.write_csv_to(&mut buf).unwrap();
        let schema = crate::panel::PanelSchema::canonical(&ds);
        let (back, _) = crate::panel::read_panel(buf.as_slice(), &schema).unwrap();
        assert_eq!(back, ds);
    }
}
