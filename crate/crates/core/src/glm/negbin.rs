use nalgebra::{DMatrix, DVector};

use super::{
    cluster_index, cluster_scores, columns, rank_revealing, sandwich, spd_inverse, validate_common, weighted_gram,
    Design, RegressionFit,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct NegBinOptions {
    /// Hold the dispersion at this value instead of estimating it.
    /// `Some(0.0)` gives Poisson regression.
    pub fixed_dispersion: Option<f64>,
    pub max_outer: usize,
    pub max_inner: usize,
    pub tol: f64,
}

impl Default for NegBinOptions {
    fn default() -> Self {
        NegBinOptions {
            fixed_dispersion: None,
            max_outer: 200,
            max_inner: 100,
            tol: 1e-10,
        }
    }
}

/// Parts of the NB2 log-likelihood that depend on the mean.
fn kernel_ll(y: &[f64], mu: &[f64], alpha: f64) -> f64 {
    y.iter()
        .zip(mu)
        .map(|(&yi, &m)| {
            let lm = if yi > 0.0 { yi * m.ln() } else { 0.0 };
            if alpha > 0.0 {
                lm - (yi + 1.0 / alpha) * (alpha * m).ln_1p()
            } else {
                lm - m
            }
        })
        .sum()
}

fn means(x: &DMatrix<f64>, beta: &DVector<f64>, offset: &[f64]) -> Vec<f64> {
    (x * beta)
        .iter()
        .zip(offset)
        .map(|(e, o)| (e + o).clamp(-700.0, 700.0).exp())
        .collect()
}

/// Fisher scoring for `beta` at a fixed dispersion.
fn irls(
    x: &DMatrix<f64>,
    y: &[f64],
    offset: &[f64],
    alpha: f64,
    mut beta: DVector<f64>,
    opts: &NegBinOptions,
) -> Result<(DVector<f64>, usize, bool)> {
    let n = y.len();
    let mut mu = means(x, &beta, offset);
    let mut ll = kernel_ll(y, &mu, alpha);
    for iter in 0..opts.max_inner {
        let w: Vec<f64> = mu.iter().map(|m| m / (1.0 + alpha * m)).collect();
        let u = DVector::from_iterator(n, (0..n).map(|i| (y[i] - mu[i]) / (1.0 + alpha * mu[i])));
        let score = x.tr_mul(&u);
        let info = weighted_gram(x, &w);
        let step = info
            .cholesky()
            .ok_or_else(|| Error::Numerical("negative binomial information is singular".into()))?
            .solve(&score);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let cand = &beta + &step * t;
            let cand_mu = means(x, &cand, offset);
            let cand_ll = kernel_ll(y, &cand_mu, alpha);
            if cand_ll >= ll - 1e-12 * ll.abs() {
                beta = cand;
                mu = cand_mu;
                ll = cand_ll;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved || (step.amax() * t) < opts.tol * (1.0 + beta.amax()) {
            return Ok((beta, iter + 1, true));
        }
    }
    Ok((beta, opts.max_inner, false))
}

/// Solves `sum (y - mu)^2 / (mu (1 + a mu)) = n - p` for `a >= 0`.
fn pearson_dispersion(y: &[f64], mu: &[f64], dof: f64) -> f64 {
    let stat = |a: f64| -> f64 {
        y.iter()
            .zip(mu)
            .map(|(&yi, &m)| (yi - m).powi(2) / (m * (1.0 + a * m)))
            .sum::<f64>()
            - dof
    };
    if stat(0.0) <= 0.0 {
        return 0.0;
    }
    let mut hi = 1.0;
    while stat(hi) > 0.0 && hi < 1e8 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if stat(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi.max(1e-300) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// NB2 regression `log mu = X beta + offset` with variance `mu + alpha mu^2`.
///
/// `beta` is fit by Fisher scoring at the current `alpha`; `alpha` is then
/// re-estimated from the Pearson moment condition, and the two steps are
/// alternated until both settle. A fit that has not settled after
/// `max_outer` rounds is returned with `converged = false`.
pub fn negbin_fit(
    design: &Design,
    response: &[f64],
    offset: &[f64],
    clusters: &[usize],
    opts: NegBinOptions,
) -> Result<RegressionFit> {
    let n = response.len();
    validate_common(design, n, clusters)?;
    if offset.len() != n {
        return Err(Error::Dimension("offset length differs from response".into()));
    }
    if offset.iter().any(|o| !o.is_finite()) {
        return Err(Error::InvalidArgument("offset must be finite".into()));
    }
    if response.iter().any(|&v| !(v >= 0.0) || v.fract() != 0.0) {
        return Err(Error::InvalidArgument("negative binomial response must be non-negative integers".into()));
    }
    if response.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidArgument("negative binomial response is all zero".into()));
    }
    if let Some(a) = opts.fixed_dispersion {
        if !(a >= 0.0) {
            return Err(Error::InvalidArgument("dispersion must be non-negative".into()));
        }
    }

    let kept = rank_revealing(&design.x.tr_mul(&design.x));
    let aliased = (0..design.n_cols())
        .filter(|j| !kept.contains(j))
        .map(|j| design.names[j].clone())
        .collect();
    let x = columns(&design.x, &kept);
    let names: Vec<String> = kept.iter().map(|&j| design.names[j].clone()).collect();
    let p = x.ncols();

    // Start from a weighted least-squares fit of log((y + ybar) / 2) - offset.
    let ybar = response.iter().sum::<f64>() / n as f64;
    let mu0: Vec<f64> = response.iter().map(|y| 0.5 * (y + ybar)).collect();
    let z = DVector::from_iterator(n, (0..n).map(|i| (mu0[i].ln() - offset[i]) * mu0[i]));
    let mut beta = weighted_gram(&x, &mu0)
        .cholesky()
        .ok_or_else(|| Error::Numerical("initial weighted design is singular".into()))?
        .solve(&x.tr_mul(&z));

    let mut alpha = opts.fixed_dispersion.unwrap_or(0.0);
    let mut converged = false;
    let mut iterations = 0;
    let mut trace = Vec::new();
    for outer in 0..opts.max_outer {
        iterations = outer + 1;
        let (b, _, inner_ok) = irls(&x, response, offset, alpha, beta.clone(), &opts)?;
        let db = (&b - &beta).amax();
        beta = b;
        let mu = means(&x, &beta, offset);
        trace.push(kernel_ll(response, &mu, alpha));
        if opts.fixed_dispersion.is_some() {
            converged = inner_ok;
            break;
        }
        let new_alpha = pearson_dispersion(response, &mu, (n - p) as f64);
        let da = (new_alpha - alpha).abs();
        alpha = new_alpha;
        if outer > 0 && inner_ok && da < 1e-8 * (1.0 + alpha) && db < 1e-8 * (1.0 + beta.amax()) {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("negative binomial fit did not converge after {iterations} outer iterations (alpha = {alpha})");
    }

    let mu = means(&x, &beta, offset);
    let w: Vec<f64> = mu.iter().map(|m| m / (1.0 + alpha * m)).collect();
    let bread = spd_inverse(&weighted_gram(&x, &w))?;
    let u: Vec<f64> = (0..n).map(|i| (response[i] - mu[i]) / (1.0 + alpha * mu[i])).collect();
    let (cidx, labels) = cluster_index(clusters);
    let scores = cluster_scores(&x, &u, &cidx, labels.len());
    let covariance = sandwich(&bread, &scores);

    Ok(RegressionFit {
        names,
        coefficients: beta.iter().copied().collect(),
        covariance,
        aliased,
        kept,
        n_obs: n,
        dispersion: alpha,
        converged,
        iterations,
        fitted: mu,
        bread,
        clusters: labels,
        cluster_scores: scores,
        trace,
    })
}
