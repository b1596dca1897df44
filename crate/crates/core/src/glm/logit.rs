use nalgebra::{DMatrix, DVector};

use super::{
    cluster_index, cluster_scores, columns, rank_revealing, sandwich, spd_inverse, validate_common,
    weighted_gram, Design, RegressionFit,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LogitOptions {
    pub max_iter: usize,
    /// Stop once the max-norm of the score falls below this.
    pub grad_tol: f64,
    /// Linear predictor magnitude treated as divergence.
    pub separation_eta: f64,
}

impl Default for LogitOptions {
    fn default() -> Self {
        LogitOptions {
            max_iter: 100,
            grad_tol: 1e-9,
            separation_eta: 30.0,
        }
    }
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn log_likelihood(y: &[f64], eta: &DVector<f64>) -> f64 {
    y.iter()
        .zip(eta.iter())
        .map(|(&yi, &e)| {
            // log(1 + exp(e)) computed stably
            let softplus = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
            yi * e - softplus
        })
        .sum()
}

/// Logistic regression by Newton-Raphson with step halving.
///
/// Errors with [`Error::Separation`] when the linear predictor diverges, which
/// is how an overlap violation shows up in the propensity model.
pub fn logit_fit(design: &Design, response: &[f64], clusters: &[usize], opts: LogitOptions) -> Result<RegressionFit> {
    let n = response.len();
    validate_common(design, n, clusters)?;
    if response.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument("logit response must be 0/1".into()));
    }
    let ones = response.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == n {
        return Err(Error::InvalidArgument("logit response needs both classes".into()));
    }

    let kept = rank_revealing(&design.x.tr_mul(&design.x));
    let aliased = (0..design.n_cols())
        .filter(|j| !kept.contains(j))
        .map(|j| design.names[j].clone())
        .collect();
    let x: DMatrix<f64> = columns(&design.x, &kept);
    let names: Vec<String> = kept.iter().map(|&j| design.names[j].clone()).collect();
    let p = x.ncols();

    let mut beta = DVector::zeros(p);
    let mut eta = &x * &beta;
    let mut ll = log_likelihood(response, &eta);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..opts.max_iter {
        iterations = iter + 1;
        let probs: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let resid = DVector::from_iterator(n, response.iter().zip(&probs).map(|(y, p)| y - p));
        let grad = x.tr_mul(&resid);
        // Score of the mean log-likelihood.
        if grad.amax() / (n as f64) < opts.grad_tol {
            converged = true;
            break;
        }
        let w: Vec<f64> = probs.iter().map(|p| (p * (1.0 - p)).max(1e-300)).collect();
        let info = weighted_gram(&x, &w);
        let step = match info.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => return Err(separation(&names, &beta)),
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &beta + &step * t;
            let cand_eta = &x * &cand;
            let cand_ll = log_likelihood(response, &cand_eta);
            if cand_ll >= ll {
                beta = cand;
                eta = cand_eta;
                ll = cand_ll;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        trace.push(ll);
        if eta.amax() > opts.separation_eta {
            return Err(separation(&names, &beta));
        }
        if !accepted || step.amax() * t < 1e-13 * (1.0 + beta.amax()) {
            // No ascent direction left at machine precision.
            converged = true;
            break;
        }
    }

    let probs: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
    let w: Vec<f64> = probs.iter().map(|p| p * (1.0 - p)).collect();
    let info = weighted_gram(&x, &w);
    let bread = spd_inverse(&info)?;
    let u: Vec<f64> = response.iter().zip(&probs).map(|(y, p)| y - p).collect();
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
        dispersion: 0.0,
        converged,
        iterations,
        fitted: probs,
        bread,
        clusters: labels,
        cluster_scores: scores,
        trace,
    })
}

fn separation(names: &[String], beta: &DVector<f64>) -> Error {
    // Blame the largest non-intercept coefficient when there is one.
    let candidates: Vec<usize> = (0..names.len()).filter(|&k| names[k] != "(Intercept)").collect();
    let pool = if candidates.is_empty() { (0..names.len()).collect() } else { candidates };
    let k = pool
        .into_iter()
        .max_by(|&a, &b| beta[a].abs().total_cmp(&beta[b].abs()))
        .unwrap_or(0);
    Error::Separation {
        column: names.get(k).cloned().unwrap_or_default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<usize> {
        (0..n).collect()
    }

    #[test]
    fn balanced_constant_design() {
        let y = [0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
        let f = logit_fit(&Design::intercept(6), &y, &ids(6), LogitOptions::default()).unwrap();
        assert!(f.coefficients[0].abs() < 1e-12);
        assert!(f.fitted.iter().all(|p| (p - 0.5).abs() < 1e-12));
    }

    #[test]
    fn intercept_only_log_odds() {
        // 1 success per 3 failures: MLE intercept is ln(1/3).
        let y = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        let f = logit_fit(&Design::intercept(8), &y, &ids(8), LogitOptions::default()).unwrap();
        assert!((f.coefficients[0] - (1.0f64 / 3.0).ln()).abs() < 1e-10);
        assert!(f.converged);
    }

    #[test]
    fn separation_detected() {
        let x = vec![-2.0, -1.5, -1.0, -0.5, 0.5, 1.0, 1.5, 2.0];
        let y = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        let d = Design::from_columns(vec![("(Intercept)".into(), vec![1.0; 8]), ("dose".into(), x)], 8).unwrap();
        match logit_fit(&d, &y, &ids(8), LogitOptions::default()) {
            Err(Error::Separation { column }) => assert_eq!(column, "dose"),
            other => panic!("expected separation, got {other:?}"),
        }
    }

    #[test]
    fn likelihood_never_decreases() {
        let x: Vec<f64> = (0..40).map(|i| (i as f64 - 20.0) / 7.0).collect();
        let y: Vec<f64> = (0..40).map(|i| if (i * 37 + 11) % 10 < 3 + i / 8 { 1.0 } else { 0.0 }).collect();
        let d = Design::from_columns(vec![("(Intercept)".into(), vec![1.0; 40]), ("x".into(), x)], 40).unwrap();
        let f = logit_fit(&d, &y, &ids(40), LogitOptions::default()).unwrap();
        assert!(f.trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(f.fitted.iter().all(|p| *p > 0.0 && *p < 1.0));
        assert!(f.converged);
    }
}
