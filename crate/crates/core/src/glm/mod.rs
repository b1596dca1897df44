//! Regression kernels shared by the estimators: weighted least squares,
//! logistic regression and NB2 negative binomial regression with an offset.
//!
//! Every fit reports a one-way cluster-robust sandwich covariance
//! `B (sum_c s_c s_c') B` where `B` is the inverse weighted information and
//! `s_c` the summed score contributions of cluster `c`. No small-sample
//! correction is applied, so singleton clusters give HC0.

mod logit;
mod negbin;
mod wls;

pub use logit::{logit_fit, LogitOptions};
pub use negbin::{negbin_fit, NegBinOptions};
pub use wls::wls_fit;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative pivot tolerance for the rank-revealing elimination.
pub const PIVOT_TOL: f64 = 1e-10;

/// A named design matrix (rows are observations).
#[derive(Debug, Clone)]
pub struct Design {
    pub names: Vec<String>,
    pub x: DMatrix<f64>,
}

impl Design {
    pub fn new(names: Vec<String>, x: DMatrix<f64>) -> Result<Self> {
        if names.len() != x.ncols() {
            return Err(Error::Dimension(format!(
                "{} column names for {} columns",
                names.len(),
                x.ncols()
            )));
        }
        Ok(Design { names, x })
    }

    /// Builds a design column by column.
    pub fn from_columns(columns: Vec<(String, Vec<f64>)>, n_rows: usize) -> Result<Self> {
        let mut x = DMatrix::zeros(n_rows, columns.len());
        let mut names = Vec::with_capacity(columns.len());
        for (j, (name, col)) in columns.into_iter().enumerate() {
            if col.len() != n_rows {
                return Err(Error::Dimension(format!("column `{name}` has {} rows, expected {n_rows}", col.len())));
            }
            x.set_column(j, &DVector::from_vec(col));
            names.push(name);
        }
        Ok(Design { names, x })
    }

    /// Intercept-only design.
    pub fn intercept(n_rows: usize) -> Self {
        Design {
            names: vec!["(Intercept)".into()],
            x: DMatrix::from_element(n_rows, 1, 1.0),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.x.ncols()
    }
}

/// Result of any of the kernels.
#[derive(Debug, Clone)]
pub struct RegressionFit {
    /// Names of retained (non-aliased) columns.
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Cluster-robust covariance over retained columns.
    pub covariance: DMatrix<f64>,
    /// Columns dropped by the rank-revealing elimination.
    pub aliased: Vec<String>,
    /// Indices of retained columns in the original design.
    pub kept: Vec<usize>,
    pub n_obs: usize,
    /// NB2 dispersion `alpha` (variance `mu + alpha mu^2`); zero otherwise.
    pub dispersion: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Fitted means on the response scale.
    pub fitted: Vec<f64>,
    /// Inverse weighted information `(X'WX)^{-1}` over retained columns.
    pub bread: DMatrix<f64>,
    /// Distinct cluster labels, ascending; rows of `cluster_scores`.
    pub clusters: Vec<usize>,
    /// Summed score contributions per cluster (clusters x retained).
    pub cluster_scores: DMatrix<f64>,
    /// Objective value after each iteration (log-likelihood for the GLMs).
    pub trace: Vec<f64>,
}

impl RegressionFit {
    fn position(&self, name: &str) -> Result<usize> {
        if let Some(k) = self.names.iter().position(|n| n == name) {
            return Ok(k);
        }
        if self.aliased.iter().any(|n| n == name) {
            return Err(Error::Aliased(name.to_string()));
        }
        Err(Error::UnknownCoefficient(name.to_string()))
    }

    pub fn coefficient(&self, name: &str) -> Result<f64> {
        Ok(self.coefficients[self.position(name)?])
    }

    pub fn se(&self, name: &str) -> Result<f64> {
        let k = self.position(name)?;
        Ok(self.covariance[(k, k)].max(0.0).sqrt())
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.position(name)
    }

    /// Per-cluster influence values of coefficient `k`: `N_c * (B s_c)_k`, so
    /// that `sqrt(mean(psi^2) / N_c)` equals the sandwich standard error.
    pub fn cluster_influence(&self, k: usize) -> Vec<f64> {
        let nc = self.clusters.len() as f64;
        let col = self.bread.column(k);
        (0..self.cluster_scores.nrows())
            .map(|c| nc * self.cluster_scores.row(c).dot(&col.transpose()))
            .collect()
    }
}

/// Incremental Cholesky in column order; a column is aliased when its
/// residual diagonal falls below `PIVOT_TOL` times its own diagonal.
pub(crate) fn rank_revealing(xtwx: &DMatrix<f64>) -> Vec<usize> {
    let p = xtwx.nrows();
    let mut kept: Vec<usize> = Vec::with_capacity(p);
    // Rows of the lower Cholesky factor for kept columns.
    let mut l: Vec<Vec<f64>> = Vec::with_capacity(p);
    for j in 0..p {
        let ajj = xtwx[(j, j)];
        if !(ajj > 0.0) {
            continue;
        }
        let mut v = Vec::with_capacity(kept.len());
        for (r, &kr) in kept.iter().enumerate() {
            let mut s = xtwx[(kr, j)];
            for q in 0..r {
                s -= l[r][q] * v[q];
            }
            v.push(s / l[r][r]);
        }
        let d = ajj - v.iter().map(|a| a * a).sum::<f64>();
        if d > PIVOT_TOL * ajj {
            v.push(d.sqrt());
            l.push(v);
            kept.push(j);
        }
    }
    kept
}

pub(crate) fn submatrix(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |r, c| a[(idx[r], idx[c])])
}

pub(crate) fn columns(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    if idx.len() == x.ncols() {
        return x.clone();
    }
    x.select_columns(idx)
}

/// `X' diag(w) X` for non-negative weights.
pub(crate) fn weighted_gram(x: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut xw = x.clone();
    for (i, wi) in w.iter().enumerate() {
        xw.row_mut(i).scale_mut(wi.sqrt());
    }
    xw.tr_mul(&xw)
}

/// Inverse of a symmetric positive definite matrix.
pub(crate) fn spd_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("weighted information matrix is not positive definite".into()))?;
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

pub(crate) fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

/// Dense cluster index per observation plus the sorted distinct labels.
pub(crate) fn cluster_index(clusters: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut labels: Vec<usize> = clusters.to_vec();
    labels.sort_unstable();
    labels.dedup();
    let idx = clusters
        .iter()
        .map(|c| labels.binary_search(c).expect("label present"))
        .collect();
    (idx, labels)
}

/// Sums per-observation score rows `x_i * u_i` into clusters.
pub(crate) fn cluster_scores(x: &DMatrix<f64>, u: &[f64], cluster_idx: &[usize], n_clusters: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(n_clusters, x.ncols());
    for i in 0..x.nrows() {
        let c = cluster_idx[i];
        if u[i] == 0.0 {
            continue;
        }
        for j in 0..x.ncols() {
            s[(c, j)] += x[(i, j)] * u[i];
        }
    }
    s
}

pub(crate) fn sandwich(bread: &DMatrix<f64>, scores: &DMatrix<f64>) -> DMatrix<f64> {
    let meat = scores.tr_mul(scores);
    let mut v = bread * meat * bread;
    symmetrize(&mut v);
    v
}

/// Incidence-rate ratio with a Wald interval on the log scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Irr {
    pub ratio: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// `exp(beta)` with interval `exp(beta -/+ 1.96 se)`.
pub fn irr(fit: &RegressionFit, name: &str) -> Result<Irr> {
    let b = fit.coefficient(name)?;
    let se = fit.se(name)?;
    Ok(Irr {
        ratio: b.exp(),
        ci_low: (b - 1.96 * se).exp(),
        ci_high: (b + 1.96 * se).exp(),
    })
}

pub(crate) fn validate_common(design: &Design, n: usize, clusters: &[usize]) -> Result<()> {
    if design.n_rows() == 0 {
        return Err(Error::InvalidArgument("design has zero rows".into()));
    }
    if design.n_rows() != n || clusters.len() != n {
        return Err(Error::Dimension(format!(
            "design has {} rows, response {n}, clusters {}",
            design.n_rows(),
            clusters.len()
        )));
    }
    if design.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("design contains non-finite values".into()));
    }
    Ok(())
}
