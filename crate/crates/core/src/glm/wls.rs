use nalgebra::DVector;

use super::{
    cluster_index, cluster_scores, columns, rank_revealing, sandwich, spd_inverse, submatrix, validate_common,
    weighted_gram, Design, RegressionFit,
};
use crate::error::{Error, Result};

/// Weighted least squares with aliased-column detection and a one-way
/// cluster-robust covariance.
pub fn wls_fit(design: &Design, response: &[f64], weights: &[f64], clusters: &[usize]) -> Result<RegressionFit> {
    let n = response.len();
    validate_common(design, n, clusters)?;
    if weights.len() != n {
        return Err(Error::Dimension("weights length differs from response".into()));
    }
    if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidArgument("WLS weights must be positive and finite".into()));
    }
    if response.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("response contains non-finite values".into()));
    }

    let gram = weighted_gram(&design.x, weights);
    let kept = rank_revealing(&gram);
    if kept.is_empty() {
        return Err(Error::Numerical("every design column is degenerate".into()));
    }
    let aliased = (0..design.n_cols())
        .filter(|j| !kept.contains(j))
        .map(|j| design.names[j].clone())
        .collect();
    let x = columns(&design.x, &kept);
    let bread = spd_inverse(&submatrix(&gram, &kept))?;

    let wy = DVector::from_iterator(n, response.iter().zip(weights).map(|(y, w)| y * w));
    let xtwy = x.tr_mul(&wy);
    let beta = &bread * xtwy;
    let fitted: Vec<f64> = (&x * &beta).iter().copied().collect();

    let u: Vec<f64> = (0..n).map(|i| weights[i] * (response[i] - fitted[i])).collect();
    let (cidx, labels) = cluster_index(clusters);
    let scores = cluster_scores(&x, &u, &cidx, labels.len());
    let covariance = sandwich(&bread, &scores);
    let rss: f64 = (0..n).map(|i| weights[i] * (response[i] - fitted[i]).powi(2)).sum();

    Ok(RegressionFit {
        names: kept.iter().map(|&j| design.names[j].clone()).collect(),
        coefficients: beta.iter().copied().collect(),
        covariance,
        aliased,
        kept,
        n_obs: n,
        dispersion: 0.0,
        converged: true,
        iterations: 1,
        fitted,
        bread,
        clusters: labels,
        cluster_scores: scores,
        trace: vec![rss],
    })
}
