//! Outcome cleaning: spline repair of negative increments and the
//! inverse-hyperbolic-sine count transform.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::PanelDataset;

/// What [`repair_negative_increments`] changed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub cells_interpolated: usize,
    pub cells_clamped: usize,
    pub series: Vec<SeriesRepair>,
    /// Monday of period 1 when dates were mapped to weeks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub week_origin: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeriesRepair {
    pub series: String,
    /// 1-based indices that were interpolated.
    pub interpolated: Vec<usize>,
    /// Subset of `interpolated` where the spline went below zero.
    pub clamped: Vec<usize>,
}

impl CleaningReport {
    fn absorb(&mut self, repair: SeriesRepair) {
        self.cells_interpolated += repair.interpolated.len();
        self.cells_clamped += repair.clamped.len();
        if !repair.interpolated.is_empty() {
            self.series.push(repair);
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.cells_interpolated == self.series.iter().map(|s| s.interpolated.len()).sum::<usize>()
            && self.cells_clamped == self.series.iter().map(|s| s.clamped.len()).sum::<usize>()
    }
}

/// Natural cubic spline through `(x_i, y_i)` with strictly increasing `x`.
#[derive(Debug, Clone)]
pub struct NaturalSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl NaturalSpline {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n != y.len() {
            return Err(Error::Dimension("spline x and y lengths differ".into()));
        }
        if n < 2 {
            return Err(Error::InsufficientSupport("spline needs at least two knots".into()));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("spline knots must be strictly increasing".into()));
        }
        let mut m = vec![0.0; n];
        if n > 2 {
            // Tridiagonal system for interior second derivatives (Thomas algorithm).
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 1..n - 1 {
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                diag[i - 1] = 2.0 * (h0 + h1);
                upper[i - 1] = h1;
                rhs[i - 1] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
            }
            for i in 1..k {
                let lower = x[i + 1] - x[i];
                let w = lower / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
            }
        }
        Ok(NaturalSpline { x, y, m })
    }

    /// Evaluates the spline; outside the knot range it continues linearly,
    /// consistent with zero curvature at the natural boundary.
    pub fn eval(&self, at: f64) -> f64 {
        let n = self.x.len();
        if at <= self.x[0] {
            return self.y[0] + self.slope_at(0) * (at - self.x[0]);
        }
        if at >= self.x[n - 1] {
            return self.y[n - 1] + self.slope_at(n - 1) * (at - self.x[n - 1]);
        }
        let i = match self.x.binary_search_by(|v| v.partial_cmp(&at).unwrap()) {
            Ok(i) => return self.y[i],
            Err(i) => i - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - at) / h;
        let b = (at - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    fn slope_at(&self, knot: usize) -> f64 {
        let n = self.x.len();
        if knot == 0 {
            let h = self.x[1] - self.x[0];
            (self.y[1] - self.y[0]) / h - h * (2.0 * self.m[0] + self.m[1]) / 6.0
        } else {
            let h = self.x[n - 1] - self.x[n - 2];
            (self.y[n - 1] - self.y[n - 2]) / h + h * (self.m[n - 2] + 2.0 * self.m[n - 1]) / 6.0
        }
    }
}

/// Replaces each negative entry of a per-period new-count series with the
/// natural cubic spline through the non-negative entries (indexed from 1),
/// clamped at zero.
pub fn repair_negative_increments(series: &[f64]) -> Result<(Vec<f64>, CleaningReport)> {
    let (out, repair) = repair_series("series", series)?;
    let mut report = CleaningReport::default();
    report.absorb(repair);
    Ok((out, report))
}

fn repair_series(name: &str, series: &[f64]) -> Result<(Vec<f64>, SeriesRepair)> {
    let mut repair = SeriesRepair {
        series: name.to_string(),
        ..Default::default()
    };
    if series.iter().all(|&v| v >= 0.0) {
        return Ok((series.to_vec(), repair));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = series
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= 0.0)
        .map(|(i, &v)| ((i + 1) as f64, v))
        .unzip();
    if xs.len() < 4 {
        return Err(Error::InsufficientSupport(format!(
            "series `{name}` has {} non-negative entries; spline repair needs at least 4",
            xs.len()
        )));
    }
    let spline = NaturalSpline::new(xs, ys)?;
    let mut out = series.to_vec();
    for (i, v) in out.iter_mut().enumerate() {
        if *v < 0.0 {
            let s = spline.eval((i + 1) as f64);
            repair.interpolated.push(i + 1);
            if s < 0.0 {
                repair.clamped.push(i + 1);
                *v = 0.0;
            } else {
                *v = s;
            }
        }
    }
    Ok((out, repair))
}

/// Repairs every unit's outcome series in a panel.
pub fn repair_panel(dataset: &PanelDataset) -> Result<(PanelDataset, CleaningReport)> {
    let mut report = CleaningReport::default();
    let mut outcome = Vec::with_capacity(dataset.n_units() * dataset.n_periods() as usize);
    for (i, unit) in dataset.units().iter().enumerate() {
        let (row, repair) = repair_series(unit, dataset.outcome_row(i))?;
        outcome.extend(row);
        report.absorb(repair);
    }
    Ok((dataset.with_outcome(outcome)?, report))
}

/// `ln(c + sqrt(c^2 + 1))` for a non-negative count.
pub fn asinh_outcome(count: f64) -> Result<f64> {
    if count.is_nan() || count < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "asinh transform expects a non-negative count, got {count}; repair negatives first"
        )));
    }
    Ok(count.asinh())
}

/// Applies [`asinh_outcome`] to every outcome cell.
pub fn asinh_panel(dataset: &PanelDataset) -> Result<PanelDataset> {
    let row: Vec<f64> = (0..dataset.n_units())
        .flat_map(|i| dataset.outcome_row(i).to_vec())
        .map(asinh_outcome)
        .collect::<Result<_>>()?;
    dataset.with_outcome(row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    /// Independent oracle: solve for all 4(n-1) piecewise-cubic coefficients
    /// of the natural spline as one dense linear system.
    fn dense_spline(x: &[f64], y: &[f64], at: f64) -> f64 {
        let n = x.len();
        let p = n - 1;
        let dim = 4 * p;
        let mut a = DMatrix::<f64>::zeros(dim, dim);
        let mut b = DVector::<f64>::zeros(dim);
        let mut row = 0;
        // piece i: c0 + c1 s + c2 s^2 + c3 s^3 with s = x - x_i
        for i in 0..p {
            let h = x[i + 1] - x[i];
            a[(row, 4 * i)] = 1.0;
            b[row] = y[i];
            row += 1;
            for k in 0..4 {
                a[(row, 4 * i + k)] = h.powi(k as i32);
            }
            b[row] = y[i + 1];
            row += 1;
        }
        for i in 0..p - 1 {
            let h = x[i + 1] - x[i];
            // first derivative continuity
            a[(row, 4 * i + 1)] = 1.0;
            a[(row, 4 * i + 2)] = 2.0 * h;
            a[(row, 4 * i + 3)] = 3.0 * h * h;
            a[(row, 4 * (i + 1) + 1)] = -1.0;
            row += 1;
            // second derivative continuity
            a[(row, 4 * i + 2)] = 2.0;
            a[(row, 4 * i + 3)] = 6.0 * h;
            a[(row, 4 * (i + 1) + 2)] = -2.0;
            row += 1;
        }
        a[(row, 2)] = 2.0;
        row += 1;
        let h = x[p] - x[p - 1];
        a[(row, 4 * (p - 1) + 2)] = 2.0;
        a[(row, 4 * (p - 1) + 3)] = 6.0 * h;
        let c = a.lu().solve(&b).unwrap();
        let i = (0..p).find(|&i| at >= x[i] && at <= x[i + 1]).unwrap();
        let s = at - x[i];
        (0..4).map(|k| c[4 * i + k] * s.powi(k as i32)).sum()
    }

    #[test]
    fn no_negatives_is_identity() {
        let (out, report) = repair_negative_increments(&[3.0, 5.0, 2.0, 4.0]).unwrap();
        assert_eq!(out, vec![3.0, 5.0, 2.0, 4.0]);
        assert_eq!(report.cells_interpolated, 0);
        assert_eq!(report.cells_clamped, 0);
    }

    #[test]
    fn constant_support_gives_constant() {
        let (out, report) = repair_negative_increments(&[0.0, 0.0, 0.0, -1.0, 0.0, 0.0]).unwrap();
        assert_eq!(out[3], 0.0);
        assert_eq!(report.cells_interpolated, 1);
        assert!(report.is_consistent());
    }

    #[test]
    fn collinear_support_gives_linear_value() {
        let x = [1.0, 2.0, 4.0, 5.0];
        let y = [2.0, 4.0, 8.0, 10.0];
        assert!((dense_spline(&x, &y, 3.0) - 6.0).abs() < 1e-12);
        let (out, report) = repair_negative_increments(&[2.0, 4.0, -9.0, 8.0, 10.0]).unwrap();
        assert!((out[2] - 6.0).abs() < 1e-12);
        assert_eq!(report.series[0].interpolated, vec![3]);
    }

    #[test]
    fn matches_dense_oracle_on_curved_data() {
        let x = [1.0, 2.0, 4.0, 5.0, 7.0, 8.0];
        let y = [1.0, 9.0, 2.0, 7.0, 3.0, 3.5];
        let s = NaturalSpline::new(x.to_vec(), y.to_vec()).unwrap();
        for at in [1.5, 3.0, 4.5, 6.0, 7.25] {
            assert!((s.eval(at) - dense_spline(&x, &y, at)).abs() < 1e-10, "at {at}");
        }
    }

    #[test]
    fn undershoot_is_clamped() {
        let series = [10.0, 0.0, -5.0, 0.0, 10.0, 10.0];
        let (out, report) = repair_negative_increments(&series).unwrap();
        assert_eq!(out[2], 0.0);
        assert_eq!(report.cells_clamped, 1);
    }

    #[test]
    fn too_little_support() {
        assert!(matches!(
            repair_negative_increments(&[1.0, -1.0, 2.0, -3.0, 4.0]),
            Err(Error::InsufficientSupport(_))
        ));
    }

    #[test]
    fn asinh_values() {
        assert_eq!(asinh_outcome(0.0).unwrap(), 0.0);
        // ln(1 + sqrt 2) to 20 digits.
        assert!((asinh_outcome(1.0).unwrap() - 0.881_373_587_019_543_025_2).abs() < 1e-12);
        assert!(asinh_outcome(10.0).unwrap() > asinh_outcome(9.0).unwrap());
        assert!(asinh_outcome(-0.5).is_err());
    }

    #[test]
    fn asinh_high_precision_reference() {
        // Reference values computed at 50-digit precision.
        let cases = [
            (10.0, 2.998_222_950_297_969_7),
            (1e6, 14.508_657_738_524_469),
        ];
        for (c, v) in cases {
            let got = asinh_outcome(c).unwrap();
            assert!((got - v).abs() <= 1e-12 * v.max(1.0), "{c}: {got} vs {v}");
        }
    }

    proptest! {
        #[test]
        fn repair_is_idempotent(series in prop::collection::vec(-5.0f64..20.0, 8..30)) {
            let nonneg = series.iter().filter(|v| **v >= 0.0).count();
            prop_assume!(nonneg >= 4);
            let (once, _) = repair_negative_increments(&series).unwrap();
            prop_assert!(once.iter().all(|v| *v >= 0.0));
            let (twice, report) = repair_negative_increments(&once).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert_eq!(report.cells_interpolated, 0);
            for (a, b) in series.iter().zip(&once) {
                if *a >= 0.0 { prop_assert_eq!(a, b); }
            }
        }

        #[test]
        fn asinh_bound(c in 0.0f64..1e9) {
            prop_assert!(asinh_outcome(c).unwrap() < (2.0 * c + 1.0).ln() + 1.0);
        }
    }
}
