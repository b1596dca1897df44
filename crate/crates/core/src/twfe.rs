//! Dummy-encoded two-way fixed-effects designs over a balanced panel, rows in
//! unit-major order `(unit, t)`.

use nalgebra::DMatrix;

use crate::glm::Design;
use crate::panel::{CovariateRef, PanelDataset};

/// Column builder for a stacked panel design.
pub(crate) struct TwfeBuilder<'a> {
    ds: &'a PanelDataset,
    names: Vec<String>,
    cols: Vec<Vec<f64>>,
}

impl<'a> TwfeBuilder<'a> {
    /// Intercept, unit effects (first unit dropped) and period effects
    /// (period 1 dropped).
    pub fn new(ds: &'a PanelDataset) -> Self {
        let n = ds.n_units();
        let t_len = ds.n_periods() as usize;
        let rows = n * t_len;
        let mut b = TwfeBuilder {
            ds,
            names: vec!["(Intercept)".into()],
            cols: vec![vec![1.0; rows]],
        };
        for u in 1..n {
            let mut c = vec![0.0; rows];
            c[u * t_len..(u + 1) * t_len].iter_mut().for_each(|v| *v = 1.0);
            b.names.push(format!("unit[{}]", ds.units()[u]));
            b.cols.push(c);
        }
        for t in 2..=ds.n_periods() {
            let mut c = vec![0.0; rows];
            for u in 0..n {
                c[u * t_len + t as usize - 1] = 1.0;
            }
            b.names.push(format!("t[{t}]"));
            b.cols.push(c);
        }
        b
    }

    pub fn rows(&self) -> usize {
        self.ds.n_units() * self.ds.n_periods() as usize
    }

    pub fn covariate(&mut self, name: &str, cref: CovariateRef) {
        let t_len = self.ds.n_periods();
        let c = (0..self.rows())
            .map(|r| {
                let (u, t) = (r / t_len as usize, (r % t_len as usize) as u32 + 1);
                self.ds.covariate(cref, u, t)
            })
            .collect();
        self.names.push(name.to_string());
        self.cols.push(c);
    }

    /// Indicator of rows where `pred(unit, t)` holds.
    pub fn indicator(&mut self, name: String, pred: impl Fn(usize, u32) -> bool) -> bool {
        let t_len = self.ds.n_periods();
        let c: Vec<f64> = (0..self.rows())
            .map(|r| {
                let (u, t) = (r / t_len as usize, (r % t_len as usize) as u32 + 1);
                if pred(u, t) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let any = c.iter().any(|&v| v != 0.0);
        if any {
            self.names.push(name);
            self.cols.push(c);
        }
        any
    }

    pub fn build(self) -> Design {
        let rows = self.rows();
        let mut x = DMatrix::zeros(rows, self.cols.len());
        for (j, c) in self.cols.iter().enumerate() {
            x.column_mut(j).copy_from_slice(c);
        }
        Design { names: self.names, x }
    }
}

/// Outcome vector and unit cluster labels in design row order.
pub(crate) fn stacked(ds: &PanelDataset) -> (Vec<f64>, Vec<usize>) {
    let t_len = ds.n_periods() as usize;
    let mut y = Vec::with_capacity(ds.n_units() * t_len);
    let mut cl = Vec::with_capacity(ds.n_units() * t_len);
    for u in 0..ds.n_units() {
        y.extend_from_slice(ds.outcome_row(u));
        cl.extend(std::iter::repeat_n(u, t_len));
    }
    (y, cl)
}
