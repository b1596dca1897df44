//! Convex quadratic programs over a product of probability simplices,
//! `min 1/2 x'Hx + c'x` with `x_B >= 0, sum(x_B) = 1` for every block `B`.
//!
//! Solved by accelerated projected gradient (FISTA with function-value
//! restarts and backtracking) using exact Euclidean simplex projection.
//! Whenever the iterate's support looks settled, the equality-constrained
//! problem on that support is solved directly; the result is kept only if it
//! is feasible and passes the KKT check.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Faces up to this size get the minimum-norm Newton step.
const EIGEN_LIMIT: usize = 200;

/// Euclidean projection of `v` onto the probability simplex, in place.
pub fn project_simplex(v: &mut [f64]) {
    let n = v.len();
    if n == 0 {
        return;
    }
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cumsum += uk;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            theta = t;
        }
    }
    v.iter_mut().for_each(|x| *x = (*x - theta).max(0.0));
}

#[derive(Debug, Clone)]
pub struct SimplexQp {
    pub h: DMatrix<f64>,
    pub c: DVector<f64>,
    pub blocks: Vec<Range<usize>>,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Max-norm of the gradient mapping, relative to `max(1, |c|_inf)`.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct QpOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl SimplexQp {
    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.c.dot(x)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.h * x + &self.c
    }

    fn project(&self, x: &mut DVector<f64>) {
        for b in &self.blocks {
            project_simplex(&mut x.as_mut_slice()[b.clone()]);
        }
    }

    fn scale(&self) -> f64 {
        self.c.amax().max(1.0)
    }

    /// Relative max-norm of `(x - P(x - g/L)) * L`.
    pub fn kkt_residual(&self, x: &DVector<f64>, lipschitz: f64) -> f64 {
        let g = self.gradient(x);
        let mut y = x - &g / lipschitz;
        self.project(&mut y);
        (x - y).amax() * lipschitz / self.scale()
    }

    /// Largest eigenvalue of `H` by power iteration (deterministic start).
    pub fn lipschitz(&self) -> f64 {
        let n = self.dim();
        if n == 0 {
            return 1.0;
        }
        let mut v = DVector::from_fn(n, |i, _| 1.0 + (i % 7) as f64 * 0.1);
        v /= v.norm();
        let mut est = 0.0;
        for _ in 0..300 {
            let w = &self.h * &v;
            let nw = w.norm();
            if nw == 0.0 {
                break;
            }
            let next = v.dot(&w);
            v = w / nw;
            if (next - est).abs() <= 1e-10 * next.abs() {
                est = next;
                break;
            }
            est = next;
        }
        est.max(1e-12) * 1.02
    }

    /// Newton step from `x` within the face spanned by its support. Small
    /// faces use the minimum-norm step `-(PHP)^+ P g`, with `P` centering
    /// each block, so the result is an exact face minimizer even when that
    /// minimizer is not unique; large faces solve the bordered KKT system.
    /// `None` if the step leaves the feasible set.
    fn polish(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let support: Vec<usize> = (0..self.dim()).filter(|&i| x[i] > 1e-12).collect();
        let ns = support.len();
        let block_of: Vec<usize> = support
            .iter()
            .map(|i| self.blocks.iter().position(|r| r.contains(i)).expect("index in a block"))
            .collect();
        let g = self.gradient(x);
        let hs = DMatrix::from_fn(ns, ns, |a, b| self.h[(support[a], support[b])]);
        let gs = DVector::from_fn(ns, |a, _| g[support[a]]);
        let step = if ns <= EIGEN_LIMIT {
            let mut p = DMatrix::identity(ns, ns);
            for a in 0..ns {
                let size = block_of.iter().filter(|&&b| b == block_of[a]).count() as f64;
                for b in 0..ns {
                    if block_of[b] == block_of[a] {
                        p[(a, b)] -= 1.0 / size;
                    }
                }
            }
            let reduced = &p * &hs * &p;
            let pg = &p * &gs;
            let eig = reduced.symmetric_eigen();
            let tol = 1e-12 * eig.eigenvalues.amax();
            let mut d = DVector::zeros(ns);
            for (k, &lam) in eig.eigenvalues.iter().enumerate() {
                if lam > tol {
                    let v = eig.eigenvectors.column(k);
                    d -= v * (v.dot(&pg) / lam);
                }
            }
            &p * d
        } else {
            let nb = self.blocks.len();
            let mut k = DMatrix::zeros(ns + nb, ns + nb);
            k.view_mut((0, 0), (ns, ns)).copy_from(&hs);
            let mut rhs = DVector::zeros(ns + nb);
            rhs.rows_mut(0, ns).copy_from(&(-&gs));
            for a in 0..ns {
                k[(a, ns + block_of[a])] = 1.0;
                k[(ns + block_of[a], a)] = 1.0;
            }
            k.lu().solve(&rhs)?.rows(0, ns).into_owned()
        };
        if step.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mut out = DVector::zeros(self.dim());
        for (a, &i) in support.iter().enumerate() {
            let v = x[i] + step[a];
            if v < -1e-12 {
                return None;
            }
            out[i] = v.max(0.0);
        }
        for b in &self.blocks {
            let s: f64 = out.as_slice()[b.clone()].iter().sum();
            if !(s > 0.0) {
                return None;
            }
            out.as_mut_slice()[b.clone()].iter_mut().for_each(|v| *v /= s);
        }
        Some(out)
    }

    pub fn solve(&self, start: &[f64], opts: QpOptions) -> Result<QpSolution> {
        let n = self.dim();
        if start.len() != n {
            return Err(Error::Dimension("start vector has wrong length".into()));
        }
        let mut lip = self.lipschitz();
        let mut x = DVector::from_column_slice(start);
        self.project(&mut x);
        let finish = |x: DVector<f64>, residual: f64, iterations: usize| QpSolution {
            objective: self.value(&x),
            x: x.iter().copied().collect(),
            residual,
            iterations,
        };

        let mut res = self.kkt_residual(&x, lip);
        if res < opts.tol {
            return Ok(finish(x, res, 0));
        }
        if let Some(p) = self.polish(&x) {
            let r = self.kkt_residual(&p, lip);
            if r < opts.tol {
                return Ok(finish(p, r, 0));
            }
        }

        let mut y = x.clone();
        let mut t = 1.0f64;
        let mut fx = self.value(&x);
        let mut last_support: Vec<bool> = x.iter().map(|v| *v > 1e-12).collect();
        let mut stable = 0usize;
        for iter in 1..=opts.max_iter {
            let gy = self.gradient(&y);
            let fy = self.value(&y);
            let mut x_new;
            loop {
                x_new = &y - &gy / lip;
                self.project(&mut x_new);
                let d = &x_new - &y;
                let bound = fy + gy.dot(&d) + 0.5 * lip * d.norm_squared();
                if self.value(&x_new) <= bound + 1e-12 * (1.0 + bound.abs()) {
                    break;
                }
                lip *= 2.0;
            }
            let f_new = self.value(&x_new);
            if f_new > fx {
                // Restart momentum from the last iterate.
                y = x.clone();
                t = 1.0;
                continue;
            }
            let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            y = &x_new + (&x_new - &x) * ((t - 1.0) / t_new);
            x = x_new;
            t = t_new;
            fx = f_new;

            let support: Vec<bool> = x.iter().map(|v| *v > 1e-12).collect();
            if support == last_support {
                stable += 1;
            } else {
                stable = 0;
                last_support = support;
            }
            if iter % 10 == 0 || stable == 5 {
                res = self.kkt_residual(&x, lip);
                if res < opts.tol {
                    return Ok(finish(x, res, iter));
                }
                if stable == 5 || iter % 100 == 0 {
                    if let Some(p) = self.polish(&x) {
                        let r = self.kkt_residual(&p, lip);
                        if r < opts.tol && self.value(&p) <= fx + 1e-12 * (1.0 + fx.abs()) {
                            return Ok(finish(p, r, iter));
                        }
                    }
                }
            }
        }
        res = self.kkt_residual(&x, lip);
        if res < opts.tol {
            return Ok(finish(x, res, opts.max_iter));
        }
        Err(Error::NonConvergence {
            iterations: opts.max_iter,
            residual: res,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn projection_examples() {
        let mut v = vec![0.5, 0.5];
        project_simplex(&mut v);
        assert_eq!(v, vec![0.5, 0.5]);
        let mut v = vec![2.0, 0.0];
        project_simplex(&mut v);
        assert_eq!(v, vec![1.0, 0.0]);
        let mut v = vec![1.0, 1.0, 1.0];
        project_simplex(&mut v);
        assert!(v.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    proptest! {
        #[test]
        fn projection_is_feasible_and_optimal(v in prop::collection::vec(-5.0f64..5.0, 1..8)) {
            let mut p = v.clone();
            project_simplex(&mut p);
            prop_assert!(p.iter().all(|x| *x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            // Optimality: v - p is constant on the support and no larger off it.
            let tau: Vec<f64> = v.iter().zip(&p).filter(|(_, q)| **q > 0.0).map(|(a, q)| a - q).collect();
            for w in tau.windows(2) {
                prop_assert!((w[0] - w[1]).abs() < 1e-10);
            }
            for (a, q) in v.iter().zip(&p) {
                if *q == 0.0 {
                    prop_assert!(*a <= tau[0] + 1e-10);
                }
            }
        }
    }

    #[test]
    fn two_blocks_separable() {
        // (x0 - 1)^2 + x1^2 + (x2 - 0.2)^2 + (x3 - 0.6)^2 on two 2-simplices.
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.0, 2.0, 2.0]));
        let c = DVector::from_vec(vec![-2.0, 0.0, -0.4, -1.2]);
        let qp = SimplexQp {
            h,
            c,
            blocks: vec![0..2, 2..4],
        };
        let s = qp.solve(&[0.5; 4], QpOptions { tol: 1e-10, max_iter: 1000 }).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-10 && s.x[1].abs() < 1e-10);
        assert!((s.x[2] - 0.3).abs() < 1e-10 && (s.x[3] - 0.7).abs() < 1e-10);
    }

    #[test]
    fn degenerate_face_converges() {
        // (2 - 4 x1 - 4 x2)^2 with two identical donors: the minimizer is a
        // segment, x0 = 1/2 with x1 + x2 = 1/2.
        let a = DVector::from_vec(vec![0.0, 4.0, 4.0]);
        let qp = SimplexQp {
            h: &a * a.transpose() * 2.0,
            c: &a * -4.0,
            blocks: vec![0..3],
        };
        let s = qp.solve(&[0.6, 0.3, 0.1], QpOptions { tol: 1e-12, max_iter: 10_000 }).unwrap();
        assert!((s.x[0] - 0.5).abs() < 1e-10);
        assert!((s.objective + 4.0).abs() < 1e-10);
    }
}
