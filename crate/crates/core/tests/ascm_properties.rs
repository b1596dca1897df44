use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use staggered::ascm::{fit_partially_pooled, scm_weights, AscmOptions, ScmProblem};
use staggered::benchmark::rep_seed;
use staggered::par::Execution;
use staggered::sim::{generate, CohortScheme, CohortSize, EffectSpec, SimSpec};

fn small(seed: u64) -> SimSpec {
    SimSpec {
        n_units: 30,
        n_periods: 20,
        cohorts: CohortScheme::Explicit {
            cohorts: vec![
                CohortSize { period: 10, size: 4 },
                CohortSize { period: 12, size: 4 },
                CohortSize { period: 14, size: 4 },
            ],
        },
        effect: EffectSpec::Constant { tau: 0.0 },
        seed,
        ..Default::default()
    }
}

#[test]
fn weights_are_feasible() {
    let (ds, _) = generate(&small(1)).unwrap();
    for nu in [0.0, 0.5, 1.0] {
        let fit = fit_partially_pooled(
            &ds,
            &AscmOptions {
                nu,
                window: (-5, 5),
                ..Default::default()
            },
        )
        .unwrap();
        for w in &fit.weights {
            assert!(w.weights.iter().all(|v| *v >= -1e-8));
            assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        }
        assert!(fit.q_pool.is_finite() && fit.q_sep.is_finite());
    }
}

#[test]
fn imbalance_grows_with_penalty() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let a = DMatrix::from_fn(6, 5, |_, _| rng.random::<f64>() * 4.0);
        let target: Vec<f64> = (0..6).map(|_| rng.random::<f64>() * 4.0).collect();
        let mut last = -1.0;
        for lambda in [0.0, 0.1, 1.0, 10.0] {
            let p = ScmProblem::from_lags(target.clone(), a.clone(), lambda).unwrap();
            let s = scm_weights(&p, 10_000, 1e-10).unwrap();
            let imbalance: f64 = p.imbalance(&s.weights).iter().map(|v| v * v).sum::<f64>() / 6.0;
            assert!(imbalance >= last - 1e-9, "lambda {lambda}: {imbalance} < {last}");
            last = imbalance;
        }
    }
}

#[test]
fn zero_effect_mostly_insignificant() {
    let mut inside = 0;
    let mut total = 0;
    for rep in 0..200 {
        let (ds, _) = generate(&small(rep_seed(33, rep))).unwrap();
        let fit = fit_partially_pooled(
            &ds,
            &AscmOptions {
                window: (0, 6),
                execution: Execution::Parallel,
                ..Default::default()
            },
        )
        .unwrap();
        for a in fit.att.iter().filter(|a| a.k >= 0) {
            if let Some(se) = a.se {
                total += 1;
                inside += (a.estimate.abs() < 3.0 * se) as usize;
            }
        }
    }
    let rate = inside as f64 / total as f64;
    assert!(rate >= 0.90, "{inside}/{total}");
}
