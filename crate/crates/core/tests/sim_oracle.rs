use staggered::benchmark::rep_seed;
use staggered::sim::{generate, CohortScheme, CohortSize, EffectSpec, ErrorSpec, SimSpec};

/// Naive difference in mean outcome changes, cohort `g` against never-treated.
fn naive(ds: &staggered::PanelDataset, g: u32, t: u32) -> f64 {
    let mean_change = |units: Vec<usize>| {
        units.iter().map(|&i| ds.y(i, t) - ds.y(i, g - 1)).sum::<f64>() / units.len() as f64
    };
    mean_change(ds.units_in_cohort(g)) - mean_change(ds.never_treated_units())
}

#[test]
fn naive_did_is_unbiased_for_truth() {
    let base = SimSpec {
        n_units: 30,
        n_periods: 8,
        cohorts: CohortScheme::Explicit {
            cohorts: vec![CohortSize { period: 4, size: 8 }, CohortSize { period: 6, size: 8 }],
        },
        effect: EffectSpec::Linear {
            intercept: 0.5,
            slope: 0.25,
        },
        error: ErrorSpec::Ar1 { rho: 0.5, sigma: 1.0 },
        covariates: vec![],
        ..Default::default()
    };
    let cells: Vec<(u32, u32)> = [4u32, 6].iter().flat_map(|&g| (g..=8).map(move |t| (g, t))).collect();
    let reps = 500;
    let mut errors = vec![Vec::with_capacity(reps); cells.len()];
    for rep in 0..reps {
        let (ds, truth) = generate(&SimSpec {
            seed: rep_seed(5, rep),
            ..base.clone()
        })
        .unwrap();
        for (k, &(g, t)) in cells.iter().enumerate() {
            errors[k].push(naive(&ds, g, t) - truth.att(g, t).unwrap());
        }
    }
    for (k, e) in errors.iter().enumerate() {
        let n = e.len() as f64;
        let m = e.iter().sum::<f64>() / n;
        let sd = (e.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(m.abs() < 3.0 * sd / n.sqrt(), "cell {:?}: mean error {m}, mc se {}", cells[k], sd / n.sqrt());
    }
}
