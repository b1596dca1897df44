use staggered::drdid::{att_surface, group_time_att, ControlGroup, DrDidOptions, DrMethod};
use staggered::panel::{PanelDataset, PanelParts};
use staggered::par::Execution;
use staggered::sim::{generate, SimSpec};

fn panel(seed: u64) -> PanelDataset {
    let spec = SimSpec {
        n_units: 40,
        n_periods: 12,
        cohorts: staggered::sim::CohortScheme::Explicit {
            cohorts: vec![
                staggered::sim::CohortSize { period: 4, size: 8 },
                staggered::sim::CohortSize { period: 7, size: 8 },
                staggered::sim::CohortSize { period: 10, size: 8 },
            ],
        },
        seed,
        ..Default::default()
    };
    generate(&spec).unwrap().0
}

/// Reorders units by `order` (new position k holds old unit `order[k]`).
fn permute(ds: &PanelDataset, order: &[usize]) -> PanelDataset {
    let p = ds.parts();
    let t = p.n_periods as usize;
    let ns = p.static_names.len();
    let ntv = p.tv_names.len();
    let rows = |v: &[f64], width: usize| -> Vec<f64> {
        order.iter().flat_map(|&i| v[i * width..(i + 1) * width].to_vec()).collect()
    };
    PanelDataset::new(PanelParts {
        units: order.iter().map(|&i| p.units[i].clone()).collect(),
        n_periods: p.n_periods,
        outcome: rows(&p.outcome, t),
        static_names: p.static_names.clone(),
        static_values: rows(&p.static_values, ns),
        tv_names: p.tv_names.clone(),
        tv_values: rows(&p.tv_values, t * ntv),
        cohort: order.iter().map(|&i| p.cohort[i]).collect(),
        exposure: p.exposure.as_ref().map(|e| order.iter().map(|&i| e[i]).collect()),
    })
    .unwrap()
}

#[test]
fn methods_coincide_without_covariates() {
    let ds = panel(1);
    for group in [ControlGroup::NeverTreated, ControlGroup::NotYetTreated] {
        let run = |method| {
            att_surface(
                &ds,
                &DrDidOptions {
                    control_group: group,
                    method,
                    ..Default::default()
                },
                Execution::Sequential,
            )
        };
        let (dr, or, ipw) = (run(DrMethod::Dr), run(DrMethod::Or), run(DrMethod::Ipw));
        assert!(!dr.cells.is_empty());
        assert_eq!(dr.cells.len(), or.cells.len());
        for ((a, b), c) in dr.cells.iter().zip(&or.cells).zip(&ipw.cells) {
            assert!((a.estimate - b.estimate).abs() < 1e-10);
            assert!((a.estimate - c.estimate).abs() < 1e-10);
        }
    }
}

#[test]
fn translation_invariance() {
    let ds = panel(2);
    let shifted = ds.map_outcome(|y| y + 1234.5).unwrap();
    let opts = DrDidOptions {
        covariates: vec!["x".into()],
        ..Default::default()
    };
    let a = att_surface(&ds, &opts, Execution::Sequential);
    let b = att_surface(&shifted, &opts, Execution::Sequential);
    assert_eq!(a.cells.len(), b.cells.len());
    for (x, y) in a.cells.iter().zip(&b.cells) {
        assert!((x.estimate - y.estimate).abs() < 1e-10, "({}, {})", x.g, x.t);
        assert!((x.se - y.se).abs() < 1e-10);
    }
}

#[test]
fn relabeling_permutes_influence_only() {
    let ds = panel(3);
    let n = ds.n_units();
    let order: Vec<usize> = (0..n).map(|k| (k * 7 + 3) % n).collect();
    let perm = permute(&ds, &order);
    let opts = DrDidOptions {
        covariates: vec!["x".into()],
        ..Default::default()
    };
    for (g, t) in [(4, 6), (7, 5), (10, 12)] {
        let a = group_time_att(&ds, g, t, &opts).unwrap();
        let b = group_time_att(&perm, g, t, &opts).unwrap();
        assert!((a.estimate - b.estimate).abs() < 1e-10);
        assert!((a.se - b.se).abs() < 1e-10);
        for (k, &i) in order.iter().enumerate() {
            assert!((b.influence[k] - a.influence[i]).abs() < 1e-10);
        }
    }
}

#[test]
fn parallel_surface_matches_sequential() {
    let ds = panel(4);
    let opts = DrDidOptions::default();
    let a = att_surface(&ds, &opts, Execution::Parallel);
    let b = att_surface(&ds, &opts, Execution::Sequential);
    assert_eq!(a.cells, b.cells);
    assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
}
