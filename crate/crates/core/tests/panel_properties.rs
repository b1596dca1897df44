use proptest::prelude::*;

use staggered::panel::{cohort_shares, read_panel, Cohort, PanelDataset, PanelParts};
use staggered::PanelSchema;

fn arb_panel() -> impl Strategy<Value = PanelDataset> {
    (2usize..8, 2u32..7).prop_flat_map(|(n, t)| {
        (
            prop::collection::vec(-1e6f64..1e6, n * t as usize),
            prop::collection::vec(prop::option::of(2..=t), n),
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(0.1f64..100.0, n),
        )
            .prop_map(move |(outcome, cohorts, x, exposure)| {
                PanelDataset::new(PanelParts {
                    units: (0..n).map(|i| format!("u{i}")).collect(),
                    n_periods: t,
                    outcome,
                    static_names: vec!["x".into()],
                    static_values: x,
                    tv_names: vec![],
                    tv_values: vec![],
                    cohort: cohorts.into_iter().map(|c| c.map_or(Cohort::Never, Cohort::Treated)).collect(),
                    exposure: Some(exposure),
                })
                .unwrap()
            })
    })
}

proptest! {
    #[test]
    fn csv_round_trip(ds in arb_panel()) {
        let mut buf = Vec::new();
        ds.write_csv_to(&mut buf).unwrap();
        let (back, _) = read_panel(buf.as_slice(), &PanelSchema::canonical(&ds)).unwrap();
        prop_assert_eq!(back, ds.clone());
        let json = serde_json::to_string(&ds).unwrap();
        let back: PanelDataset = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn shares_sum_to_one(ds in arb_panel()) {
        let t = ds.n_periods() as i64;
        for e in -t..t {
            if let Ok(w) = cohort_shares(&ds, e, ds.n_periods()) {
                prop_assert!((w.values().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(w.keys().all(|&g| g as i64 + e <= t));
            }
        }
    }
}
