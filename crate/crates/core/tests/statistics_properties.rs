//! Property tests of the spacing statistics.

mod common;

use proptest::prelude::*;
use rand::Rng;
use rand_distr::Exp1;
use tbh_core::spectral::{
    mean_square_deviation, mean_square_deviation_on, spacings_from_phases, Grid, ReferenceCdf,
    SpacingSample,
};

fn sample() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..10.0, 1..400).prop_filter("positive total", |v| v.iter().sum::<f64>() > 0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn deviation_is_bounded(raw in sample()) {
        let s = SpacingSample::from_spacings(raw).unwrap();
        for r in [ReferenceCdf::Poisson, ReferenceCdf::WignerDyson] {
            let d = mean_square_deviation(&s, r);
            prop_assert!((0.0..=1.0).contains(&d), "{d}");
        }
    }

    #[test]
    fn deviation_ignores_order(raw in sample(), seed: u64) {
        let mut shuffled = raw.clone();
        let mut rng = common::rng(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        let a = SpacingSample::from_spacings(raw).unwrap();
        let b = SpacingSample::from_spacings(shuffled).unwrap();
        for r in [ReferenceCdf::Poisson, ReferenceCdf::WignerDyson] {
            let (x, y) = (mean_square_deviation(&a, r), mean_square_deviation(&b, r));
            // the unit-mean rescaling may round differently after a shuffle
            prop_assert!((x - y).abs() < 1e-12, "{x} {y}");
        }
    }

    #[test]
    fn references_never_both_fit(raw in sample()) {
        let s = SpacingSample::from_spacings(raw).unwrap();
        let total = mean_square_deviation(&s, ReferenceCdf::Poisson) + mean_square_deviation(&s, ReferenceCdf::WignerDyson);
        prop_assert!(total > 0.0);
    }

    #[test]
    fn grid_refinement_is_small(seed: u64, n in 100usize..3000) {
        let mut rng = common::rng(seed);
        let raw: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let s = SpacingSample::from_spacings(raw).unwrap();
        let coarse = Grid::default();
        let fine = Grid { intervals: 2 * coarse.intervals, ..coarse };
        for r in [ReferenceCdf::Poisson, ReferenceCdf::WignerDyson] {
            let change = (mean_square_deviation_on(&s, r, &coarse) - mean_square_deviation_on(&s, r, &fine)).abs();
            prop_assert!(change < 1e-4, "{change}");
        }
    }

    #[test]
    fn unfolded_phases_have_unit_mean(seed: u64, n in 2usize..500) {
        let mut rng = common::rng(seed);
        let mut phases: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        phases.sort_by(f64::total_cmp);
        let s = spacings_from_phases(&phases).unwrap();
        prop_assert_eq!(s.len(), n);
        let mean = s.spacings().iter().sum::<f64>() / n as f64;
        prop_assert!((mean - 1.0).abs() < 1e-12);
        prop_assert!(s.spacings().iter().all(|&x| x >= 0.0));
    }
}
