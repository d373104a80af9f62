use cfbound::bounds::{aggregate_samples, interval_positions};
use proptest::prelude::*;

fn sample_set() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 1..400)
}

fn wrap(xs: &[f64]) -> Vec<Option<f64>> {
    xs.iter().copied().map(Some).collect()
}

#[test]
fn order_statistics_for_six_thousand() {
    assert_eq!(interval_positions(6000, 0.05), (150, 5850));
    let xs: Vec<f64> = (1..=6000).map(f64::from).collect();
    let r = aggregate_samples(&[&wrap(&xs)], 0.05).unwrap();
    assert_eq!((r.ci_low, r.ci_high), (150.0, 5850.0));
    // Split across two chains of 4000 and 2000.
    let (a, b) = xs.split_at(4000);
    let r = aggregate_samples(&[&wrap(b), &wrap(a)], 0.05).unwrap();
    assert_eq!((r.ci_low, r.ci_high), (150.0, 5850.0));
    assert_eq!(r.per_chain, vec![2000, 4000]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn zero_delta_is_min_max(xs in sample_set()) {
        let r = aggregate_samples(&[&wrap(&xs)], 0.0).unwrap();
        let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!((r.ci_low, r.ci_high), (min, max));
        prop_assert_eq!((r.worst_low, r.worst_high), (min, max));
    }

    #[test]
    fn intervals_nest_as_delta_grows(xs in sample_set(), d1 in 0.0f64..0.99, d2 in 0.0f64..0.99) {
        let (small, large) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let wide = aggregate_samples(&[&wrap(&xs)], small).unwrap();
        let narrow = aggregate_samples(&[&wrap(&xs)], large).unwrap();
        prop_assert!(wide.ci_low <= narrow.ci_low);
        prop_assert!(narrow.ci_high <= wide.ci_high);
        prop_assert!(narrow.ci_low <= narrow.ci_high);
        prop_assert!(wide.worst_low <= wide.ci_low && wide.ci_high <= wide.worst_high);
    }

    #[test]
    fn pooling_ignores_order(xs in sample_set(), split in 0usize..400, delta in 0.0f64..0.5, seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let whole = aggregate_samples(&[&wrap(&xs)], delta).unwrap();
        let mut shuffled = xs.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let cut = split.min(shuffled.len());
        let (a, b) = shuffled.split_at(cut);
        let parts = aggregate_samples(&[&wrap(b), &wrap(a)], delta).unwrap();
        prop_assert_eq!(&whole.sorted, &parts.sorted);
        prop_assert_eq!((whole.ci_low, whole.ci_high), (parts.ci_low, parts.ci_high));
        prop_assert!((whole.mean - parts.mean).abs() <= 1e-12);
    }

    #[test]
    fn positions_stay_in_range(n in 1usize..100_000, delta in 0.0f64..1.0) {
        let (lo, hi) = interval_positions(n, delta);
        prop_assert!(1 <= lo && lo <= hi && hi <= n);
        let (lo0, hi0) = interval_positions(n, 0.0);
        prop_assert_eq!((lo0, hi0), (1, n));
    }

    #[test]
    fn skipped_entries_do_not_move_the_interval(xs in sample_set(), gaps in prop::collection::vec(any::<bool>(), 0..50)) {
        let mut with_gaps = wrap(&xs);
        for (i, g) in gaps.iter().enumerate() {
            if *g {
                with_gaps.insert(i.min(with_gaps.len()), None);
            }
        }
        let clean = aggregate_samples(&[&wrap(&xs)], 0.05).unwrap();
        let gappy = aggregate_samples(&[&with_gaps], 0.05).unwrap();
        prop_assert_eq!(gappy.skipped, gaps.iter().filter(|g| **g).count());
        prop_assert_eq!((clean.ci_low, clean.ci_high), (gappy.ci_low, gappy.ci_high));
    }
}
