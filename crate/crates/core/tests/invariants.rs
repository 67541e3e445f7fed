//! Property tests for metric, operator and storage invariants.

use mno_core::baselines::fit_linear;
use mno_core::dataset::{Dataset, Split};
use mno_core::dynamics::ScaleParams;
use mno_core::fno::{fno_forward, init_params, FnoConfig};
use mno_core::rollout::rmse_over_time;
use proptest::prelude::*;

fn ensemble(n: usize, t: usize, k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-20.0..20.0f64, n * t * k)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rmse_is_a_symmetric_scaled_distance(
        (n, t, k, a, b) in (1usize..5, 1usize..6, 1usize..6)
            .prop_flat_map(|(n, t, k)| (Just(n), Just(t), Just(k), ensemble(n, t, k), ensemble(n, t, k))),
        s in 0.1..10.0f64,
    ) {
        let ab = rmse_over_time(&a, &b, n, t, k).unwrap();
        let ba = rmse_over_time(&b, &a, n, t, k).unwrap();
        prop_assert_eq!(&ab, &ba);
        prop_assert!(ab.iter().all(|v| *v >= 0.0));
        prop_assert!(rmse_over_time(&a, &a, n, t, k).unwrap().iter().all(|v| *v == 0.0));
        let sa: Vec<f64> = a.iter().map(|v| v * s).collect();
        let sb: Vec<f64> = b.iter().map(|v| v * s).collect();
        for (x, y) in rmse_over_time(&sa, &sb, n, t, k).unwrap().iter().zip(&ab) {
            prop_assert!((x - s * y).abs() <= 1e-10 * (1.0 + s * y));
        }
        // Each per-time value is bounded by the largest error at that time.
        for (ti, v) in ab.iter().enumerate() {
            let worst = (0..n)
                .flat_map(|i| (0..k).map(move |kk| (i * t + ti) * k + kk))
                .map(|j| (a[j] - b[j]).abs())
                .fold(0.0, f64::max);
            prop_assert!(*v <= worst + 1e-12);
        }
    }

    #[test]
    fn operator_commutes_with_circular_shifts(
        log_k in 2u32..6,
        n_v in 2usize..9,
        n_d in 1usize..4,
        seed in 0u64..1000,
        shift in 1usize..32,
        x in prop::collection::vec(-10.0..10.0f64, 32),
    ) {
        let k = 1usize << log_k;
        let cfg = FnoConfig { n_v, k_max: (k / 2 + 1).min(3), n_d, ..Default::default() };
        let params = init_params::<f64>(cfg, seed).unwrap();
        let x = &x[..k];
        let s = shift % k;
        let y = fno_forward(&params, x).unwrap();
        let xs: Vec<f64> = (0..k).map(|i| x[(i + k - s) % k]).collect();
        let ys = fno_forward(&params, &xs).unwrap();
        for i in 0..k {
            prop_assert!((ys[i] - y[(i + k - s) % k]).abs() <= 1e-10);
        }
    }

    #[test]
    fn dataset_round_trip_is_bit_exact(
        rows in 1usize..8,
        snippets in 1usize..4,
        raw in prop::collection::vec(any::<f64>(), 4 * 8 * 3 * 2),
    ) {
        let p = ScaleParams::default();
        let take = |i: usize| raw[i * rows * 4..(i + 1) * rows * 4].to_vec();
        let data: Vec<_> = (0..snippets).map(|i| (take(2 * i), take(2 * i + 1))).collect();
        let ds = Dataset::from_rows(&p, Split::Test, data).unwrap();
        let mut buf = Vec::new();
        ds.write_to(&mut buf).unwrap();
        let back = Dataset::read_from(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(back.header, ds.header);
        for (a, b) in back.snippets.iter().zip(&ds.snippets) {
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&a.coarse_states), bits(&b.coarse_states));
            prop_assert_eq!(bits(&a.targets), bits(&b.targets));
        }
    }

    #[test]
    fn linear_fit_recovers_noiseless_lines(
        a in -3.0..3.0f64,
        b0 in -5.0..5.0f64,
        xs in prop::collection::vec(-15.0..15.0f64, 8..40),
    ) {
        let spread = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - xs.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assume!(spread > 1.0);
        let p = ScaleParams::default().with_sizes(1, 4);
        let hs: Vec<f64> = xs.iter().map(|x| a * x + b0).collect();
        let ds = Dataset::from_rows(&p, Split::Train, vec![(xs, hs)]).unwrap();
        let fit = fit_linear(&ds).unwrap();
        prop_assert!((fit.a - a).abs() <= 1e-9 && (fit.b0 - b0).abs() <= 1e-9);
    }
}
