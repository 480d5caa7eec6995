mod common;

use ks_particles::diagnostics::{density_estimate, wasserstein1_density, wasserstein1_samples};
use ks_particles::io::{decode_paths, encode_paths, Table};
use ks_particles::kernel::{kernel_time_integral, SlabCount, SlabKernel};
use ks_particles::particles::PathEnsemble;
use ks_particles::rng::{derive_seed, open_unit, CounterRng};
use ks_particles::stochastic::{functional_f, girsanov_accumulate, PathPair};
use ks_particles::{DensityGrid, KernelParams, SpatialGrid, TimeGrid};
use proptest::prelude::*;

fn sample_vec(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-20.0..20.0f64, 1..max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn w1_is_a_metric(a in sample_vec(40), b in sample_vec(40), c in sample_vec(40)) {
        let ab = wasserstein1_samples(&a, &b).unwrap();
        let ba = wasserstein1_samples(&b, &a).unwrap();
        let ac = wasserstein1_samples(&a, &c).unwrap();
        let cb = wasserstein1_samples(&c, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-12 * (1.0 + ab));
        prop_assert!(ab <= ac + cb + 1e-9);
        prop_assert!(wasserstein1_samples(&a, &a).unwrap() <= 1e-12);
    }

    #[test]
    fn w1_matches_order_statistics(pairs in prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64), 1..60)) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let got = wasserstein1_samples(&a, &b).unwrap();
        let want = common::w1_equal_size(&a, &b);
        prop_assert!((got - want).abs() <= 1e-10 * (1.0 + want));
    }

    #[test]
    fn w1_of_a_shift_is_the_shift(a in sample_vec(50), c in -5.0..5.0f64) {
        let b: Vec<f64> = a.iter().map(|x| x + c).collect();
        let w = wasserstein1_samples(&a, &b).unwrap();
        prop_assert!((w - c.abs()).abs() < 1e-9);
    }

    #[test]
    fn w1_to_one_cell_matches_cdf_integral(a in prop::collection::vec(-3.0..3.0f64, 1..30), cell in 0usize..40) {
        // All mass uniform on one cell: integrate |F_n - F_U| between breakpoints.
        let grid = SpatialGrid::new(-4.0, 4.0, 40).unwrap();
        let mut v = vec![0.0; 40];
        v[cell] = 1.0 / grid.h();
        let rho = DensityGrid::new(grid, v).unwrap();
        let (lo, h) = (grid.edge(cell), grid.h());
        let n = a.len() as f64;
        let f_n = |x: f64| a.iter().filter(|&&s| s <= x).count() as f64 / n;
        let f_u = |x: f64| ((x - lo) / h).clamp(0.0, 1.0);
        let mut pts: Vec<f64> = a.iter().copied().chain([lo, lo + h, -5.0, 5.0]).collect();
        pts.sort_by(f64::total_cmp);
        let want: f64 = pts
            .windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| {
                let fn_mid = f_n(0.5 * (w[0] + w[1]));
                common::integrate(|x| (fn_mid - f_u(x)).abs(), w[0], w[1], 1e-14)
            })
            .sum();
        let got = wasserstein1_density(&a, &rho).unwrap();
        prop_assert!((got - want).abs() < 1e-9, "{} vs {}", got, want);
    }

    #[test]
    fn kde_is_a_probability_density(a in prop::collection::vec(-3.0..3.0f64, 2..50), bw in 0.05..1.0f64) {
        let grid = SpatialGrid::symmetric(15.0, 0.05).unwrap();
        let d = density_estimate(&a, &grid, bw).unwrap();
        prop_assert!(d.values().iter().all(|&v| v >= 0.0));
        prop_assert!((d.mass() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn time_integral_is_odd_bounded_and_additive(x in 0.001..5.0f64, a in 0.0..2.0f64, l1 in 0.01..2.0f64, l2 in 0.01..2.0f64, lambda in 0.0..2.0f64) {
        let params = KernelParams::new(lambda, 1.0).unwrap();
        let (b, c) = (a + l1, a + l1 + l2);
        let ab = kernel_time_integral(x, a, b, &params).unwrap();
        let bc = kernel_time_integral(x, b, c, &params).unwrap();
        let ac = kernel_time_integral(x, a, c, &params).unwrap();
        prop_assert!((-1.0..=0.0).contains(&ab));
        prop_assert!((kernel_time_integral(-x, a, b, &params).unwrap() + ab).abs() <= 1e-15);
        prop_assert!((ab + bc - ac).abs() <= 1e-12 + 1e-10 * ac.abs());
    }

    #[test]
    fn cutoff_does_not_change_history_sums(x_now in -4.0..4.0f64, hist in prop::collection::vec(-4.0..4.0f64, 1..80)) {
        let grid = TimeGrid::new(0.005, 100).unwrap();
        let params = KernelParams::new(0.0, 1.0).unwrap();
        let on = SlabKernel::new(&grid, params, true);
        let off = SlabKernel::new(&grid, params, false);
        let mut count = SlabCount::default();
        let a = on.history_sum(x_now, &hist, &mut count);
        let b = off.history_sum(x_now, &hist, &mut SlabCount::default());
        prop_assert_eq!(a.to_bits(), b.to_bits());
        prop_assert_eq!(count.evaluated + count.skipped, hist.len() as u64);
    }

    #[test]
    fn pair_functional_is_nonnegative(x in prop::collection::vec(-3.0..3.0f64, 21), y in prop::collection::vec(-3.0..3.0f64, 21), k in 1usize..=20) {
        let grid = TimeGrid::new(0.05, 20).unwrap();
        let params = KernelParams::new(0.0, 1.0).unwrap();
        let pair = PathPair::new(grid, x.clone(), y).unwrap();
        prop_assert!(functional_f(&pair, k, &params).unwrap() >= 0.0);
        let same = PathPair::new(grid, x.clone(), x).unwrap();
        prop_assert_eq!(functional_f(&same, k, &params).unwrap(), 0.0);
    }

    #[test]
    fn girsanov_log_weight_splits(seed in any::<u64>(), r in 0usize..4) {
        let grid = TimeGrid::new(0.02, 10).unwrap();
        let n = 4;
        let rng = CounterRng::new(seed);
        let mut pos = vec![0.0; n * 11];
        let mut inc = vec![0.0; n * 10];
        for i in 0..n {
            pos[i * 11] = rng.normal(i as u64, 0);
            for k in 0..10 {
                inc[i * 10 + k] = 0.02f64.sqrt() * rng.normal(i as u64, k as u64 + 1);
                pos[i * 11 + k + 1] = pos[i * 11 + k] + inc[i * 10 + k];
            }
        }
        let ens = PathEnsemble::from_parts(n, grid, seed, pos, Some(inc)).unwrap();
        let acc = girsanov_accumulate(&ens, r, &KernelParams::new(0.0, 1.0).unwrap()).unwrap();
        prop_assert_eq!(acc.len(), 11);
        prop_assert_eq!(acc[0].log_weight, 0.0);
        for w in acc.windows(2) {
            prop_assert!(w[1].quad_term >= w[0].quad_term);
        }
        for a in &acc {
            prop_assert!((a.log_weight - (a.ito_term - 0.5 * a.quad_term)).abs() <= 1e-14 * (1.0 + a.quad_term));
        }
    }

    #[test]
    fn open_unit_stays_inside(bits in any::<u64>()) {
        let u = open_unit(bits);
        prop_assert!(u > 0.0 && u < 1.0);
    }

    #[test]
    fn derived_seeds_differ(seed in any::<u64>(), tag in any::<u64>(), i in 0u64..1000) {
        prop_assert_ne!(derive_seed(seed, tag, i), derive_seed(seed, tag, i + 1));
        prop_assert_eq!(derive_seed(seed, tag, i), derive_seed(seed, tag, i));
    }

    #[test]
    fn path_dump_round_trips(n in 1usize..6, steps in 1usize..12, seed in any::<u64>(), with_inc in any::<bool>()) {
        let grid = TimeGrid::new(0.1, steps).unwrap();
        let rng = CounterRng::new(seed);
        let pos: Vec<f64> = (0..n * (steps + 1)).map(|j| rng.normal(0, j as u64)).collect();
        let inc = with_inc.then(|| (0..n * steps).map(|j| rng.normal(1, j as u64)).collect::<Vec<_>>());
        let ens = PathEnsemble::from_parts(n, grid, seed, pos, inc).unwrap();
        let bytes = encode_paths(&ens).unwrap();
        let back = decode_paths(&bytes).unwrap();
        prop_assert_eq!(back.positions(), ens.positions());
        prop_assert_eq!(back.increments(), ens.increments());
        prop_assert_eq!(back.seed(), seed);
        prop_assert!(decode_paths(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn tables_round_trip(rows in prop::collection::vec(prop::collection::vec(-1e6..1e6f64, 3), 0..20)) {
        let mut t = Table::new(&["a", "b", "c"]);
        for r in &rows {
            t.push(r.iter().map(|v| ks_particles::io::fmt_f64(*v)).collect());
        }
        let back = Table::parse(&t.render()).unwrap();
        prop_assert_eq!(back.render(), t.render());
        let col: Vec<f64> = back.column("b").unwrap().iter().map(|s| s.parse().unwrap()).collect();
        let want: Vec<f64> = rows.iter().map(|r| r[1]).collect();
        prop_assert_eq!(col, want);
    }
}
