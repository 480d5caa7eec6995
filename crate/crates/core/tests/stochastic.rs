use ks_particles::initial::InitialLaw;
use ks_particles::particles::SimulationConfig;
use ks_particles::stochastic::{
    exp_moment_mc, girsanov_mc, novikov_probe, ExpMomentConfig, GirsanovConfig, PathLaw, WindowEstimator,
};
use ks_particles::{Error, KernelParams, TimeGrid};

fn moments(alpha: f64, law: PathLaw) -> ExpMomentConfig {
    ExpMomentConfig {
        alpha,
        scale_inv_n: None,
        dt: 0.01,
        n_steps: 20,
        law,
        n_samples: 2000,
        seed: 3,
        params: KernelParams::new(0.0, 1.0).unwrap(),
    }
}

#[test]
fn vanishing_alpha_gives_one() {
    let est = exp_moment_mc(&moments(1e-9, PathLaw::Brownian { start: 0.0 })).unwrap();
    assert!((est.mean - 1.0).abs() < 1e-9);
}

#[test]
fn every_law_respects_the_common_bound() {
    // |∫K| ≤ 1, so F ≤ 1 and the moment is at most e^{αT} whatever Y is.
    let alpha = 2.0;
    let bound = (alpha * 0.2f64).exp();
    for law in [PathLaw::Brownian { start: 0.0 }, PathLaw::Constant { value: 0.0 }, PathLaw::Constant { value: 5.0 }] {
        let est = exp_moment_mc(&moments(alpha, law)).unwrap();
        assert!(est.mean >= 1.0 && est.mean <= bound + 3.0 * est.std_error, "{law:?}: {}", est.mean);
        assert!(!est.unstable);
    }
}

#[test]
fn scaled_moments_shrink_with_n() {
    let mut last = f64::INFINITY;
    for n in [1, 4, 16] {
        let est = exp_moment_mc(&ExpMomentConfig { scale_inv_n: Some(n), ..moments(1.0, PathLaw::Brownian { start: 0.0 }) }).unwrap();
        assert!(est.mean <= last);
        last = est.mean;
    }
}

#[test]
fn girsanov_weights_have_unit_mean() {
    let grid = TimeGrid::new(1.0 / 64.0, 16).unwrap();
    let sim = SimulationConfig::new(6, grid, InitialLaw::default(), KernelParams::new(0.0, 1.0).unwrap(), 8);
    for r in [0, 1, 3] {
        let est = girsanov_mc(&GirsanovConfig { sim: sim.clone(), r, replicas: 2000 }).unwrap();
        assert!(est.covers(1.0, 3.0), "r={r}: {} +- {}", est.mean, est.std_error);
    }
}

#[test]
fn novikov_probe_grows_with_kappa() {
    let grid = TimeGrid::new(1.0 / 32.0, 8).unwrap();
    let sim = SimulationConfig::new(4, grid, InitialLaw::default(), KernelParams::new(0.0, 1.0).unwrap(), 2);
    let est = novikov_probe(&sim, &[1e-9, 0.5, 2.0], 200).unwrap();
    assert!((est[0].mean - 1.0).abs() < 1e-6);
    assert!(est.windows(2).all(|w| w[1].mean >= w[0].mean));
    assert!(matches!(novikov_probe(&sim, &[0.0], 200), Err(Error::Domain(_))));
}

#[test]
fn window_estimator_edge_cases() {
    let grid = TimeGrid::new(0.01, 100).unwrap();
    let est = WindowEstimator::new(grid, KernelParams::default(), 0.0);
    let x = vec![0.0; 101];
    assert_eq!(est.estimate(0.3, 0.3, &x, 100, 0).unwrap().mean, 0.0);
    assert!(matches!(est.estimate(0.3, 0.4, &x, 99, 0), Err(Error::Domain(_))));
    assert!(matches!(est.estimate(0.3, 0.305, &x, 100, 0), Err(Error::Domain(_))));
    let short = est.estimate(0.5, 0.52, &x, 500, 1).unwrap().mean;
    let long = est.estimate(0.5, 0.6, &x, 500, 1).unwrap().mean;
    assert!(0.0 < short && short < long);
}
