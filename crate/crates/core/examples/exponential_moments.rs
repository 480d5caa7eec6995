// Exponential moments of the time-integrated pair functional, including
// the damping obtained by scaling the exponent with 1/N.

use ks_particles::stochastic::{exp_moment_mc, exp_moment_scan, ExpMomentConfig, PathLaw};
use ks_particles::KernelParams;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let base = ExpMomentConfig {
        alpha: 1.0,
        scale_inv_n: None,
        dt: 0.01,
        n_steps: 25,
        law: PathLaw::Brownian { start: 0.0 },
        n_samples: 2000,
        seed: 5,
        params: KernelParams::new(0.0, 1.0)?,
    };
    for law in [PathLaw::Brownian { start: 0.0 }, PathLaw::Constant { value: 0.0 }, PathLaw::Constant { value: 5.0 }] {
        let est = exp_moment_mc(&ExpMomentConfig { law, ..base.clone() })?;
        println!("{law:?}: {:.4} +- {:.4}", est.mean, est.std_error);
    }

    let ns = [1, 8, 32, 128];
    for (n, est) in ns.iter().zip(exp_moment_scan(&base, &ns)?) {
        println!("N = {n}: {:.5} +- {:.5}", est.mean, est.std_error);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
