// Change-of-measure weights that remove the drift of the first `r`
// particles. Under the driftless measure their mean is one.

use ks_particles::initial::InitialLaw;
use ks_particles::particles::SimulationConfig;
use ks_particles::stochastic::{girsanov_mc, simulate_with_weight, GirsanovConfig};
use ks_particles::{KernelParams, TimeGrid};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let grid = TimeGrid::new(1.0 / 128.0, 32)?;
    let law = InitialLaw::Gaussian { mean: 0.0, std: 1.0 };
    let sim = SimulationConfig::new(8, grid, law, KernelParams::new(0.0, 1.0)?, 3);

    let (_, acc) = simulate_with_weight(&sim, 1)?;
    println!("one path: ito {:.5}, quadratic {:.5}, Z = {:.5}", acc.ito_term, acc.quad_term, acc.weight());

    for r in [0, 1, 4] {
        let est = girsanov_mc(&GirsanovConfig { sim: sim.clone(), r, replicas: 1000 })?;
        println!(
            "r = {r}: E Z = {:.4} +- {:.4}, largest weight share {:.3}{}",
            est.mean,
            est.std_error,
            est.max_weight_fraction,
            if est.unstable { " (unstable)" } else { "" }
        );
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
