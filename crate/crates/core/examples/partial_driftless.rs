// The first `r` particles feel no drift: their marginals stay Gaussian.

use ks_particles::initial::{std_normal_cdf, InitialLaw};
use ks_particles::particles::{simulate_partial_driftless, SimulationConfig};
use ks_particles::stats::{ks_critical, ks_statistic};
use ks_particles::{KernelParams, TimeGrid};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let grid = TimeGrid::new(1.0 / 64.0, 32)?;
    let law = InitialLaw::Gaussian { mean: 0.0, std: 1.0 };
    let (n, r) = (16, 2);
    let mut heads = Vec::new();
    for seed in 0..200 {
        let cfg = SimulationConfig::new(n, grid, law, KernelParams::new(0.0, 2.0)?, seed);
        let ens = simulate_partial_driftless(r, &cfg)?;
        heads.extend((0..r).map(|i| ens.position(i, grid.n_steps())));
    }
    // X_i(T) ~ N(0, 1 + T) for the driftless block.
    let sd = (1.0 + grid.horizon()).sqrt();
    let d = ks_statistic(&heads, |x| std_normal_cdf(x / sd));
    println!("{} driftless samples, KS distance {d:.4}, 1% critical value {:.4}", heads.len(), ks_critical(heads.len(), 0.01));
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
