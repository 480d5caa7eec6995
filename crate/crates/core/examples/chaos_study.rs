// Distance between the empirical measure of the particles and the PDE
// density, for growing N.

use ks_particles::diagnostics::{chaos_study, ChaosConfig};
use ks_particles::initial::InitialLaw;
use ks_particles::particles::SimulationConfig;
use ks_particles::{KernelParams, TimeGrid};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let grid = TimeGrid::new(0.01, 25)?;
    let law = InitialLaw::Gaussian { mean: 0.0, std: 1.0 };
    let cfg = ChaosConfig {
        n_values: vec![16, 64, 256],
        replicas: 6,
        times: vec![0.1, 0.25],
        sim: SimulationConfig::new(1, grid, law, KernelParams::new(0.0, 1.0)?, 21),
        half_width: 10.0,
        h: 0.02,
    };
    let report = chaos_study(&cfg)?;
    for (a, n) in report.n_values.iter().enumerate() {
        let row: Vec<String> = report.w1_mean[a]
            .iter()
            .zip(&report.w1_se[a])
            .map(|(m, s)| format!("{m:.4} +- {s:.4}"))
            .collect();
        println!("N = {n}: {}", row.join(", "));
    }
    println!("slopes in N: {:?}", report.fit);
    println!("decreasing at final time: {}", report.strictly_decreasing(report.times.len() - 1, 2.0));
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
