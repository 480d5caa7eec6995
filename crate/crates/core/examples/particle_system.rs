// Simulates the interacting system, writes a path dump and reads it back.

use ks_particles::initial::InitialLaw;
use ks_particles::io::{read_paths, write_paths};
use ks_particles::particles::{simulate, SimulationConfig};
use ks_particles::stats::mean_and_se;
use ks_particles::{KernelParams, TimeGrid};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let grid = TimeGrid::new(0.01, 50)?;
    let law = InitialLaw::Gaussian { mean: 0.0, std: 1.0 };
    let cfg = SimulationConfig::new(64, grid, law, KernelParams::new(0.0, 1.0)?, 7);
    let ens = simulate(&cfg)?;

    let xt = ens.final_positions();
    let (mean, se) = mean_and_se(&xt);
    let var = xt.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xt.len() - 1) as f64;
    println!("N = {}, T = {}", ens.n_particles(), grid.horizon());
    println!("mean {mean:.4} (se {se:.4}), variance {var:.4} vs {:.4} without drift", 1.0 + grid.horizon());

    let dir = std::env::temp_dir().join("ks_particle_system_example");
    std::fs::create_dir_all(&dir)?;
    let file = dir.join("paths.bin");
    write_paths(&file, &ens)?;
    let back = read_paths(&file)?;
    assert_eq!(back.positions(), ens.positions());
    println!("round trip through {} ok", file.display());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
