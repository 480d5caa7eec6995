// Drift cost with and without skipping negligible far-field slabs.

use std::time::Instant;

use ks_particles::initial::InitialLaw;
use ks_particles::particles::{simulate_counted, SimulationConfig};
use ks_particles::{KernelParams, TimeGrid};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let grid = TimeGrid::new(0.01, 50)?;
    let law = InitialLaw::Gaussian { mean: 0.0, std: 1.0 };
    println!("N, slabs evaluated (cutoff), skipped, ns/slab full, max |diff|");
    for n in [16, 32, 64, 128] {
        let mut cfg = SimulationConfig::new(n, grid, law, KernelParams::new(0.0, 1.0)?, 1);
        let (on, count_on) = simulate_counted(&cfg)?;
        cfg.cutoff = false;
        let t = Instant::now();
        let (off, count_off) = simulate_counted(&cfg)?;
        let ns = t.elapsed().as_secs_f64() * 1e9 / count_off.evaluated.max(1) as f64;
        let diff = on
            .final_positions()
            .iter()
            .zip(off.final_positions())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!("{n}, {}, {}, {ns:.1}, {diff:e}", count_on.evaluated, count_on.skipped);
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
