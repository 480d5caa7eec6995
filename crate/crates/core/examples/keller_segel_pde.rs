// Finite-volume solution of the Keller–Segel system and its L2 decay.

use ks_particles::diagnostics::l2_decay_snapshots;
use ks_particles::initial::InitialLaw;
use ks_particles::pde::pde_solve;
use ks_particles::{KernelParams, SpatialGrid, TimeGrid};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let law = InitialLaw::TwoBump { weight: 0.5, mean_a: -1.0, std_a: 0.5, mean_b: 1.0, std_b: 0.5 };
    let grid = SpatialGrid::symmetric(12.0, 0.05)?;
    let times = TimeGrid::new(0.01, 100)?;
    let sol = pde_solve(&law, grid, times, &KernelParams::new(0.0, 1.0)?, None)?;

    println!("substeps per interval {}, mass drift {:.2e}", sol.substeps, sol.max_mass_drift);
    let ts = [0.01, 0.05, 0.1, 0.25, 0.5, 1.0];
    println!("t, t^(1/4) |rho_t|_2");
    for p in l2_decay_snapshots(&sol, &ts)? {
        println!("{}, {:.5}", p.t, p.scaled_norm);
    }
    let end = sol.final_state();
    println!("asymmetry at T: {:.2e}", end.rho.asymmetry());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
