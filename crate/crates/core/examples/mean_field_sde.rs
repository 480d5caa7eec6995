// Copies of the nonlinear SDE driven by the PDE density; their histogram
// should track the density itself.

use ks_particles::diagnostics::{density_estimate, silverman_bandwidth, wasserstein1_density};
use ks_particles::initial::InitialLaw;
use ks_particles::mean_field::nl_sde_simulate;
use ks_particles::pde::pde_solve;
use ks_particles::{KernelParams, SpatialGrid, TimeGrid};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let law = InitialLaw::Gaussian { mean: 0.0, std: 1.0 };
    let params = KernelParams::new(0.0, 1.0)?;
    let grid = SpatialGrid::symmetric(10.0, 0.05)?;
    let times = TimeGrid::new(0.02, 25)?;
    let sol = pde_solve(&law, grid, times, &params, None)?;

    let ens = nl_sde_simulate(4000, times, &law, &sol, &params, 11)?;
    let xt = ens.final_positions();
    let rho = &sol.final_state().rho;
    let bw = silverman_bandwidth(&xt)?;
    let kde = density_estimate(&xt, &grid, bw)?;
    println!("copies {}, bandwidth {bw:.4}", xt.len());
    println!("W1(copies, rho_T) = {:.4}", wasserstein1_density(&xt, rho)?);
    println!("L1(kde, rho_T) = {:.4}", kde.l1_distance(rho)?);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
