// How the mean of the time-integrated functional over a window `[t1, t2]`
// scales with the window length.

use ks_particles::stochastic::{window_scaling, WindowEstimator};
use ks_particles::{KernelParams, TimeGrid};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let grid = TimeGrid::new(1.0 / 400.0, 400)?;
    let estimator = WindowEstimator::new(grid, KernelParams::new(0.0, 1.0)?, 0.0);
    let x = vec![0.0; grid.n_steps() + 1];
    let lengths = [0.02, 0.04, 0.08, 0.16];
    let (est, slope) = window_scaling(&estimator, 0.5, &lengths, &x, 1000, 9)?;
    for (l, e) in lengths.iter().zip(&est) {
        println!("t2 - t1 = {l}: {:.5} +- {:.5}", e.mean, e.std_error);
    }
    println!("log-log slope {slope:.3}");
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
