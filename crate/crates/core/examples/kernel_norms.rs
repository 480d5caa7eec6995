// Lp norms of the kernel and its exact time integrals.
//
//     cargo run --release --example kernel_norms

use ks_particles::kernel::{kernel_lp_norm, kernel_time_integral, lp_constant};
use ks_particles::stats::log_log_slope;
use ks_particles::KernelParams;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let params = KernelParams::new(0.0, 1.0)?;
    let times = [0.25, 0.5, 1.0, 2.0, 4.0];
    println!("p, C_p, fitted slope, expected slope");
    for p in [1.0, 2.0, 4.0] {
        let norms = times
            .iter()
            .map(|&t| kernel_lp_norm(t, p, &params))
            .collect::<Result<Vec<_>, _>>()?;
        let slope = log_log_slope(&times, &norms);
        println!("{p}, {:.6}, {slope:.6}, {:.6}", lp_constant(p)?, -(1.0 - 1.0 / (2.0 * p)));
    }

    // The memory integral over [a, b] is odd in x and vanishes as |x| grows.
    println!("\nx, int_0^1 K_s(x) ds");
    for x in [-2.0, -0.5, -0.1, 0.1, 0.5, 2.0] {
        println!("{x}, {:.10}", kernel_time_integral(x, 0.0, 1.0, &params)?);
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
