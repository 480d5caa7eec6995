//! The nonlinear (McKean–Vlasov) SDE driven by the PDE density,
//!
//! ```text
//! dX_t = { χ ∫_0^t (K_{t-s} ⋆ ρ_s)(X_t) ds } dt + dW_t,
//! ```
//!
//! discretised like the particle system: on slab `[t_m, t_{m+1}]` the density
//! is frozen at the snapshot `ρ_{t_m}` and the kernel is integrated exactly in
//! time. Copies of the process read the fixed PDE density, never each other,
//! so they are independent.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::ensure;
use crate::grid::TimeGrid;
use crate::initial::InitialLaw;
use crate::kernel::{kernel_time_integral, KernelParams};
use crate::particles::{initial_positions, PathEnsemble};
use crate::pde::{PdeSolution, PdeState};
use crate::rng::{NoiseSource, ParticleNoise};
use crate::{Error, Result};

fn check_snapshots(snapshots: &[PdeState], times: &TimeGrid, k: usize) -> Result<()> {
    ensure!(k <= times.n_steps(), Domain, "step {k} beyond the time grid");
    ensure!(snapshots.len() >= k, Config, "need snapshots up to row {}, have {}", k.saturating_sub(1), snapshots.len());
    for (m, s) in snapshots.iter().take(k).enumerate() {
        ensure!(
            (s.time - times.time(m)).abs() <= 1e-9 * times.dt(),
            Config,
            "snapshot {m} is at t = {}, expected {}",
            s.time,
            times.time(m)
        );
    }
    Ok(())
}

/// `χ Σ_{m<k} (G_{k-m} ⋆ ρ_{t_m})(x)` with
/// `G_ℓ(y) = ∫_{(ℓ-1)dt}^{ℓ dt} K_u(y) du`, by direct summation over the
/// cells. Density is taken to be zero outside the grid.
pub fn nl_drift_from_density(
    snapshots: &[PdeState],
    times: &TimeGrid,
    k: usize,
    x: f64,
    params: &KernelParams,
) -> Result<f64> {
    ensure!(x.is_finite(), Domain, "position must be finite");
    check_snapshots(snapshots, times, k)?;
    if params.chi == 0.0 || k == 0 {
        return Ok(0.0);
    }
    let dt = times.dt();
    let mut total = 0.0;
    for (m, snap) in snapshots.iter().take(k).enumerate() {
        let lag = k - m;
        let (a, b) = ((lag - 1) as f64 * dt, lag as f64 * dt);
        let grid = snap.grid();
        let mut slab = 0.0;
        for (i, &rho) in snap.rho.values().iter().enumerate() {
            if rho != 0.0 {
                slab += kernel_time_integral(x - grid.center(i), a, b, params)? * rho;
            }
        }
        total += slab * grid.h();
    }
    Ok(params.chi * total)
}

/// Drift of the nonlinear SDE tabulated at cell centres for every step,
/// built by FFT convolution.
///
/// Because `G_ℓ` depends on the step only through the lag, its transform is
/// computed once per lag and the drift at step `k` is the inverse transform
/// of `Σ_ℓ Ĝ_ℓ · ρ̂_{k-ℓ}`.
pub struct DriftField {
    times: TimeGrid,
    params: KernelParams,
    snapshots: Arc<Vec<PdeState>>,
    // values[k][j]: drift at step k, cell centre j
    values: Vec<Vec<f64>>,
}

impl DriftField {
    pub fn build(solution: &PdeSolution, params: &KernelParams) -> Result<Self> {
        Self::from_snapshots(Arc::new(solution.snapshots.clone()), solution.times, params)
    }

    pub fn from_snapshots(snapshots: Arc<Vec<PdeState>>, times: TimeGrid, params: &KernelParams) -> Result<Self> {
        params.validate()?;
        check_snapshots(&snapshots, &times, times.n_steps())?;
        let grid = *snapshots[0].grid();
        ensure!(snapshots.iter().all(|s| *s.grid() == grid), Config, "snapshots use different spatial grids");
        let n = grid.n_cells();
        let n_steps = times.n_steps();
        let mut values = vec![vec![0.0; n]; n_steps];
        if params.chi == 0.0 {
            return Ok(Self { times, params: *params, snapshots, values });
        }
        let size = (2 * n).next_power_of_two();
        let mut planner = FftPlanner::<f64>::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);
        let h = grid.h();
        let dt = times.dt();

        let kernel_hat: Vec<Vec<Complex<f64>>> = (1..=n_steps)
            .into_par_iter()
            .map(|lag| -> Result<Vec<Complex<f64>>> {
                let (a, b) = ((lag - 1) as f64 * dt, lag as f64 * dt);
                let mut buf = vec![Complex::new(0.0, 0.0); size];
                for d in -(n as isize - 1)..(n as isize) {
                    let g = kernel_time_integral(d as f64 * h, a, b, params)?;
                    buf[d.rem_euclid(size as isize) as usize] = Complex::new(g, 0.0);
                }
                forward.process(&mut buf);
                Ok(buf)
            })
            .collect::<Result<_>>()?;
        let rho_hat: Vec<Vec<Complex<f64>>> = snapshots
            .iter()
            .take(n_steps)
            .map(|s| {
                let mut buf = vec![Complex::new(0.0, 0.0); size];
                for (slot, &v) in buf.iter_mut().zip(s.rho.values()) {
                    *slot = Complex::new(v, 0.0);
                }
                forward.process(&mut buf);
                buf
            })
            .collect();

        let scale = params.chi * h / size as f64;
        values.par_iter_mut().enumerate().skip(1).for_each(|(k, row)| {
            let mut acc = vec![Complex::new(0.0, 0.0); size];
            for lag in 1..=k {
                let g = &kernel_hat[lag - 1];
                let r = &rho_hat[k - lag];
                for ((a, gi), ri) in acc.iter_mut().zip(g).zip(r) {
                    *a += gi * ri;
                }
            }
            inverse.process(&mut acc);
            for (out, v) in row.iter_mut().zip(&acc) {
                *out = v.re * scale;
            }
        });
        Ok(Self { times, params: *params, snapshots, values })
    }

    pub fn times(&self) -> &TimeGrid {
        &self.times
    }

    /// Tabulated drift at step `k` on the cell centres.
    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    /// Drift at step `k` and position `x`: linear interpolation between cell
    /// centres, direct summation outside the outermost centres.
    pub fn at(&self, k: usize, x: f64) -> Result<f64> {
        ensure!(k < self.values.len(), Domain, "step {k} beyond the drift table");
        let grid = self.snapshots[0].grid();
        let s = (x - grid.x_min()) / grid.h() - 0.5;
        let n = grid.n_cells();
        if !(s >= 0.0 && s <= (n - 1) as f64) {
            return nl_drift_from_density(&self.snapshots, &self.times, k, x, &self.params);
        }
        let i = (s.floor() as usize).min(n - 2);
        let w = s - i as f64;
        let row = &self.values[k];
        Ok(row[i] * (1.0 - w) + row[i + 1] * w)
    }
}

/// Simulates `n_copies` independent copies of the nonlinear SDE.
pub fn nl_sde_simulate(
    n_copies: usize,
    times: TimeGrid,
    initial: &InitialLaw,
    solution: &PdeSolution,
    params: &KernelParams,
    seed: u64,
) -> Result<PathEnsemble> {
    ensure!(n_copies >= 1, Config, "need at least one copy");
    ensure!(
        solution.times == times && solution.snapshots.len() == times.n_steps() + 1,
        Config,
        "PDE snapshots do not match the simulation time grid"
    );
    initial.validate()?;
    let field = DriftField::build(solution, params)?;
    let noise = ParticleNoise::new(seed);
    let x0 = initial_positions(n_copies, initial, &noise);
    let mut ens = PathEnsemble::new(&x0, times, seed)?;
    let stride = times.n_steps() + 1;
    let n_steps = times.n_steps();
    let dt = times.dt();
    let sqrt_dt = dt.sqrt();

    let positions = &mut ens.positions;
    let increments = ens.increments.as_mut().expect("fresh ensembles carry increments");
    let drifts = &mut ens.drifts;
    positions
        .par_chunks_mut(stride)
        .zip(increments.par_chunks_mut(n_steps))
        .zip(drifts.par_chunks_mut(n_steps))
        .enumerate()
        .try_for_each(|(i, ((path, inc), drift))| -> Result<()> {
            for k in 0..n_steps {
                let b = field.at(k, path[k])?;
                let dw = sqrt_dt * noise.step_normal(i, k);
                let next = path[k] + b * dt + dw;
                if !next.is_finite() {
                    return Err(Error::Instability(format!("copy {i} left the reals at step {k}")));
                }
                path[k + 1] = next;
                inc[k] = dw;
                drift[k] = b;
            }
            Ok(())
        })?;
    ens.filled = stride;
    Ok(ens)
}
