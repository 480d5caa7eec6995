//! Finite-volume reference solver for the limiting Keller–Segel system
//!
//! ```text
//! ∂_t ρ = ∂_x(½ ∂_x ρ − χ ρ ∂_x c),
//! ∂_t c = ½ ∂_xx c − λ c + ρ,          c(0, ·) = 0,
//! ```
//!
//! on a truncated interval with no-flux boundaries. Each step first advances
//! `c` with implicit diffusion/decay and an explicit source `ρⁿ`, then `ρ`
//! with an explicit upwind chemotactic flux driven by `∂_x cⁿ⁺¹` followed by
//! implicit diffusion. Both stages are in conservative form, so mass is kept
//! to rounding.

use serde::{Deserialize, Serialize};

use crate::error::ensure;
use crate::grid::{SpatialGrid, TimeGrid};
use crate::initial::InitialLaw;
use crate::kernel::KernelParams;
use crate::{Error, Result};

/// Densities below this value may be clipped without complaint.
pub const NEGATIVITY_TOLERANCE: f64 = 1e-12;
/// Largest density allowed in the two boundary cells.
pub const BOUNDARY_DENSITY_LIMIT: f64 = 1e-10;

/// A nonnegative density sampled at cell centres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    grid: SpatialGrid,
    values: Vec<f64>,
}

impl DensityGrid {
    pub fn new(grid: SpatialGrid, values: Vec<f64>) -> Result<Self> {
        ensure!(values.len() == grid.n_cells(), Config, "density has {} values for {} cells", values.len(), grid.n_cells());
        ensure!(values.iter().all(|v| v.is_finite() && *v >= 0.0), Domain, "density values must be finite and >= 0");
        Ok(Self { grid, values })
    }

    /// Cell averages of `ρ₀ ⋆ g_t`, renormalised to unit mass on the grid.
    pub fn from_law(law: &InitialLaw, grid: SpatialGrid, t: f64) -> Result<Self> {
        let h = grid.h();
        let masses = law.cell_masses(&grid, t);
        let total: f64 = masses.iter().sum();
        ensure!(total > 0.5, Config, "grid [{}, {}] misses most of the initial mass", grid.x_min(), grid.x_max());
        let values = masses.iter().map(|m| (m / total).max(0.0) / h).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Midpoint-rule mass `h Σ ρ_i`.
    pub fn mass(&self) -> f64 {
        self.grid.h() * self.values.iter().sum::<f64>()
    }

    pub fn l2_norm(&self) -> f64 {
        (self.grid.h() * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    pub fn l1_distance(&self, other: &DensityGrid) -> Result<f64> {
        ensure!(self.grid == other.grid, Config, "densities live on different grids");
        Ok(self.grid.h() * self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).sum::<f64>())
    }

    /// Linear interpolation between cell centres; zero outside the grid.
    pub fn value_at(&self, x: f64) -> f64 {
        let h = self.grid.h();
        let s = (x - self.grid.x_min()) / h - 0.5;
        let n = self.values.len();
        if !(s > -1.0 && s < n as f64) {
            return 0.0;
        }
        let i = s.floor();
        let w = s - i;
        let lo = if i >= 0.0 { self.values[i as usize] } else { 0.0 };
        let hi = if (i as isize + 1) < n as isize { self.values[(i + 1.0) as usize] } else { 0.0 };
        lo * (1.0 - w) + hi * w
    }

    /// Distribution function at the cell edges (length `n_cells + 1`), for a
    /// density that is constant on each cell.
    pub fn edge_cdf(&self) -> Vec<f64> {
        let h = self.grid.h();
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.values.len() + 1);
        out.push(0.0);
        for v in &self.values {
            acc += v * h;
            out.push(acc);
        }
        out
    }

    /// `max |ρ(x) − ρ(−x)|` over mirrored cell pairs; meaningful on symmetric
    /// grids.
    pub fn asymmetry(&self) -> f64 {
        let n = self.values.len();
        (0..n / 2).map(|i| (self.values[i] - self.values[n - 1 - i]).abs()).fold(0.0, f64::max)
    }

    pub fn boundary_density(&self) -> f64 {
        self.values[0].max(self.values[self.values.len() - 1])
    }
}

/// Coupled `(ρ, c)` fields at one time; `α` is fixed to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeState {
    pub rho: DensityGrid,
    pub c: Vec<f64>,
    pub time: f64,
}

impl PdeState {
    pub const ALPHA: f64 = 1.0;

    /// Initial state with `c ≡ 0`.
    pub fn initial(law: &InitialLaw, grid: SpatialGrid) -> Result<Self> {
        let rho = DensityGrid::from_law(law, grid, 0.0)?;
        Ok(Self { c: vec![0.0; grid.n_cells()], rho, time: 0.0 })
    }

    pub fn grid(&self) -> &SpatialGrid {
        self.rho.grid()
    }

    /// `∂_x c` at the interior cell faces `i + 1/2`, `i = 0..n-1`.
    pub fn c_gradient_faces(&self) -> Vec<f64> {
        let h = self.grid().h();
        self.c.windows(2).map(|w| (w[1] - w[0]) / h).collect()
    }

    /// `∂_x c` at cell centres by central differences (one-sided at the ends).
    pub fn c_gradient_centres(&self) -> Vec<f64> {
        let h = self.grid().h();
        let n = self.c.len();
        (0..n)
            .map(|i| {
                let lo = if i == 0 { 0 } else { i - 1 };
                let hi = if i + 1 == n { n - 1 } else { i + 1 };
                (self.c[hi] - self.c[lo]) / ((hi - lo) as f64 * h)
            })
            .collect()
    }
}

/// Bookkeeping from one step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepReport {
    pub mass_change: f64,
    pub min_before_clip: f64,
    pub clipped_mass: f64,
}

/// Solves `(1 + 2r + d) u_i − r u_{i−1} − r u_{i+1} = rhs_i` with no-flux
/// ends (diagonal `1 + r + d` in the first and last rows).
fn solve_neumann(r: f64, decay: f64, rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![0.0; n];
    let diag = |i: usize| if i == 0 || i == n - 1 { 1.0 + r + decay } else { 1.0 + 2.0 * r + decay };
    let off = -r;
    let b0 = diag(0);
    c_prime[0] = off / b0;
    d_prime[0] = rhs[0] / b0;
    for i in 1..n {
        let denom = diag(i) - off * c_prime[i - 1];
        c_prime[i] = off / denom;
        d_prime[i] = (rhs[i] - off * d_prime[i - 1]) / denom;
    }
    let mut u = vec![0.0; n];
    u[n - 1] = d_prime[n - 1];
    for i in (0..n - 1).rev() {
        u[i] = d_prime[i] - c_prime[i] * u[i + 1];
    }
    u
}

/// Advances `(ρ, c)` by `dt`. Requires `dt ≤ h²` and an advective Courant
/// number of at most 1.
pub fn pde_step(state: &PdeState, dt: f64, params: &KernelParams) -> Result<PdeState> {
    pde_step_report(state, dt, params).map(|(s, _)| s)
}

pub fn pde_step_report(state: &PdeState, dt: f64, params: &KernelParams) -> Result<(PdeState, StepReport)> {
    params.validate()?;
    let grid = *state.grid();
    let h = grid.h();
    ensure!(dt > 0.0 && dt.is_finite(), Config, "pde step must be > 0, got {dt}");
    ensure!(dt <= h * h * (1.0 + 1e-12), Config, "pde step {dt} violates dt <= h^2 = {}", h * h);
    let n = grid.n_cells();
    let r = 0.5 * dt / (h * h);
    let rho = state.rho.values();

    // c: (1 − dt(½Δ − λ)) cⁿ⁺¹ = cⁿ + dt ρⁿ
    let rhs_c: Vec<f64> = state.c.iter().zip(rho).map(|(c, p)| c + dt * p).collect();
    let c_new = solve_neumann(r, dt * params.lambda, &rhs_c);

    // ρ: explicit upwind chemotaxis flux with velocity χ ∂_x cⁿ⁺¹ at faces
    let mut rho_star = rho.to_vec();
    if params.chi != 0.0 {
        let mut outflow = vec![0.0; n];
        let mut flux = vec![0.0; n - 1];
        for i in 0..n - 1 {
            let v = params.chi * (c_new[i + 1] - c_new[i]) / h;
            flux[i] = if v > 0.0 { v * rho[i] } else { v * rho[i + 1] };
            if v > 0.0 {
                outflow[i] += v;
            } else {
                outflow[i + 1] -= v;
            }
        }
        let courant = outflow.iter().fold(0.0f64, |m, &o| m.max(o)) * dt / h;
        if courant > 1.0 {
            return Err(Error::Instability(format!(
                "chemotactic Courant number {courant:.3} exceeds 1 at t = {}",
                state.time
            )));
        }
        let ratio = dt / h;
        for i in 0..n {
            let right = if i + 1 < n { flux[i] } else { 0.0 };
            let left = if i > 0 { flux[i - 1] } else { 0.0 };
            rho_star[i] -= ratio * (right - left);
        }
    }
    let mut rho_new = solve_neumann(r, 0.0, &rho_star);

    let mass_before = h * rho.iter().sum::<f64>();
    let min = rho_new.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -NEGATIVITY_TOLERANCE {
        return Err(Error::Instability(format!("density reached {min:e} at t = {}", state.time + dt)));
    }
    let mut clipped = 0.0;
    if min < 0.0 {
        let mass_pre_clip = h * rho_new.iter().sum::<f64>();
        for v in rho_new.iter_mut() {
            if *v < 0.0 {
                clipped -= *v * h;
                *v = 0.0;
            }
        }
        let scale = mass_pre_clip / (h * rho_new.iter().sum::<f64>());
        rho_new.iter_mut().for_each(|v| *v *= scale);
    }
    if c_new.iter().any(|c| !c.is_finite()) {
        return Err(Error::Instability(format!("chemoattractant blew up at t = {}", state.time + dt)));
    }
    let rho = DensityGrid::new(grid, rho_new)?;
    let report = StepReport { mass_change: rho.mass() - mass_before, min_before_clip: min, clipped_mass: clipped };
    Ok((PdeState { rho, c: c_new, time: state.time + dt }, report))
}

/// Snapshots on a particle time grid plus run diagnostics.
#[derive(Debug, Clone)]
pub struct PdeSolution {
    pub times: TimeGrid,
    pub snapshots: Vec<PdeState>,
    /// Internal steps per snapshot interval.
    pub substeps: usize,
    /// `max_t |mass(t) − mass(0)|`.
    pub max_mass_drift: f64,
    pub max_step_mass_change: f64,
    pub max_clipped_mass: f64,
}

impl PdeSolution {
    pub fn snapshot(&self, k: usize) -> &PdeState {
        &self.snapshots[k]
    }

    pub fn final_state(&self) -> &PdeState {
        self.snapshots.last().expect("solution has snapshots")
    }
}

/// Integrates from `ρ₀` and records the state at every time of `times`.
///
/// Each interval is split into the smallest number of equal sub-steps with
/// `dt_sub ≤ min(h², max_dt)`. Fails if the boundary cells ever carry density
/// above [`BOUNDARY_DENSITY_LIMIT`], since the truncation would then be felt.
pub fn pde_solve(
    initial: &InitialLaw,
    grid: SpatialGrid,
    times: TimeGrid,
    params: &KernelParams,
    max_dt: Option<f64>,
) -> Result<PdeSolution> {
    initial.validate()?;
    params.validate()?;
    let h2 = grid.h() * grid.h();
    let cap = max_dt.map_or(h2, |m| m.min(h2));
    ensure!(cap > 0.0, Config, "maximum pde step must be > 0");
    let substeps = (times.dt() / cap * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let dt = times.dt() / substeps as f64;

    let mut state = PdeState::initial(initial, grid)?;
    check_boundary(&state)?;
    let mass0 = state.rho.mass();
    let mut snapshots = Vec::with_capacity(times.n_steps() + 1);
    let mut max_mass_drift: f64 = 0.0;
    let mut max_step: f64 = 0.0;
    let mut max_clip: f64 = 0.0;
    snapshots.push(state.clone());
    for k in 0..times.n_steps() {
        for _ in 0..substeps {
            let (next, report) = pde_step_report(&state, dt, params)?;
            max_step = max_step.max(report.mass_change.abs());
            max_clip = max_clip.max(report.clipped_mass);
            state = next;
        }
        state.time = times.time(k + 1);
        check_boundary(&state)?;
        max_mass_drift = max_mass_drift.max((state.rho.mass() - mass0).abs());
        snapshots.push(state.clone());
    }
    Ok(PdeSolution {
        times,
        snapshots,
        substeps,
        max_mass_drift,
        max_step_mass_change: max_step,
        max_clipped_mass: max_clip,
    })
}

fn check_boundary(state: &PdeState) -> Result<()> {
    let b = state.rho.boundary_density();
    if b >= BOUNDARY_DENSITY_LIMIT {
        return Err(Error::Config(format!(
            "boundary density {b:e} at t = {} exceeds {BOUNDARY_DENSITY_LIMIT:e}; widen the spatial domain",
            state.time
        )));
    }
    Ok(())
}
