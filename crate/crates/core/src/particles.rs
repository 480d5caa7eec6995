//! Euler–Maruyama simulation of the interacting particle system.
//!
//! Particle `i` moves by
//!
//! ```text
//! X^i_{k+1} = X^i_k + b_i(t_k)·dt + √dt·ξ_{i,k},
//! b_i(t_k)  = (χ/N) Σ_{j≠i} Σ_{m<k} ∫_{t_k-t_{m+1}}^{t_k-t_m} K_u(X^i_k − X^j_m) du,
//! ```
//!
//! where the history of particle `j` is frozen at the left endpoint of every
//! step and the kernel is integrated exactly over the slab. Pairs that sit at
//! the same position at time `t_k` do not interact. The scheme has strong
//! order 1/2; refine by shrinking `dt`.
//!
//! The partially driftless variant lets the first `r` particles move as plain
//! Brownian motions while particles `i ≥ r` only interact with `{r, …, N−1}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::ensure;
use crate::grid::TimeGrid;
use crate::initial::InitialLaw;
use crate::kernel::{KernelParams, SlabCount, SlabKernel};
use crate::rng::{NoiseSource, ParticleNoise};
use crate::{Error, Result};

/// Full time-gridded history of `N` trajectories.
///
/// Positions are stored particle-major: particle `i` occupies
/// `positions[i·(n_steps+1) .. (i+1)·(n_steps+1)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub(crate) n_particles: usize,
    pub(crate) grid: TimeGrid,
    pub(crate) positions: Vec<f64>,
    pub(crate) increments: Option<Vec<f64>>,
    pub(crate) drifts: Vec<f64>,
    pub(crate) filled: usize,
    pub(crate) seed: u64,
}

impl PathEnsemble {
    /// An ensemble with only the initial positions filled in.
    pub fn new(initial: &[f64], grid: TimeGrid, seed: u64) -> Result<Self> {
        ensure!(!initial.is_empty(), Config, "ensemble needs at least one particle");
        ensure!(initial.iter().all(|x| x.is_finite()), Domain, "initial positions must be finite");
        let n = initial.len();
        let stride = grid.n_steps() + 1;
        let mut positions = vec![0.0; n * stride];
        for (i, &x) in initial.iter().enumerate() {
            positions[i * stride] = x;
        }
        Ok(Self {
            n_particles: n,
            grid,
            positions,
            increments: Some(vec![0.0; n * grid.n_steps()]),
            drifts: vec![0.0; n * grid.n_steps()],
            filled: 1,
            seed,
        })
    }

    /// Rebuilds a complete ensemble from stored positions (particle-major) and
    /// optional increments, e.g. after reading a path dump.
    pub fn from_parts(
        n_particles: usize,
        grid: TimeGrid,
        seed: u64,
        positions: Vec<f64>,
        increments: Option<Vec<f64>>,
    ) -> Result<Self> {
        let stride = grid.n_steps() + 1;
        ensure!(n_particles >= 1, Config, "ensemble needs at least one particle");
        ensure!(
            positions.len() == n_particles * stride,
            Config,
            "expected {} positions, got {}",
            n_particles * stride,
            positions.len()
        );
        if let Some(inc) = &increments {
            ensure!(inc.len() == n_particles * grid.n_steps(), Config, "increment block has wrong length");
        }
        ensure!(positions.iter().all(|x| x.is_finite()), Domain, "positions must be finite");
        Ok(Self {
            n_particles,
            grid,
            positions,
            increments,
            drifts: vec![0.0; n_particles * grid.n_steps()],
            filled: stride,
            seed,
        })
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of filled time rows; row `k` is filled once step `k-1` is done.
    pub fn filled_rows(&self) -> usize {
        self.filled
    }

    pub fn is_complete(&self) -> bool {
        self.filled == self.grid.n_steps() + 1
    }

    fn stride(&self) -> usize {
        self.grid.n_steps() + 1
    }

    pub fn position(&self, i: usize, k: usize) -> f64 {
        self.positions[i * self.stride() + k]
    }

    /// Whole (possibly partially filled) path of particle `i`.
    pub fn path(&self, i: usize) -> &[f64] {
        let s = self.stride();
        &self.positions[i * s..(i + 1) * s]
    }

    /// Positions of particle `i` at rows `0..k`.
    pub fn history(&self, i: usize, k: usize) -> &[f64] {
        let s = self.stride();
        &self.positions[i * s..i * s + k]
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    /// Positions of all particles at row `k`.
    pub fn positions_at(&self, k: usize) -> Vec<f64> {
        (0..self.n_particles).map(|i| self.position(i, k)).collect()
    }

    pub fn final_positions(&self) -> Vec<f64> {
        self.positions_at(self.grid.n_steps())
    }

    pub fn has_increments(&self) -> bool {
        self.increments.is_some()
    }

    /// Brownian increment `ΔW` of particle `i` over step `k`.
    pub fn increment(&self, i: usize, k: usize) -> Option<f64> {
        self.increments.as_ref().map(|inc| inc[i * self.grid.n_steps() + k])
    }

    pub fn increments(&self) -> Option<&[f64]> {
        self.increments.as_deref()
    }

    /// Drift applied to particle `i` over step `k` (zero for loaded dumps).
    pub fn drift(&self, i: usize, k: usize) -> f64 {
        self.drifts[i * self.grid.n_steps() + k]
    }

    fn check_row(&self, k: usize) -> Result<()> {
        if k >= self.filled {
            return Err(Error::State(format!(
                "row {k} requested but only rows 0..{} are filled",
                self.filled
            )));
        }
        Ok(())
    }
}

/// Which pairs interact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Interaction {
    /// Every particle interacts with every other one.
    Full,
    /// Particles `0..r` are driftless; the rest interact among `r..N` only.
    PartialDriftless { r: usize },
}

impl Interaction {
    pub(crate) fn validate(&self, n: usize) -> Result<()> {
        if let Interaction::PartialDriftless { r } = *self {
            ensure!(r >= 1 && r < n, Domain, "driftless block size r must satisfy 1 <= r < N, got r={r}, N={n}");
        }
        Ok(())
    }

    fn sources(&self, i: usize) -> Option<usize> {
        match *self {
            Interaction::Full => Some(0),
            Interaction::PartialDriftless { r } => (i >= r).then_some(r),
        }
    }
}

/// Memory integral between particle `i` at row `k` and the history of `j`,
/// zero when the two coincide at time `t_k`.
#[inline]
pub(crate) fn pair_memory(kernel: &SlabKernel, ens: &PathEnsemble, i: usize, j: usize, k: usize, count: &mut SlabCount) -> f64 {
    let xi = ens.position(i, k);
    if xi == ens.position(j, k) {
        return 0.0;
    }
    kernel.history_sum(xi, ens.history(j, k), count)
}

/// Evaluates drifts on a fixed time grid.
#[derive(Debug, Clone)]
pub struct DriftEngine {
    kernel: SlabKernel,
    interaction: Interaction,
}

impl DriftEngine {
    pub fn new(grid: &TimeGrid, params: KernelParams, interaction: Interaction, cutoff: bool) -> Self {
        Self { kernel: SlabKernel::new(grid, params, cutoff), interaction }
    }

    pub fn kernel(&self) -> &SlabKernel {
        &self.kernel
    }

    pub fn interaction(&self) -> Interaction {
        self.interaction
    }

    /// Drift of particle `i` at row `k`, summing partners in ascending order.
    pub fn drift(&self, ens: &PathEnsemble, i: usize, k: usize, count: &mut SlabCount) -> Result<f64> {
        ens.check_row(k)?;
        ensure!(i < ens.n_particles(), Domain, "particle index {i} out of range");
        let chi = self.kernel.params().chi;
        if chi == 0.0 || k == 0 {
            return Ok(0.0);
        }
        let Some(first) = self.interaction.sources(i) else {
            return Ok(0.0);
        };
        let n = ens.n_particles();
        let mut sum = 0.0;
        for j in first..n {
            if j != i {
                sum += pair_memory(&self.kernel, ens, i, j, k, count);
            }
        }
        Ok(chi / n as f64 * sum)
    }

    /// Advances the ensemble from row `k` to row `k+1`.
    pub fn step<N: NoiseSource>(&self, ens: &mut PathEnsemble, k: usize, noise: &N, parallel: bool) -> Result<SlabCount> {
        ensure!(k + 1 < ens.stride(), Domain, "step {k} is past the end of the grid");
        if ens.filled != k + 1 {
            return Err(Error::State(format!(
                "step {k} needs exactly rows 0..={k} filled, have {}",
                ens.filled
            )));
        }
        let n = ens.n_particles();
        let eval = |i: usize| {
            let mut count = SlabCount::default();
            self.drift(ens, i, k, &mut count).map(|b| (b, count))
        };
        let drifts: Vec<(f64, SlabCount)> = if parallel {
            (0..n).into_par_iter().map(eval).collect::<Result<_>>()?
        } else {
            (0..n).map(eval).collect::<Result<_>>()?
        };
        let dt = ens.grid.dt();
        let sqrt_dt = dt.sqrt();
        let stride = ens.stride();
        let n_steps = ens.grid.n_steps();
        let mut total = SlabCount::default();
        for (i, (b, count)) in drifts.into_iter().enumerate() {
            total.add(count);
            let dw = sqrt_dt * noise.step_normal(i, k);
            let x = ens.positions[i * stride + k];
            let next = x + b * dt + dw;
            if !next.is_finite() {
                return Err(Error::Instability(format!("particle {i} left the reals at step {k}")));
            }
            ens.positions[i * stride + k + 1] = next;
            if let Some(inc) = ens.increments.as_mut() {
                inc[i * n_steps + k] = dw;
            }
            ens.drifts[i * n_steps + k] = b;
        }
        ens.filled = k + 2;
        Ok(total)
    }

    /// Runs all steps from the given initial positions.
    pub fn run<N: NoiseSource>(&self, initial: &[f64], grid: TimeGrid, noise: &N, seed: u64, parallel: bool) -> Result<(PathEnsemble, SlabCount)> {
        self.interaction.validate(initial.len())?;
        let mut ens = PathEnsemble::new(initial, grid, seed)?;
        let mut total = SlabCount::default();
        for k in 0..grid.n_steps() {
            total.add(self.step(&mut ens, k, noise, parallel)?);
        }
        Ok((ens, total))
    }
}

/// Drift `b_i(t_k)` of the fully interacting system, with the far-field
/// cutoff enabled.
pub fn drift_eval(i: usize, k: usize, ens: &PathEnsemble, params: &KernelParams) -> Result<f64> {
    let engine = DriftEngine::new(ens.grid(), *params, Interaction::Full, true);
    engine.drift(ens, i, k, &mut SlabCount::default())
}

/// Everything that determines a particle run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_particles: usize,
    pub dt: f64,
    pub n_steps: usize,
    #[serde(default)]
    pub initial: InitialLaw,
    #[serde(default)]
    pub params: KernelParams,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "yes")]
    pub cutoff: bool,
}

fn yes() -> bool {
    true
}

impl SimulationConfig {
    pub fn new(n_particles: usize, grid: TimeGrid, initial: InitialLaw, params: KernelParams, seed: u64) -> Self {
        Self {
            n_particles,
            dt: grid.dt(),
            n_steps: grid.n_steps(),
            initial,
            params,
            seed,
            cutoff: true,
        }
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.dt, self.n_steps)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.n_particles >= 1, Config, "n_particles must be >= 1");
        self.grid()?;
        self.initial.validate()?;
        self.params.validate()
    }
}

/// I.i.d. draws from `law`, particle `i` using its own counter stream.
pub fn initial_positions(n: usize, law: &InitialLaw, noise: &ParticleNoise) -> Vec<f64> {
    (0..n).map(|i| law.sample(noise.initial_uniforms(i))).collect()
}

fn simulate_with(cfg: &SimulationConfig, interaction: Interaction) -> Result<(PathEnsemble, SlabCount)> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let noise = ParticleNoise::new(cfg.seed);
    let x0 = initial_positions(cfg.n_particles, &cfg.initial, &noise);
    let engine = DriftEngine::new(&grid, cfg.params, interaction, cfg.cutoff);
    engine.run(&x0, grid, &noise, cfg.seed, cfg.n_particles >= 32)
}

/// Simulates the fully interacting system.
pub fn simulate(cfg: &SimulationConfig) -> Result<PathEnsemble> {
    simulate_with(cfg, Interaction::Full).map(|(e, _)| e)
}

/// As [`simulate`], also returning slab-evaluation counts.
pub fn simulate_counted(cfg: &SimulationConfig) -> Result<(PathEnsemble, SlabCount)> {
    simulate_with(cfg, Interaction::Full)
}

/// Simulates the system whose first `r` particles are Brownian motions.
pub fn simulate_partial_driftless(r: usize, cfg: &SimulationConfig) -> Result<PathEnsemble> {
    simulate_with(cfg, Interaction::PartialDriftless { r }).map(|(e, _)| e)
}

/// Independent Brownian paths from `ρ₀` using the same noise layout as
/// [`simulate`].
pub fn brownian_reference(cfg: &SimulationConfig) -> Result<PathEnsemble> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let noise = ParticleNoise::new(cfg.seed);
    let x0 = initial_positions(cfg.n_particles, &cfg.initial, &noise);
    let mut ens = PathEnsemble::new(&x0, grid, cfg.seed)?;
    let sqrt_dt = grid.dt().sqrt();
    let stride = grid.n_steps() + 1;
    for k in 0..grid.n_steps() {
        for i in 0..cfg.n_particles {
            let dw = sqrt_dt * noise.step_normal(i, k);
            ens.positions[i * stride + k + 1] = ens.positions[i * stride + k] + dw;
            if let Some(inc) = ens.increments.as_mut() {
                inc[i * grid.n_steps() + k] = dw;
            }
        }
    }
    ens.filled = stride;
    Ok(ens)
}
