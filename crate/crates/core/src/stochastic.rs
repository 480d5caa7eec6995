//! Monte Carlo estimators for the functional `F`, its exponential moments and
//! Girsanov weights.
//!
//! For two paths `x`, `x̂`
//!
//! ```text
//! F_t(x, x̂) = ( ∫_0^t K_{t-s}(x_t − x̂_s) ds · 1{x_t ≠ x̂_t} )²
//! ```
//!
//! evaluated with the same slab discretization as the particle drift.
//! Exponential moments are reduced with a max shift so that large exponents
//! never overflow; the weight carried by the largest sample is reported and
//! estimates dominated by one sample are flagged unstable.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::ensure;
use crate::grid::TimeGrid;
use crate::kernel::{KernelParams, SlabCount, SlabKernel};
use crate::particles::{initial_positions, pair_memory, brownian_reference, PathEnsemble, SimulationConfig};
use crate::rng::{derive_seed, CounterRng, NoiseSource, ParticleNoise};
use crate::stats::mean_and_se;
use crate::{Error, Result};

const TAG_WINDOW: u64 = 0x4c45_4d4d;
const TAG_MOMENT: u64 = 0x4d4f_4d54;
const TAG_GIRSANOV: u64 = 0x4749_5253;
const TAG_NOVIKOV: u64 = 0x4e4f_5649;

/// Minimum sample count for any estimator here.
pub const MIN_SAMPLES: usize = 100;

/// Samples whose largest weight share exceeds this are flagged.
pub const UNSTABLE_WEIGHT_FRACTION: f64 = 0.5;

/// Two discretized paths on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPair {
    grid: TimeGrid,
    x: Vec<f64>,
    x_hat: Vec<f64>,
}

impl PathPair {
    pub fn new(grid: TimeGrid, x: Vec<f64>, x_hat: Vec<f64>) -> Result<Self> {
        let len = grid.n_steps() + 1;
        ensure!(x.len() == len && x_hat.len() == len, Domain, "paths must have n_steps + 1 = {len} entries");
        ensure!(x.iter().chain(&x_hat).all(|v| v.is_finite()), Domain, "paths must be finite");
        Ok(Self { grid, x, x_hat })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn x_hat(&self) -> &[f64] {
        &self.x_hat
    }

    pub fn swapped(&self) -> Self {
        Self { grid: self.grid, x: self.x_hat.clone(), x_hat: self.x.clone() }
    }
}

#[inline]
fn f_value(kernel: &SlabKernel, x_now: f64, x_hat: &[f64], k: usize) -> f64 {
    if k == 0 || x_now == x_hat[k] {
        return 0.0;
    }
    let m = kernel.history_sum(x_now, &x_hat[..k], &mut SlabCount::default());
    m * m
}

/// `F_{t_k}(x, x̂)` for `k ≥ 1`.
pub fn functional_f(pair: &PathPair, k: usize, params: &KernelParams) -> Result<f64> {
    params.validate()?;
    ensure!(k >= 1 && k <= pair.grid.n_steps(), Domain, "step index must lie in 1..={}, got {k}", pair.grid.n_steps());
    let kernel = SlabKernel::new(&pair.grid, *params, true);
    Ok(f_value(&kernel, pair.x[k], &pair.x_hat, k))
}

/// Plain Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let (mean, std_error) = mean_and_se(xs);
        Self { mean, std_error, n: xs.len() }
    }
}

/// Estimate of `E exp(E_s)` from sampled exponents `E_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
    pub max_exponent: f64,
    /// Share of the largest sample in the sum of all samples.
    pub max_weight_fraction: f64,
    pub unstable: bool,
}

impl Estimate {
    pub fn from_exponents(exponents: &[f64]) -> Self {
        let max = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = exponents.iter().map(|e| (e - max).exp()).collect();
        let total: f64 = w.iter().sum();
        let (m, se) = mean_and_se(&w);
        let scale = max.exp();
        let frac = 1.0 / total;
        Self {
            mean: m * scale,
            std_error: se * scale,
            n: exponents.len(),
            max_exponent: max,
            max_weight_fraction: frac,
            unstable: frac > UNSTABLE_WEIGHT_FRACTION || !(m * scale).is_finite(),
        }
    }

    /// Whether `value` lies within `z` standard errors.
    pub fn covers(&self, value: f64, z: f64) -> bool {
        (self.mean - value).abs() <= z * self.std_error
    }
}

/// Window integrals `∫_{t1}^{t2} E F_t(w, x) dt` with `w` a Brownian motion
/// started afresh at `t1`.
#[derive(Debug, Clone)]
pub struct WindowEstimator {
    pub grid: TimeGrid,
    pub params: KernelParams,
    /// Position of `w` at time `t1`.
    pub start: f64,
}

impl WindowEstimator {
    pub fn new(grid: TimeGrid, params: KernelParams, start: f64) -> Self {
        Self { grid, params, start }
    }

    /// Estimates the window integral with the trapezoid rule in time.
    pub fn estimate(&self, t1: f64, t2: f64, x_path: &[f64], n_samples: usize, seed: u64) -> Result<MeanEstimate> {
        self.params.validate()?;
        ensure!(n_samples >= MIN_SAMPLES, Domain, "need at least {MIN_SAMPLES} samples, got {n_samples}");
        ensure!(0.0 <= t1 && t1 <= t2 && t2 <= self.grid.horizon() + 1e-12, Domain, "need 0 <= t1 <= t2 <= T");
        ensure!(x_path.len() == self.grid.n_steps() + 1, Domain, "x path has wrong length");
        ensure!(self.start.is_finite(), Domain, "start must be finite");
        let (Some(k1), Some(k2)) = (self.grid.index_of(t1), self.grid.index_of(t2)) else {
            return Err(Error::Domain(format!("window [{t1}, {t2}] is not on the time grid")));
        };
        if k1 == k2 {
            return Ok(MeanEstimate { mean: 0.0, std_error: 0.0, n: n_samples });
        }
        let kernel = SlabKernel::new(&self.grid, self.params, true);
        let rng = CounterRng::new(derive_seed(seed, TAG_WINDOW, 0));
        let dt = self.grid.dt();
        let sqrt_dt = dt.sqrt();
        let samples: Vec<f64> = (0..n_samples)
            .into_par_iter()
            .map(|s| {
                let mut w = self.start;
                let mut acc = 0.0;
                for k in k1..=k2 {
                    let f = f_value(&kernel, w, x_path, k);
                    acc += if k == k1 || k == k2 { 0.5 * f } else { f };
                    w += sqrt_dt * rng.normal(s as u64, k as u64);
                }
                acc * dt
            })
            .collect();
        Ok(MeanEstimate::from_samples(&samples))
    }
}

/// Window integral of `E F_t(w, x)` for `λ = 0` and `w(t1) = 0`.
pub fn window_integral_mc(t1: f64, t2: f64, x_path: &[f64], n_samples: usize, grid: &TimeGrid, seed: u64) -> Result<MeanEstimate> {
    WindowEstimator::new(*grid, KernelParams::default(), 0.0).estimate(t1, t2, x_path, n_samples, seed)
}

/// Window integrals `[t1, t1 + len]` for each length, and the log-log slope
/// of the estimates against the lengths.
pub fn window_scaling(
    estimator: &WindowEstimator,
    t1: f64,
    lengths: &[f64],
    x_path: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<(Vec<MeanEstimate>, f64)> {
    ensure!(lengths.len() >= 2, Domain, "need at least two window lengths");
    let est = lengths
        .iter()
        .map(|&l| estimator.estimate(t1, t1 + l, x_path, n_samples, seed))
        .collect::<Result<Vec<_>>>()?;
    let means: Vec<f64> = est.iter().map(|e| e.mean).collect();
    ensure!(means.iter().all(|&m| m > 0.0), Domain, "window estimates must be positive for a log-log fit");
    Ok((est, crate::stats::log_log_slope(lengths, &means)))
}

/// Law of the second path `Y`, drawn independently of `w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PathLaw {
    /// Brownian motion started at `start`.
    Brownian { start: f64 },
    /// The constant path.
    Constant { value: f64 },
}

impl PathLaw {
    fn fill(&self, rng: &CounterRng, stream: u64, sqrt_dt: f64, out: &mut [f64]) {
        match *self {
            PathLaw::Constant { value } => out.fill(value),
            PathLaw::Brownian { start } => {
                out[0] = start;
                for k in 1..out.len() {
                    out[k] = out[k - 1] + sqrt_dt * rng.normal(stream, k as u64);
                }
            }
        }
    }
}

/// Configuration of an exponential-moment estimate of
/// `E exp{α' ∫_0^T F_t dt}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpMomentConfig {
    pub alpha: f64,
    /// With `Some(N)` the exponent is scaled by `1/N` and the roles of the
    /// two paths are swapped: the integrand is `F_t(Y, w)`.
    #[serde(default)]
    pub scale_inv_n: Option<usize>,
    pub dt: f64,
    pub n_steps: usize,
    pub law: PathLaw,
    pub n_samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub params: KernelParams,
}

impl ExpMomentConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.alpha > 0.0 && self.alpha.is_finite(), Domain, "alpha must be > 0");
        ensure!(self.n_samples >= MIN_SAMPLES, Domain, "need at least {MIN_SAMPLES} samples");
        if let Some(n) = self.scale_inv_n {
            ensure!(n >= 1, Domain, "N must be >= 1");
        }
        TimeGrid::new(self.dt, self.n_steps)?;
        self.params.validate()
    }
}

/// Sampled `∫_0^T F_t dt` (left Riemann sum); `swapped` integrates
/// `F_t(Y, w)` instead of `F_t(w, Y)`. Sample `s` reads streams `2s`, `2s+1`.
pub fn sample_f_integrals(
    grid: &TimeGrid,
    params: &KernelParams,
    law: &PathLaw,
    swapped: bool,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    params.validate()?;
    let kernel = SlabKernel::new(grid, *params, true);
    let rng = CounterRng::new(derive_seed(seed, TAG_MOMENT, 0));
    let len = grid.n_steps() + 1;
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let brownian = PathLaw::Brownian { start: 0.0 };
    Ok((0..n_samples)
        .into_par_iter()
        .map_init(
            || (vec![0.0; len], vec![0.0; len]),
            |(w, y), s| {
                brownian.fill(&rng, 2 * s as u64, sqrt_dt, w);
                law.fill(&rng, 2 * s as u64 + 1, sqrt_dt, y);
                let (a, b) = if swapped { (&*y, &*w) } else { (&*w, &*y) };
                (1..grid.n_steps()).map(|k| f_value(&kernel, a[k], b, k)).sum::<f64>() * dt
            },
        )
        .collect())
}

/// Estimates `E exp{α' ∫_0^T F_t dt}`.
pub fn exp_moment_mc(cfg: &ExpMomentConfig) -> Result<Estimate> {
    cfg.validate()?;
    let grid = TimeGrid::new(cfg.dt, cfg.n_steps)?;
    let ints = sample_f_integrals(&grid, &cfg.params, &cfg.law, cfg.scale_inv_n.is_some(), cfg.n_samples, cfg.seed)?;
    let a = cfg.alpha / cfg.scale_inv_n.unwrap_or(1) as f64;
    Ok(Estimate::from_exponents(&ints.iter().map(|v| a * v).collect::<Vec<_>>()))
}

/// `1/N`-scaled estimates for each `N` from one set of sampled paths, so the
/// estimates are comparable across `N`. `cfg.scale_inv_n` is ignored.
pub fn exp_moment_scan(cfg: &ExpMomentConfig, ns: &[usize]) -> Result<Vec<Estimate>> {
    cfg.validate()?;
    ensure!(ns.iter().all(|&n| n >= 1), Domain, "N must be >= 1");
    let grid = TimeGrid::new(cfg.dt, cfg.n_steps)?;
    let ints = sample_f_integrals(&grid, &cfg.params, &cfg.law, true, cfg.n_samples, cfg.seed)?;
    Ok(ns
        .iter()
        .map(|&n| {
            let a = cfg.alpha / n as f64;
            Estimate::from_exponents(&ints.iter().map(|v| a * v).collect::<Vec<_>>())
        })
        .collect())
}

/// Running pieces of a log exponential martingale.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GirsanovAccumulator {
    /// Number of driftless particles; 0 is the full-drift transform.
    pub r: usize,
    pub ito_term: f64,
    pub quad_term: f64,
    pub log_weight: f64,
}

impl GirsanovAccumulator {
    fn new(r: usize) -> Self {
        Self { r, ..Self::default() }
    }

    /// Adds one step with drift vector `beta` and increments `dw`.
    fn push(&mut self, beta: &[f64], dw: &[f64], dt: f64) {
        let dot: f64 = beta.iter().zip(dw).map(|(b, w)| b * w).sum();
        let sq: f64 = beta.iter().map(|b| b * b).sum();
        if self.r == 0 {
            self.ito_term += dot;
        } else {
            self.ito_term -= dot;
        }
        self.quad_term += sq * dt;
        self.log_weight = self.ito_term - 0.5 * self.quad_term;
    }

    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }
}

// β at one step from the pair matrix `s` (row l, column j: memory of l
// against j), filled for every needed pair.
fn beta_from_pairs(s: &[f64], n: usize, r: usize, chi: f64, beta: &mut [f64]) {
    let c = chi / n as f64;
    for l in 0..n {
        let row = &s[l * n..(l + 1) * n];
        let mut sum = 0.0;
        if r == 0 || l < r {
            for (j, v) in row.iter().enumerate() {
                if j != l {
                    sum += v;
                }
            }
        } else {
            for v in &row[..r] {
                sum += v;
            }
        }
        beta[l] = c * sum;
    }
}

fn pair_matrix(kernel: &SlabKernel, ens: &PathEnsemble, k: usize, s: &mut [f64]) {
    let n = ens.n_particles();
    let mut count = SlabCount::default();
    for l in 0..n {
        for j in 0..n {
            s[l * n + j] = if j == l { 0.0 } else { pair_memory(kernel, ens, l, j, k, &mut count) };
        }
    }
}

/// Accumulates the Girsanov weight along a complete ensemble with stored
/// increments. Entry `k` of the result holds the sums over steps `0..k`.
///
/// For `r ≥ 1` the drift vector is `β_i = b_i` (full drift) for `i < r` and
/// `β_l = (χ/N) Σ_{i<r} S_{li}` for `l ≥ r`, and the weight is
/// `exp{−Σβ·ΔW − ½Σ|β|²dt}`. For `r = 0` it is `exp{+ΣB·ΔW − ½Σ|B|²dt}`
/// with the full drift `B`.
pub fn girsanov_accumulate(ens: &PathEnsemble, r: usize, params: &KernelParams) -> Result<Vec<GirsanovAccumulator>> {
    params.validate()?;
    let n = ens.n_particles();
    ensure!(r < n, Domain, "r must satisfy 0 <= r < N, got r={r}, N={n}");
    let Some(inc) = ens.increments() else {
        return Err(Error::State("ensemble does not retain its Brownian increments".into()));
    };
    if !ens.is_complete() {
        return Err(Error::State("ensemble is not fully simulated".into()));
    }
    let grid = *ens.grid();
    let n_steps = grid.n_steps();
    let kernel = SlabKernel::new(&grid, *params, true);
    let mut acc = GirsanovAccumulator::new(r);
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(acc);
    let mut s = vec![0.0; n * n];
    let mut beta = vec![0.0; n];
    let mut dw = vec![0.0; n];
    for k in 0..n_steps {
        if params.chi != 0.0 && k > 0 {
            pair_matrix(&kernel, ens, k, &mut s);
            beta_from_pairs(&s, n, r, params.chi, &mut beta);
        } else {
            beta.fill(0.0);
        }
        for (i, d) in dw.iter_mut().enumerate() {
            *d = inc[i * n_steps + k];
        }
        acc.push(&beta, &dw, grid.dt());
        out.push(acc);
    }
    Ok(out)
}

/// Simulates the partially driftless system (`r ≥ 1`) or independent
/// Brownian motions (`r = 0`) and accumulates the Girsanov weight in the same
/// pass, evaluating every pair memory once per step. Paths and weights equal
/// those of [`crate::particles::simulate_partial_driftless`] /
/// [`brownian_reference`] followed by [`girsanov_accumulate`].
pub fn simulate_with_weight(cfg: &SimulationConfig, r: usize) -> Result<(PathEnsemble, GirsanovAccumulator)> {
    cfg.validate()?;
    let n = cfg.n_particles;
    ensure!(r < n, Domain, "r must satisfy 0 <= r < N, got r={r}, N={n}");
    let grid = cfg.grid()?;
    let noise = ParticleNoise::new(cfg.seed);
    let x0 = initial_positions(n, &cfg.initial, &noise);
    let mut ens = PathEnsemble::new(&x0, grid, cfg.seed)?;
    let kernel = SlabKernel::new(&grid, cfg.params, cfg.cutoff);
    let chi = cfg.params.chi;
    let c = chi / n as f64;
    let n_steps = grid.n_steps();
    let stride = n_steps + 1;
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let mut acc = GirsanovAccumulator::new(r);
    let mut s = vec![0.0; n * n];
    let mut beta = vec![0.0; n];
    let mut drift = vec![0.0; n];
    let mut dw = vec![0.0; n];
    for k in 0..n_steps {
        if chi != 0.0 && k > 0 {
            pair_matrix(&kernel, &ens, k, &mut s);
            beta_from_pairs(&s, n, r, chi, &mut beta);
            for l in 0..n {
                drift[l] = if r == 0 || l < r {
                    0.0
                } else {
                    let mut sum = 0.0;
                    for j in r..n {
                        if j != l {
                            sum += s[l * n + j];
                        }
                    }
                    c * sum
                };
            }
        } else {
            beta.fill(0.0);
            drift.fill(0.0);
        }
        for i in 0..n {
            dw[i] = sqrt_dt * noise.step_normal(i, k);
            let x = ens.positions[i * stride + k];
            let next = if r == 0 { x + dw[i] } else { x + drift[i] * dt + dw[i] };
            if !next.is_finite() {
                return Err(Error::Instability(format!("particle {i} left the reals at step {k}")));
            }
            ens.positions[i * stride + k + 1] = next;
            if let Some(inc) = ens.increments.as_mut() {
                inc[i * n_steps + k] = dw[i];
            }
            ens.drifts[i * n_steps + k] = drift[i];
        }
        ens.filled = k + 2;
        acc.push(&beta, &dw, dt);
    }
    Ok((ens, acc))
}

/// Settings of a Girsanov Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GirsanovConfig {
    pub sim: SimulationConfig,
    pub r: usize,
    pub replicas: usize,
}

/// Estimates `E Z_T^{(r)}` over independent replicas; replica `q` runs with
/// seed `derive_seed(sim.seed, ·, q)`.
pub fn girsanov_mc(cfg: &GirsanovConfig) -> Result<Estimate> {
    ensure!(cfg.replicas >= MIN_SAMPLES, Domain, "need at least {MIN_SAMPLES} replicas");
    cfg.sim.validate()?;
    ensure!(cfg.r < cfg.sim.n_particles, Domain, "r must be < N");
    let logs = (0..cfg.replicas)
        .into_par_iter()
        .map(|q| {
            let mut sim = cfg.sim.clone();
            sim.seed = derive_seed(cfg.sim.seed, TAG_GIRSANOV, q as u64);
            simulate_with_weight(&sim, cfg.r).map(|(_, acc)| acc.log_weight)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Estimate::from_exponents(&logs))
}

/// `∫_0^T |B_t|² dt` along a Brownian ensemble, with `B` the full drift.
pub fn drift_energy(ens: &PathEnsemble, params: &KernelParams) -> Result<f64> {
    let acc = girsanov_accumulate(ens, 0, params)?;
    Ok(acc.last().map_or(0.0, |a| a.quad_term))
}

/// Estimates `E exp{κ ∫_0^T |B_t|² dt}` along Brownian ensembles for each
/// `κ`, using the same samples for every `κ`.
pub fn novikov_probe(sim: &SimulationConfig, kappas: &[f64], n_samples: usize) -> Result<Vec<Estimate>> {
    sim.validate()?;
    ensure!(n_samples >= MIN_SAMPLES, Domain, "need at least {MIN_SAMPLES} samples");
    ensure!(kappas.iter().all(|&k| k > 0.0 && k.is_finite()), Domain, "kappa must be > 0");
    let energies = (0..n_samples)
        .into_par_iter()
        .map(|q| {
            let mut c = sim.clone();
            c.seed = derive_seed(sim.seed, TAG_NOVIKOV, q as u64);
            drift_energy(&brownian_reference(&c)?, &sim.params)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(kappas
        .iter()
        .map(|&k| Estimate::from_exponents(&energies.iter().map(|e| k * e).collect::<Vec<_>>()))
        .collect())
}
