//! Distances between empirical measures and densities, kernel density
//! estimates, and the propagation-of-chaos study.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::ensure;
use crate::grid::SpatialGrid;
use crate::initial::std_normal_cdf;
use crate::particles::{simulate, PathEnsemble, SimulationConfig};
use crate::pde::{pde_solve, DensityGrid, PdeSolution};
use crate::rng::derive_seed;
use crate::stats::{log_log_slope, mean_and_se, quantile_sorted, sorted};
use crate::Result;

const TAG_CHAOS: u64 = 0x4348_414f;

/// `W₁` between two empirical measures: `∫ |F_a − F_b| dx`.
pub fn wasserstein1_samples(a: &[f64], b: &[f64]) -> Result<f64> {
    ensure!(!a.is_empty() && !b.is_empty(), Domain, "empirical measures need at least one sample");
    ensure!(a.iter().chain(b).all(|v| v.is_finite()), Domain, "samples must be finite");
    let a = sorted(a);
    let b = sorted(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut prev = a[0].min(b[0]);
    let mut total = 0.0;
    while i < a.len() || j < b.len() {
        let x = if j == b.len() || (i < a.len() && a[i] <= b[j]) { a[i] } else { b[j] };
        total += (i as f64 / na - j as f64 / nb).abs() * (x - prev);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        prev = x;
    }
    Ok(total)
}

/// Distribution function of a cell-constant density, normalised to unit
/// mass; 0 left of the grid and 1 right of it.
fn density_cdf(edge_cdf: &[f64], grid: &SpatialGrid, x: f64) -> f64 {
    let n = grid.n_cells();
    let total = edge_cdf[n];
    if x <= grid.x_min() {
        return 0.0;
    }
    if x >= grid.x_max() {
        return 1.0;
    }
    let s = (x - grid.x_min()) / grid.h();
    let i = (s.floor() as usize).min(n - 1);
    let w = s - i as f64;
    (edge_cdf[i] * (1.0 - w) + edge_cdf[i + 1] * w) / total
}

// ∫_0^len |c − (f0 + (f1 − f0)·s/len)| ds
fn abs_linear_integral(c: f64, f0: f64, f1: f64, len: f64) -> f64 {
    let (d0, d1) = (f0 - c, f1 - c);
    if d0 * d1 >= 0.0 {
        0.5 * (d0.abs() + d1.abs()) * len
    } else {
        0.5 * (d0 * d0 + d1 * d1) / (d0 - d1).abs() * len
    }
}

/// `W₁` between an empirical measure and a density that is constant on each
/// cell, computed exactly.
pub fn wasserstein1_density(samples: &[f64], density: &DensityGrid) -> Result<f64> {
    ensure!(!samples.is_empty(), Domain, "empirical measure needs at least one sample");
    ensure!(samples.iter().all(|v| v.is_finite()), Domain, "samples must be finite");
    ensure!(density.mass() > 0.0, Domain, "reference density has no mass");
    let grid = *density.grid();
    let cdf = density.edge_cdf();
    let s = sorted(samples);
    let n = s.len() as f64;
    let mut pts: Vec<f64> = (0..=grid.n_cells()).map(|i| grid.edge(i)).chain(s.iter().copied()).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut below = 0;
    let mut total = 0.0;
    for w in pts.windows(2) {
        let (p, q) = (w[0], w[1]);
        while below < s.len() && s[below] <= p {
            below += 1;
        }
        let c = below as f64 / n;
        total += abs_linear_integral(c, density_cdf(&cdf, &grid, p), density_cdf(&cdf, &grid, q), q - p);
    }
    Ok(total)
}

/// Silverman's rule `0.9·min(σ, IQR/1.34)·n^{-1/5}`.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    ensure!(samples.len() >= 2, Domain, "bandwidth rule needs at least two samples");
    let (m, _) = mean_and_se(samples);
    let sd = (samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (samples.len() - 1) as f64).sqrt();
    let s = sorted(samples);
    let iqr = quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    ensure!(spread > 0.0, Domain, "samples are all equal; no bandwidth");
    Ok(0.9 * spread * (samples.len() as f64).powf(-0.2))
}

/// Bandwidth selection for kernel density estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Bandwidth {
    Silverman,
    Fixed { value: f64 },
}

impl Bandwidth {
    pub fn select(&self, samples: &[f64]) -> Result<f64> {
        match *self {
            Bandwidth::Silverman => silverman_bandwidth(samples),
            Bandwidth::Fixed { value } => {
                ensure!(value > 0.0 && value.is_finite(), Domain, "bandwidth must be > 0, got {value}");
                Ok(value)
            }
        }
    }
}

/// Gaussian kernel density estimate as exact cell averages, renormalised to
/// unit mass. Fails if more than 1e-3 of the mass falls outside the grid.
pub fn density_estimate(samples: &[f64], grid: &SpatialGrid, bandwidth: f64) -> Result<DensityGrid> {
    ensure!(bandwidth > 0.0 && bandwidth.is_finite(), Domain, "bandwidth must be > 0, got {bandwidth}");
    ensure!(!samples.is_empty(), Domain, "density estimate needs samples");
    let n = grid.n_cells();
    let h = grid.h();
    let reach = 9.0 * bandwidth;
    let mut mass = vec![0.0; n];
    for &x in samples {
        let lo = (((x - reach - grid.x_min()) / h).floor().max(0.0) as usize).min(n);
        let hi = (((x + reach - grid.x_min()) / h).ceil().max(0.0) as usize).min(n);
        if lo >= hi {
            continue;
        }
        let mut left = std_normal_cdf((grid.edge(lo) - x) / bandwidth);
        for (i, m) in mass.iter_mut().enumerate().take(hi).skip(lo) {
            let right = std_normal_cdf((grid.edge(i + 1) - x) / bandwidth);
            *m += right - left;
            left = right;
        }
    }
    let total: f64 = mass.iter().sum::<f64>() / samples.len() as f64;
    ensure!(
        total >= 0.999,
        Domain,
        "only {total:.6} of the estimate lies on [{}, {}]; widen the grid",
        grid.x_min(),
        grid.x_max()
    );
    let scale = 1.0 / (mass.iter().sum::<f64>() * h);
    DensityGrid::new(*grid, mass.iter().map(|m| (m * scale).max(0.0)).collect())
}

/// One entry of an `L²` decay series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    pub t: f64,
    /// `t^{1/4}·‖ρ_t‖₂`.
    pub scaled_norm: f64,
    /// Bandwidths used and the corresponding scaled norms (empty for exact
    /// densities).
    pub kde: Vec<(f64, f64)>,
}

fn step_of(solution_times: &crate::grid::TimeGrid, t: f64) -> Result<usize> {
    ensure!(t > 0.0, Domain, "decay times must be > 0, got {t}");
    solution_times
        .index_of(t)
        .ok_or_else(|| crate::Error::Domain(format!("time {t} is not on the snapshot grid")))
}

/// `t^{1/4}·‖ρ_t‖₂` from PDE snapshots.
pub fn l2_decay_snapshots(solution: &PdeSolution, times: &[f64]) -> Result<Vec<DecayPoint>> {
    times
        .iter()
        .map(|&t| {
            let k = step_of(&solution.times, t)?;
            let norm = solution.snapshot(k).rho.l2_norm();
            Ok(DecayPoint { t, scaled_norm: t.powf(0.25) * norm, kde: Vec::new() })
        })
        .collect()
}

/// `t^{1/4}·‖ρ̂_t‖₂` from kernel density estimates of an ensemble, at the
/// selected bandwidth and at twice that bandwidth.
pub fn l2_decay_ensemble(ens: &PathEnsemble, times: &[f64], grid: &SpatialGrid, rule: Bandwidth) -> Result<Vec<DecayPoint>> {
    times
        .iter()
        .map(|&t| {
            let k = step_of(ens.grid(), t)?;
            let xs = ens.positions_at(k);
            let bw = rule.select(&xs)?;
            let kde = [bw, 2.0 * bw]
                .iter()
                .map(|&b| Ok((b, t.powf(0.25) * density_estimate(&xs, grid, b)?.l2_norm())))
                .collect::<Result<Vec<_>>>()?;
            Ok(DecayPoint { t, scaled_norm: kde[0].1, kde })
        })
        .collect()
}

/// Parameters of a propagation-of-chaos study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChaosConfig {
    pub n_values: Vec<usize>,
    pub replicas: usize,
    /// Evaluation times, on the simulation grid.
    pub times: Vec<f64>,
    /// Particle settings; `n_particles` and `seed` are overridden per run.
    pub sim: SimulationConfig,
    /// Half-width of the PDE reference grid.
    pub half_width: f64,
    /// Cell width of the PDE reference grid.
    pub h: f64,
}

impl ChaosConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(!self.n_values.is_empty(), Config, "n_values must not be empty");
        ensure!(self.n_values.iter().all(|&n| n >= 1), Config, "ensemble sizes must be >= 1");
        ensure!(self.replicas >= 2, Config, "need at least two replicas for standard errors");
        ensure!(!self.times.is_empty(), Config, "times must not be empty");
        self.sim.validate()?;
        let grid = self.sim.grid()?;
        for &t in &self.times {
            step_of(&grid, t)?;
        }
        SpatialGrid::symmetric(self.half_width, self.h)?;
        Ok(())
    }

    pub fn spatial_grid(&self) -> Result<SpatialGrid> {
        SpatialGrid::symmetric(self.half_width, self.h)
    }

    /// Seed of replica `q` at ensemble size `n`.
    pub fn replica_seed(&self, n: usize, q: usize) -> u64 {
        derive_seed(self.sim.seed, TAG_CHAOS ^ ((n as u64) << 32), q as u64)
    }

    /// PDE reference snapshots on the simulation grid.
    pub fn reference(&self) -> Result<PdeSolution> {
        pde_solve(&self.sim.initial, self.spatial_grid()?, self.sim.grid()?, &self.sim.params, None)
    }
}

/// Outcome of one particle run of a chaos study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaResult {
    pub n: usize,
    pub replica: usize,
    /// Written as hex: derived seeds overflow TOML's signed integers.
    #[serde(with = "hex_seed")]
    pub seed: u64,
    /// `W₁(μ^N_t, ρ_t)` per study time.
    pub w1: Vec<f64>,
    pub max_abs_position: f64,
}

mod hex_seed {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{seed:#018x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let text = String::deserialize(d)?;
        let digits = text.strip_prefix("0x").unwrap_or(&text);
        u64::from_str_radix(digits, 16).map_err(serde::de::Error::custom)
    }
}

/// Runs replica `q` at size `n` and measures it against `reference`.
pub fn chaos_replica(cfg: &ChaosConfig, reference: &PdeSolution, n: usize, q: usize) -> Result<ReplicaResult> {
    let mut sim = cfg.sim.clone();
    sim.n_particles = n;
    sim.seed = cfg.replica_seed(n, q);
    let ens = simulate(&sim)?;
    let w1 = cfg
        .times
        .iter()
        .map(|&t| {
            let k = step_of(ens.grid(), t)?;
            wasserstein1_density(&ens.positions_at(k), &reference.snapshot(k).rho)
        })
        .collect::<Result<Vec<_>>>()?;
    let max_abs_position = ens.positions().iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    Ok(ReplicaResult { n, replica: q, seed: sim.seed, w1, max_abs_position })
}

/// Aggregated propagation-of-chaos measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosReport {
    pub n_values: Vec<usize>,
    pub times: Vec<f64>,
    /// `w1_mean[a][b]`: mean over replicas at `n_values[a]`, `times[b]`.
    pub w1_mean: Vec<Vec<f64>>,
    pub w1_se: Vec<Vec<f64>>,
    pub replicas: usize,
    /// Log-log slope of mean `W₁` against `N`, per time.
    pub fit: Vec<f64>,
    pub l2_decay: Vec<DecayPoint>,
    /// Largest `|X|` seen at each size.
    pub max_abs_position: Vec<f64>,
}

impl ChaosReport {
    /// Aggregates replica results (any order) for `cfg`.
    pub fn aggregate(cfg: &ChaosConfig, reference: &PdeSolution, results: &[ReplicaResult]) -> Result<Self> {
        let nt = cfg.times.len();
        let mut w1_mean = Vec::new();
        let mut w1_se = Vec::new();
        let mut max_abs = Vec::new();
        for &n in &cfg.n_values {
            let mut rows: Vec<&ReplicaResult> = results.iter().filter(|r| r.n == n).collect();
            rows.sort_by_key(|r| r.replica);
            ensure!(rows.len() == cfg.replicas, State, "size {n} has {} of {} replicas", rows.len(), cfg.replicas);
            let (mut means, mut ses) = (Vec::new(), Vec::new());
            for b in 0..nt {
                let col: Vec<f64> = rows.iter().map(|r| r.w1[b]).collect();
                let (m, se) = mean_and_se(&col);
                means.push(m);
                ses.push(se);
            }
            w1_mean.push(means);
            w1_se.push(ses);
            max_abs.push(rows.iter().map(|r| r.max_abs_position).fold(0.0, f64::max));
        }
        let ns: Vec<f64> = cfg.n_values.iter().map(|&n| n as f64).collect();
        let fit = (0..nt)
            .map(|b| {
                if ns.len() < 2 {
                    return f64::NAN;
                }
                let col: Vec<f64> = w1_mean.iter().map(|row| row[b]).collect();
                log_log_slope(&ns, &col)
            })
            .collect();
        let l2_decay = l2_decay_snapshots(reference, &cfg.times)?;
        Ok(Self {
            n_values: cfg.n_values.clone(),
            times: cfg.times.clone(),
            w1_mean,
            w1_se,
            replicas: cfg.replicas,
            fit,
            l2_decay,
            max_abs_position: max_abs,
        })
    }

    /// Whether mean `W₁` at time index `b` strictly decreases in `N` by more
    /// than `z` combined standard errors between consecutive sizes.
    pub fn strictly_decreasing(&self, b: usize, z: f64) -> bool {
        self.w1_mean.windows(2).zip(self.w1_se.windows(2)).all(|(m, s)| {
            let gap = m[0][b] - m[1][b];
            gap > z * (s[0][b].powi(2) + s[1][b].powi(2)).sqrt()
        })
    }
}

/// Runs every replica of the study and aggregates.
pub fn chaos_study(cfg: &ChaosConfig) -> Result<ChaosReport> {
    cfg.validate()?;
    let reference = cfg.reference()?;
    let jobs: Vec<(usize, usize)> =
        cfg.n_values.iter().flat_map(|&n| (0..cfg.replicas).map(move |q| (n, q))).collect();
    let results = jobs
        .par_iter()
        .map(|&(n, q)| chaos_replica(cfg, &reference, n, q))
        .collect::<Result<Vec<_>>>()?;
    ChaosReport::aggregate(cfg, &reference, &results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use crate::initial::InitialLaw;
    use crate::kernel::KernelParams;

    #[test]
    fn two_point_example() {
        assert_eq!(wasserstein1_samples(&[0.0, 1.0], &[0.0, 3.0]).unwrap(), 1.0);
        assert_eq!(wasserstein1_samples(&[0.2, 1.0], &[1.0, 0.2]).unwrap(), 0.0);
        let a = [0.1, -0.4, 2.0];
        let b: Vec<f64> = a.iter().map(|x| x + 0.75).collect();
        assert!((wasserstein1_samples(&a, &b).unwrap() - 0.75).abs() < 1e-15);
        assert!(wasserstein1_samples(&[], &a).is_err());
    }

    #[test]
    fn unequal_sizes_match_quantile_coupling() {
        // every point of {0, 1, 2} moves to 0.5
        let d = wasserstein1_samples(&[0.0, 1.0, 2.0], &[0.5]).unwrap();
        let expected = (0.5 - 0.0) / 3.0 + (1.0 - 0.5) / 3.0 + (2.0 - 0.5) / 3.0;
        assert!((d - expected).abs() < 1e-15);
    }

    #[test]
    fn sample_vs_density_agrees_with_quantile_samples() {
        let grid = SpatialGrid::symmetric(8.0, 0.01).unwrap();
        let law = InitialLaw::Gaussian { mean: 0.3, std: 1.0 };
        let dens = DensityGrid::from_law(&law, grid, 0.0).unwrap();
        // A point mass at the median is at distance E|X − median|.
        let d = wasserstein1_density(&[0.3], &dens).unwrap();
        assert!((d - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-4, "{d}");
        let shifted = wasserstein1_density(&[5.3], &dens).unwrap();
        assert!((shifted - 5.0).abs() < 1e-4);
    }

    #[test]
    fn kde_of_a_single_point_is_the_kernel() {
        let grid = SpatialGrid::symmetric(4.0, 0.01).unwrap();
        let kde = density_estimate(&[0.0], &grid, 0.5).unwrap();
        assert!((kde.mass() - 1.0).abs() < 1e-12);
        let peak = kde.value_at(0.0);
        assert!((peak - crate::initial::std_normal_pdf(0.0) / 0.5).abs() < 1e-3);
        assert!(density_estimate(&[0.0], &grid, 0.0).is_err());
        assert!(density_estimate(&[3.9], &grid, 0.5).is_err());
    }

    #[test]
    fn kde_ignores_sample_order() {
        let grid = SpatialGrid::symmetric(4.0, 0.05).unwrap();
        let xs = [0.3, -1.2, 0.8, 0.0, 2.1];
        let mut ys = xs;
        ys.reverse();
        let a = density_estimate(&xs, &grid, 0.3).unwrap();
        let b = density_estimate(&ys, &grid, 0.3).unwrap();
        assert!(a.l1_distance(&b).unwrap() < 1e-14);
    }

    #[test]
    fn silverman_on_spread_samples() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let bw = silverman_bandwidth(&xs).unwrap();
        assert!(bw > 0.01 && bw < 0.1);
        assert!(silverman_bandwidth(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn decay_rejects_nonpositive_times() {
        let grid = SpatialGrid::symmetric(8.0, 0.1).unwrap();
        let times = TimeGrid::new(0.05, 4).unwrap();
        let sol = pde_solve(&InitialLaw::default(), grid, times, &KernelParams::new(0.0, 0.0).unwrap(), None).unwrap();
        assert!(l2_decay_snapshots(&sol, &[0.0]).is_err());
        let s = l2_decay_snapshots(&sol, &[0.05, 0.1, 0.2]).unwrap();
        assert!(s.iter().all(|p| p.scaled_norm > 0.0));
        let norms: Vec<f64> = s.iter().map(|p| p.scaled_norm / p.t.powf(0.25)).collect();
        assert!(norms.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn small_study_is_deterministic() {
        let sim = SimulationConfig::new(
            1,
            TimeGrid::new(0.05, 4).unwrap(),
            InitialLaw::default(),
            KernelParams::default(),
            9,
        );
        let cfg = ChaosConfig { n_values: vec![4, 8], replicas: 2, times: vec![0.1, 0.2], sim, half_width: 8.0, h: 0.1 };
        let a = chaos_study(&cfg).unwrap();
        let b = chaos_study(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.w1_mean.len(), 2);
        assert!(a.w1_mean.iter().flatten().all(|&w| w > 0.0));
        assert!(a.w1_se.iter().flatten().all(|&s| s >= 0.0));
    }
}
