//! Initial laws `ρ₀` of the particles.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::ensure;
use crate::grid::SpatialGrid;
use crate::rng::box_muller;
use crate::Result;

/// A probability law on the line with a density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialLaw {
    Gaussian { mean: f64, std: f64 },
    Uniform { lo: f64, hi: f64 },
    /// Mixture `w·N(mean_a, std_a²) + (1-w)·N(mean_b, std_b²)`.
    TwoBump { weight: f64, mean_a: f64, std_a: f64, mean_b: f64, std_b: f64 },
}

impl Default for InitialLaw {
    fn default() -> Self {
        InitialLaw::Gaussian { mean: 0.0, std: 1.0 }
    }
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

fn gaussian_cdf(x: f64, mean: f64, var: f64) -> f64 {
    std_normal_cdf((x - mean) / var.sqrt())
}

fn gaussian_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let s = var.sqrt();
    std_normal_pdf((x - mean) / s) / s
}

impl InitialLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InitialLaw::Gaussian { mean, std } => {
                ensure!(mean.is_finite(), Config, "gaussian mean must be finite");
                ensure!(std.is_finite() && std > 0.0, Config, "gaussian std must be > 0, got {std}");
            }
            InitialLaw::Uniform { lo, hi } => {
                ensure!(lo.is_finite() && hi.is_finite() && lo < hi, Config, "uniform law needs lo < hi");
            }
            InitialLaw::TwoBump { weight, mean_a, std_a, mean_b, std_b } => {
                ensure!((0.0..=1.0).contains(&weight), Config, "mixture weight must lie in [0, 1]");
                ensure!(mean_a.is_finite() && mean_b.is_finite(), Config, "mixture means must be finite");
                ensure!(std_a > 0.0 && std_b > 0.0, Config, "mixture stds must be > 0");
            }
        }
        Ok(())
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.convolved_pdf(x, 0.0)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.convolved_cdf(x, 0.0)
    }

    /// Density of `X₀ + W_t`, i.e. `ρ₀ ⋆ g_t`.
    pub fn convolved_pdf(&self, x: f64, t: f64) -> f64 {
        match *self {
            InitialLaw::Gaussian { mean, std } => gaussian_pdf(x, mean, std * std + t),
            InitialLaw::Uniform { lo, hi } => {
                if t == 0.0 {
                    return if (lo..=hi).contains(&x) { 1.0 / (hi - lo) } else { 0.0 };
                }
                let s = t.sqrt();
                (std_normal_cdf((x - lo) / s) - std_normal_cdf((x - hi) / s)) / (hi - lo)
            }
            InitialLaw::TwoBump { weight, mean_a, std_a, mean_b, std_b } => {
                weight * gaussian_pdf(x, mean_a, std_a * std_a + t)
                    + (1.0 - weight) * gaussian_pdf(x, mean_b, std_b * std_b + t)
            }
        }
    }

    /// Distribution function of `X₀ + W_t`.
    pub fn convolved_cdf(&self, x: f64, t: f64) -> f64 {
        match *self {
            InitialLaw::Gaussian { mean, std } => gaussian_cdf(x, mean, std * std + t),
            InitialLaw::Uniform { lo, hi } => {
                if t == 0.0 {
                    return ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
                }
                // ∫ Φ(z) dz = zΦ(z) + φ(z)
                let s = t.sqrt();
                let antideriv = |z: f64| z * std_normal_cdf(z) + std_normal_pdf(z);
                s * (antideriv((x - lo) / s) - antideriv((x - hi) / s)) / (hi - lo)
            }
            InitialLaw::TwoBump { weight, mean_a, std_a, mean_b, std_b } => {
                weight * gaussian_cdf(x, mean_a, std_a * std_a + t)
                    + (1.0 - weight) * gaussian_cdf(x, mean_b, std_b * std_b + t)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            InitialLaw::Gaussian { mean, .. } => mean,
            InitialLaw::Uniform { lo, hi } => 0.5 * (lo + hi),
            InitialLaw::TwoBump { weight, mean_a, mean_b, .. } => weight * mean_a + (1.0 - weight) * mean_b,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            InitialLaw::Gaussian { std, .. } => std * std,
            InitialLaw::Uniform { lo, hi } => (hi - lo).powi(2) / 12.0,
            InitialLaw::TwoBump { weight, mean_a, std_a, mean_b, std_b } => {
                let m = self.mean();
                weight * (std_a * std_a + (mean_a - m).powi(2))
                    + (1.0 - weight) * (std_b * std_b + (mean_b - m).powi(2))
            }
        }
    }

    /// Draw from the law using three of the four supplied uniforms.
    pub fn sample(&self, u: [f64; 4]) -> f64 {
        match *self {
            InitialLaw::Gaussian { mean, std } => mean + std * box_muller(u[0], u[1]),
            InitialLaw::Uniform { lo, hi } => lo + (hi - lo) * u[0],
            InitialLaw::TwoBump { weight, mean_a, std_a, mean_b, std_b } => {
                let z = box_muller(u[0], u[1]);
                if u[2] < weight {
                    mean_a + std_a * z
                } else {
                    mean_b + std_b * z
                }
            }
        }
    }

    /// Exact cell masses of `ρ₀ ⋆ g_t` on `grid`.
    pub fn cell_masses(&self, grid: &SpatialGrid, t: f64) -> Vec<f64> {
        let edges: Vec<f64> = (0..=grid.n_cells()).map(|i| self.convolved_cdf(grid.edge(i), t)).collect();
        edges.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Whether the law is invariant under `x ↦ -x`.
    pub fn is_symmetric(&self) -> bool {
        match *self {
            InitialLaw::Gaussian { mean, .. } => mean == 0.0,
            InitialLaw::Uniform { lo, hi } => lo == -hi,
            InitialLaw::TwoBump { weight, mean_a, std_a, mean_b, std_b } => {
                weight == 0.5 && mean_a == -mean_b && std_a == std_b
            }
        }
    }
}
