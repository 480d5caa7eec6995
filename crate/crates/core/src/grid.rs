use serde::{Deserialize, Serialize};

use crate::error::ensure;
use crate::Result;

/// Uniform time grid `t_k = k·dt`, `k = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, n_steps: usize) -> Result<Self> {
        ensure!(dt.is_finite() && dt > 0.0, Config, "time step must be > 0, got {dt}");
        ensure!(n_steps >= 1, Config, "need at least one time step");
        Ok(Self { dt, n_steps })
    }

    /// Grid reaching `horizon` with the given step, which must divide the
    /// horizon up to rounding.
    pub fn with_horizon(horizon: f64, dt: f64) -> Result<Self> {
        ensure!(horizon.is_finite() && horizon > 0.0, Config, "horizon must be > 0, got {horizon}");
        ensure!(dt.is_finite() && dt > 0.0, Config, "time step must be > 0, got {dt}");
        let steps = horizon / dt;
        let n_steps = steps.round();
        ensure!(
            (steps - n_steps).abs() < 1e-9 * steps.max(1.0),
            Config,
            "time step {dt} does not divide horizon {horizon}"
        );
        Self::new(horizon / n_steps, n_steps as usize)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.n_steps)
    }

    /// Index of the grid time closest to `t`, if it matches to 1e-9·dt.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = (t / self.dt).round();
        if k < 0.0 || k > self.n_steps as f64 || (k * self.dt - t).abs() > 1e-9 * self.dt.max(t) {
            return None;
        }
        Some(k as usize)
    }
}

/// Uniform finite-volume grid on `[x_min, x_max]` with `n_cells` cells;
/// values live at cell centres `x_min + (i + 1/2)·h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    x_min: f64,
    x_max: f64,
    n_cells: usize,
}

pub const MIN_CELLS: usize = 16;

impl SpatialGrid {
    pub fn new(x_min: f64, x_max: f64, n_cells: usize) -> Result<Self> {
        ensure!(
            x_min.is_finite() && x_max.is_finite() && x_min < x_max,
            Config,
            "spatial grid needs x_min < x_max, got [{x_min}, {x_max}]"
        );
        ensure!(n_cells >= MIN_CELLS, Config, "spatial grid needs at least {MIN_CELLS} cells, got {n_cells}");
        Ok(Self { x_min, x_max, n_cells })
    }

    /// Symmetric grid `[-half_width, half_width]` with spacing close to `h`
    /// (the cell count is rounded to an integer).
    pub fn symmetric(half_width: f64, h: f64) -> Result<Self> {
        ensure!(h > 0.0 && h.is_finite(), Config, "cell width must be > 0, got {h}");
        let n = (2.0 * half_width / h).round() as usize;
        Self::new(-half_width, half_width, n)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn h(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.h()
    }

    pub fn edge(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.h()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|i| self.center(i)).collect()
    }
}
