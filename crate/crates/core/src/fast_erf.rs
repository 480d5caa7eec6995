//! Table-driven `erf` for the drift hot loops.
//!
//! On `[0, 6)` the function is represented by degree-7 Taylor expansions
//! about the midpoints of 192 cells of width 1/32; the coefficients come from
//! the Hermite recursion for the derivatives of `erf`. The polynomial is
//! evaluated with Estrin's scheme to keep the dependency chain short.
//! Absolute error is at the level of a few ulps of 1. For `u ≥ 6` the table returns exactly 1
//! (`erfc(6) ≈ 2.2e-17`).
//!
//! Use [`libm::erf`]/[`libm::erfc`] where relative accuracy in the tails
//! matters; this table is for sums of many `O(1)`-bounded differences.

use std::sync::OnceLock;

const CELLS_PER_UNIT: f64 = 32.0;
const N_CELLS: usize = 192;
const DEGREE: usize = 7;
const STRIDE: usize = DEGREE + 1;
/// Arguments at or above this value evaluate to exactly 1.
pub const SATURATION: f64 = N_CELLS as f64 / CELLS_PER_UNIT;

/// Rows in the table; indices are masked to a byte so lookups need no bounds check.
const ROWS: usize = 256;
/// Adding 1.5·2^52 rounds to an integer held in the low mantissa bits.
const ROUNDER: f64 = 6_755_399_441_055_744.0;

type Table = [[f64; STRIDE]; ROWS];

fn table() -> &'static Table {
    static TABLE: OnceLock<Box<Table>> = OnceLock::new();
    TABLE.get_or_init(build_table)
}

fn build_table() -> Box<Table> {
    // Rows past the last cell hold the constant 1 for saturated arguments.
    let mut coeffs = Box::new([[0.0; STRIDE]; ROWS]);
    for row in coeffs.iter_mut().skip(N_CELLS) {
        row[0] = 1.0;
    }
    let two_over_sqrt_pi = 2.0 / std::f64::consts::PI.sqrt();
    for cell in 0..N_CELLS {
        let c = (cell as f64 + 0.5) / CELLS_PER_UNIT;
        let gauss = (-c * c).exp();
        let row = &mut coeffs[cell];
        row[0] = libm::erf(c);
        // d^n/dx^n erf = (2/√π) (-1)^{n-1} H_{n-1}(x) e^{-x²}
        let (mut h_prev, mut h) = (0.0, 1.0);
        let mut factorial = 1.0;
        #[allow(clippy::needless_range_loop)]
        for n in 1..=DEGREE {
            factorial *= n as f64;
            let sign = if (n - 1) % 2 == 0 { 1.0 } else { -1.0 };
            row[n] = two_over_sqrt_pi * sign * h * gauss / factorial;
            let next = 2.0 * c * h - 2.0 * (n - 1) as f64 * h_prev;
            h_prev = h;
            h = next;
        }
    }
    coeffs
}

/// `erf(u)` for `u ≥ 0`.
#[inline]
pub fn erf_nonneg(u: f64) -> f64 {
    ErfTable::get().eval(u)
}

/// Handle to the coefficient table, for loops that evaluate many times.
#[derive(Debug, Clone, Copy)]
pub struct ErfTable(&'static Table);

impl ErfTable {
    #[inline]
    pub fn get() -> Self {
        Self(table())
    }

    /// `erf(u)` for `u ≥ 0`; NaN and `+∞` give 1.
    #[inline(always)]
    pub fn eval(self, u: f64) -> f64 {
        debug_assert!(u >= 0.0 || u.is_nan());
        // s in [-0.5, 191.5]; rounding picks the cell whose midpoint is nearest.
        let s = (u * CELLS_PER_UNIT).min(N_CELLS as f64) - 0.5;
        let t = s + ROUNDER;
        let cell = (t.to_bits() & 0xff) as usize;
        let d = (s - (t - ROUNDER)) * (1.0 / CELLS_PER_UNIT);
        let c = &self.0[cell];
        let d2 = d * d;
        let d4 = d2 * d2;
        let p01 = c[0] + c[1] * d;
        let p23 = c[2] + c[3] * d;
        let p45 = c[4] + c[5] * d;
        let p67 = c[6] + c[7] * d;
        (p01 + p23 * d2) + (p45 + p67 * d2) * d4
    }
}

/// Warms the coefficient table so that timing runs exclude its construction.
pub fn prepare() {
    let _ = table();
}
