//! The interaction kernel `K_t(x) = e^{-λt} ∂_x g_t(x)` and its integrals.
//!
//! `g_t` is the centred Gaussian density with variance `t`, so
//! `K_t(x) = -e^{-λt} x / (√(2π) t^{3/2}) · e^{-x²/(2t)}`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::ensure;
use crate::fast_erf::ErfTable;
use crate::grid::TimeGrid;
use crate::quadrature;
use crate::Result;

/// Physical parameters of the kernel: decay rate `lambda ≥ 0` and coupling
/// `chi > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_chi")]
    pub chi: f64,
}

fn default_chi() -> f64 {
    1.0
}

impl Default for KernelParams {
    fn default() -> Self {
        Self { lambda: 0.0, chi: 1.0 }
    }
}

impl KernelParams {
    pub fn new(lambda: f64, chi: f64) -> Result<Self> {
        let p = Self { lambda, chi };
        p.validate()?;
        Ok(p)
    }

    /// Checks the parameter domain. A coupling of exactly zero is accepted as
    /// the decoupled reference case.
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.lambda.is_finite() && self.lambda >= 0.0,
            Domain,
            "lambda must be finite and >= 0, got {}",
            self.lambda
        );
        ensure!(
            self.chi.is_finite() && self.chi >= 0.0,
            Domain,
            "chi must be finite and >= 0, got {}",
            self.chi
        );
        Ok(())
    }

    pub fn is_decoupled(&self) -> bool {
        self.chi == 0.0
    }
}

/// Heat kernel `g_t(x) = e^{-x²/(2t)} / √(2πt)`.
pub fn heat_kernel(t: f64, x: f64) -> f64 {
    (-x * x / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
}

/// Pointwise value of `K_t(x)`.
pub fn kernel_eval(t: f64, x: f64, params: &KernelParams) -> Result<f64> {
    ensure!(t > 0.0 && t.is_finite(), Domain, "kernel time must be > 0, got {t}");
    ensure!(x.is_finite(), Domain, "kernel argument must be finite, got {x}");
    Ok(kernel_unchecked(t, x, params.lambda))
}

#[inline]
fn kernel_unchecked(t: f64, x: f64, lambda: f64) -> f64 {
    let decay = if lambda == 0.0 { 1.0 } else { (-lambda * t).exp() };
    decay * (-x) / ((2.0 * PI).sqrt() * t.powf(1.5)) * (-x * x / (2.0 * t)).exp()
}

/// `C_p = ‖K_1‖_{L^p}` for `λ = 0`, evaluated once per `p` by quadrature of
/// the Gaussian moment `2 ∫_0^∞ (x/√(2π))^p e^{-p x²/2} dx` and cached.
pub fn lp_constant(p: f64) -> Result<f64> {
    ensure!(p.is_finite() && p >= 1.0, Domain, "p must satisfy 1 <= p < inf, got {p}");
    static CACHE: OnceLock<Mutex<HashMap<u64, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(&c) = cache.lock().unwrap().get(&p.to_bits()) {
        return Ok(c);
    }
    let norm_const = (2.0 * PI).sqrt();
    let integrand = |x: f64| (x / norm_const).powf(p) * (-0.5 * p * x * x).exp();
    // The integrand is below 1e-300 past x = 40/√p.
    let upper = 40.0 / p.sqrt();
    let moment = 2.0 * quadrature::integrate(integrand, 0.0, upper, 0.0, 1e-14);
    let c = moment.powf(1.0 / p);
    cache.lock().unwrap().insert(p.to_bits(), c);
    Ok(c)
}

/// `‖K_t‖_{L^p(ℝ)} = e^{-λt} C_p / t^{1 - 1/(2p)}`.
pub fn kernel_lp_norm(t: f64, p: f64, params: &KernelParams) -> Result<f64> {
    ensure!(t > 0.0 && t.is_finite(), Domain, "time must be > 0, got {t}");
    let c = lp_constant(p)?;
    let decay = (-params.lambda * t).exp();
    Ok(decay * c * t.powf(-(1.0 - 1.0 / (2.0 * p))))
}

/// `∫_a^b K_u(x) du`.
///
/// For `λ = 0` this is `sign(x)·(erf(|x|/√(2b)) − erf(|x|/√(2a)))`, with the
/// `a = 0` term equal to 1 for `x ≠ 0`; the difference is taken in `erfc`
/// form when both arguments are large. For `λ > 0` the integral is computed
/// by adaptive quadrature. The result always lies in `[-1, 1]`.
pub fn kernel_time_integral(x: f64, a: f64, b: f64, params: &KernelParams) -> Result<f64> {
    ensure!(x.is_finite(), Domain, "position must be finite, got {x}");
    ensure!(a >= 0.0 && a.is_finite(), Domain, "lower time must be >= 0, got {a}");
    ensure!(b > a, Domain, "upper time {b} must exceed lower time {a}");
    if x == 0.0 {
        return Ok(0.0);
    }
    if params.lambda == 0.0 {
        return Ok(erf_time_integral(x, a, b));
    }
    if b.is_infinite() {
        let lambda = params.lambda;
        return Ok(quadrature::integrate_to_infinity(
            |u| if u > 0.0 { kernel_unchecked(u, x, lambda) } else { 0.0 },
            a,
            1e-300,
            1e-13,
        ));
    }
    Ok(quadrature_time_integral(x, a, b, params.lambda))
}

fn erf_time_integral(x: f64, a: f64, b: f64) -> f64 {
    let ax = x.abs();
    let u_b = ax / (2.0 * b).sqrt();
    let u_a = if a == 0.0 { f64::INFINITY } else { ax / (2.0 * a).sqrt() };
    // erf(u_b) - erf(u_a) ≤ 0 since u_a ≥ u_b
    let diff = if u_b < 0.5 {
        libm::erf(u_b) - if u_a.is_infinite() { 1.0 } else { libm::erf(u_a) }
    } else {
        (if u_a.is_infinite() { 0.0 } else { libm::erfc(u_a) }) - libm::erfc(u_b)
    };
    if x > 0.0 {
        diff
    } else {
        -diff
    }
}

fn quadrature_time_integral(x: f64, a: f64, b: f64, lambda: f64) -> f64 {
    quadrature::integrate(
        |u| if u > 0.0 { kernel_unchecked(u, x, lambda) } else { 0.0 },
        a,
        b,
        1e-300,
        1e-13,
    )
}

/// Counts of slab evaluations, for the cost model and benchmarks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SlabCount {
    pub evaluated: u64,
    pub skipped: u64,
}

impl SlabCount {
    pub fn add(&mut self, other: SlabCount) {
        self.evaluated += other.evaluated;
        self.skipped += other.skipped;
    }
}

/// `v` for `x > 0`, `-v` for `x < 0`.
#[inline]
fn with_sign_of(v: f64, x: f64) -> f64 {
    f64::from_bits(v.to_bits() ^ (x.to_bits() & (1 << 63)))
}

/// Per-slab memory integrals on a uniform time grid.
///
/// The history of a partner particle is frozen at the left endpoint of each
/// step, and the kernel is integrated exactly over the slab: slab `m` seen
/// from step `k` contributes `∫_{(k-m-1)dt}^{(k-m)dt} K_u(x) du`.
#[derive(Debug, Clone)]
pub struct SlabKernel {
    params: KernelParams,
    dt: f64,
    // 1/√(2ℓ·dt) for lag ℓ; entry 0 is +∞.
    inv_sqrt: Vec<f64>,
    cutoff: bool,
    erf: ErfTable,
}

/// Slabs whose smaller erf argument reaches this value are skipped when the
/// far-field cutoff is enabled; their contribution is below `erfc(8) ≈ 1e-29`.
pub const CUTOFF_ARGUMENT: f64 = 8.0;

impl SlabKernel {
    pub fn new(grid: &TimeGrid, params: KernelParams, cutoff: bool) -> Self {
        let inv_sqrt = (0..=grid.n_steps())
            .map(|lag| {
                if lag == 0 {
                    f64::INFINITY
                } else {
                    1.0 / (2.0 * lag as f64 * grid.dt()).sqrt()
                }
            })
            .collect();
        Self { params, dt: grid.dt(), inv_sqrt, cutoff, erf: ErfTable::get() }
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn cutoff(&self) -> bool {
        self.cutoff
    }

    /// `∫ K_u(x) du` over lags `[lag-1, lag]·dt`.
    #[inline]
    pub fn slab(&self, x: f64, lag: usize) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        if self.params.lambda != 0.0 {
            let a = (lag - 1) as f64 * self.dt;
            return quadrature_time_integral(x, a, lag as f64 * self.dt, self.params.lambda);
        }
        let ax = x.abs();
        let inner = self.erf.eval(ax * self.inv_sqrt[lag]);
        let outer = if lag == 1 { 1.0 } else { self.erf.eval(ax * self.inv_sqrt[lag - 1]) };
        if x > 0.0 {
            inner - outer
        } else {
            outer - inner
        }
    }

    /// `Σ_{m<k} slab(x_now − history[m], k − m)` with `k = history.len()`,
    /// summed in ascending `m`.
    #[inline]
    pub fn history_sum(&self, x_now: f64, history: &[f64], count: &mut SlabCount) -> f64 {
        let k = history.len();
        if self.params.lambda != 0.0 {
            let mut sum = 0.0;
            for (m, &xm) in history.iter().enumerate() {
                let x = x_now - xm;
                if self.cutoff && x.abs() * self.inv_sqrt[k - m] >= CUTOFF_ARGUMENT {
                    count.skipped += 1;
                    continue;
                }
                count.evaluated += 1;
                sum += self.slab(x, k - m);
            }
            return sum;
        }
        let inv = &self.inv_sqrt[..=k];
        let erf = self.erf;
        let mut sum = 0.0;
        let mut evaluated = 0u64;
        for (m, &xm) in history.iter().enumerate() {
            let x = x_now - xm;
            let ax = x.abs();
            let lag = k - m;
            let u_inner = ax * inv[lag];
            if self.cutoff && u_inner >= CUTOFF_ARGUMENT {
                continue;
            }
            evaluated += 1;
            if ax == 0.0 {
                continue;
            }
            // inv[0] = ∞ sends the lag-1 outer term to erf(∞) = 1.
            let diff = erf.eval(u_inner) - erf.eval(ax * inv[lag - 1]);
            sum += with_sign_of(diff, x);
        }
        count.evaluated += evaluated;
        count.skipped += k as u64 - evaluated;
        sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p0() -> KernelParams {
        KernelParams::default()
    }

    #[test]
    fn kernel_at_origin_vanishes() {
        assert_eq!(kernel_eval(1.0, 0.0, &p0()).unwrap(), 0.0);
    }

    #[test]
    fn kernel_is_odd() {
        let a = kernel_eval(0.5, 0.3, &p0()).unwrap();
        let b = kernel_eval(0.5, -0.3, &p0()).unwrap();
        assert_eq!(a, -b);
    }

    #[test]
    fn kernel_reference_value() {
        // -e^{-1/2}/√(2π)
        let v = kernel_eval(1.0, 1.0, &p0()).unwrap();
        assert!((v + 0.241_970_724_519_143_37).abs() < 1e-15);
    }

    #[test]
    fn kernel_rejects_bad_time() {
        assert!(kernel_eval(0.0, 1.0, &p0()).is_err());
        assert!(kernel_eval(-1.0, 1.0, &p0()).is_err());
        assert!(kernel_eval(1.0, f64::NAN, &p0()).is_err());
    }

    #[test]
    fn kernel_decays_far_away() {
        assert_eq!(kernel_eval(1.0, 60.0, &p0()).unwrap(), -0.0);
    }

    #[test]
    fn lp_norm_reference_values() {
        let n1 = kernel_lp_norm(1.0, 1.0, &p0()).unwrap();
        assert!((n1 - (2.0 / PI).sqrt()).abs() < 1e-12);
        let n2 = kernel_lp_norm(1.0, 2.0, &p0()).unwrap();
        assert!((n2 - (4.0 * PI.sqrt()).powf(-0.5)).abs() < 1e-12);
    }

    #[test]
    fn lp_norm_rejects_small_p() {
        assert!(kernel_lp_norm(1.0, 0.5, &p0()).is_err());
        assert!(kernel_lp_norm(0.0, 2.0, &p0()).is_err());
    }

    #[test]
    fn time_integral_examples() {
        assert_eq!(kernel_time_integral(0.0, 0.1, 0.2, &p0()).unwrap(), 0.0);
        let v = kernel_time_integral(1.0, 0.5, 1.0, &p0()).unwrap();
        let expected = libm::erf(1.0 / 2f64.sqrt()) - libm::erf(1.0);
        assert!((v - expected).abs() < 1e-15);
        assert!((v + 0.160_011_6).abs() < 1e-6);
        let full = kernel_time_integral(1.0, 0.0, f64::INFINITY, &p0()).unwrap();
        assert_eq!(full, -1.0);
        assert!(kernel_time_integral(1.0, 0.5, 0.5, &p0()).is_err());
    }

    #[test]
    fn time_integral_with_decay_is_damped() {
        let damped = KernelParams::new(0.7, 1.0).unwrap();
        let a = kernel_time_integral(0.8, 0.2, 1.5, &damped).unwrap();
        let b = kernel_time_integral(0.8, 0.2, 1.5, &p0()).unwrap();
        assert!(a < 0.0 && a.abs() < b.abs());
    }

    #[test]
    fn slab_matches_public_integral() {
        let grid = TimeGrid::new(0.01, 50).unwrap();
        let sk = SlabKernel::new(&grid, p0(), false);
        for lag in 1..=50 {
            for &x in &[-2.0, -0.3, 1e-3, 0.05, 0.7] {
                let a = (lag - 1) as f64 * 0.01;
                let exact = kernel_time_integral(x, a, lag as f64 * 0.01, &p0()).unwrap();
                assert!((sk.slab(x, lag) - exact).abs() < 5e-16, "x={x} lag={lag}");
            }
        }
    }

    #[test]
    fn history_sum_cutoff_is_inert() {
        let grid = TimeGrid::new(0.02, 40).unwrap();
        let on = SlabKernel::new(&grid, p0(), true);
        let off = SlabKernel::new(&grid, p0(), false);
        let history: Vec<f64> = (0..40).map(|m| (m as f64 * 0.37).sin() * 3.0).collect();
        let (mut c_on, mut c_off) = (SlabCount::default(), SlabCount::default());
        let s_on = on.history_sum(0.4, &history, &mut c_on);
        let s_off = off.history_sum(0.4, &history, &mut c_off);
        assert!((s_on - s_off).abs() < 1e-12);
        assert!(c_on.skipped > 0);
        assert_eq!(c_off.skipped, 0);
        assert_eq!(c_on.evaluated + c_on.skipped, 40);
    }

    #[test]
    fn history_sum_with_decay_uses_quadrature() {
        let grid = TimeGrid::new(0.05, 10).unwrap();
        let params = KernelParams::new(0.5, 1.0).unwrap();
        let sk = SlabKernel::new(&grid, params, false);
        let history = [0.0, 0.1, -0.2, 0.3];
        let mut count = SlabCount::default();
        let s = sk.history_sum(0.5, &history, &mut count);
        let direct: f64 = history
            .iter()
            .enumerate()
            .map(|(m, &h)| {
                let lag = 4 - m;
                kernel_time_integral(0.5 - h, (lag - 1) as f64 * 0.05, lag as f64 * 0.05, &params)
                    .unwrap()
            })
            .sum();
        assert!((s - direct).abs() < 1e-13);
    }
}
