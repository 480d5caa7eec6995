//! Reference computations shared by the integration tests. Nothing here
//! calls into the library's own numerics.

#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::OnceLock;

const GL_ORDER: usize = 20;

/// Gauss–Legendre nodes and weights on [-1, 1], by Newton iteration on P_n.
fn gauss_legendre() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_ORDER;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let step = p1 / dp;
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        (nodes, weights)
    })
}

fn gl<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let (nodes, weights) = gauss_legendre();
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    nodes.iter().zip(weights).map(|(x, w)| w * f(c + h * x)).sum::<f64>() * h
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (left, right) = (gl(f, a, m), gl(f, m, b));
    // Below this, rounding in the rule dominates the difference.
    let floor = 1e-13 * (left.abs() + right.abs());
    if depth == 0 || (left + right - whole).abs() <= tol.max(floor) {
        return left + right;
    }
    adapt(f, a, m, left, 0.5 * tol, depth - 1) + adapt(f, m, b, right, 0.5 * tol, depth - 1)
}

/// Adaptive 20-point Gauss–Legendre with bisection, to absolute tolerance `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    adapt(&f, a, b, gl(&f, a, b), tol, 24)
}

/// `K_t(x) = -e^{-λt} x e^{-x²/(2t)} / (√(2π) t^{3/2})`.
pub fn kernel(t: f64, x: f64, lambda: f64) -> f64 {
    -(-lambda * t).exp() * x * (-x * x / (2.0 * t)).exp() / ((2.0 * PI).sqrt() * t.powf(1.5))
}

/// `∫_a^b K_u(x) du` by quadrature in `s = √u`, which removes the endpoint
/// behaviour at `u = 0`. The tolerance is relative to a first coarse pass.
pub fn kernel_time_integral(x: f64, a: f64, b: f64, lambda: f64) -> f64 {
    let g = |s: f64| if s == 0.0 { 0.0 } else { 2.0 * s * kernel(s * s, x, lambda) };
    let (sa, sb) = (a.sqrt(), b.sqrt());
    let rough = integrate(g, sa, sb, 1e-300).abs();
    integrate(g, sa, sb, rough * 1e-13)
}

/// `‖K_1‖_p` for `λ = 0` from the Gaussian absolute moment:
/// `∫|x|^p e^{-p x²/2} dx = (2/p)^{(p+1)/2} Γ((p+1)/2)`.
pub fn lp_constant(p: f64) -> f64 {
    let moment = (2.0 / p).powf((p + 1.0) / 2.0) * libm::tgamma((p + 1.0) / 2.0);
    ((2.0 * PI).powf(-p / 2.0) * moment).powf(1.0 / p)
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / 2f64.sqrt())
}

/// Kolmogorov–Smirnov distance of `samples` to `cdf`.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at level `alpha`.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    (-0.5 * (alpha / 2.0).ln()).sqrt() / (n as f64).sqrt()
}

/// `W₁` between two equal-size samples: mean absolute difference of order statistics.
pub fn w1_equal_size(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
