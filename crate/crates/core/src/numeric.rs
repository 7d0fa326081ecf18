//! Quadrature and series helpers shared by the click and bound routines.

use std::sync::OnceLock;

const GL_ORDER: usize = 16;
const MAX_DEPTH: u32 = 40;

/// Relative tolerance of [`integrate`].
pub const QUAD_REL_TOL: f64 = 1e-12;

/// Gauss–Legendre nodes and weights on [-1, 1], found by Newton iteration on
/// the Legendre recurrence.
fn gauss_legendre() -> &'static [(f64, f64); GL_ORDER] {
    static RULE: OnceLock<[(f64, f64); GL_ORDER]> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_ORDER;
        let mut rule = [(0.0, 0.0); GL_ORDER];
        for (i, node) in rule.iter_mut().enumerate() {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let k = k as f64;
                    let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            *node = (x, 2.0 / ((1.0 - x * x) * dp * dp));
        }
        rule
    })
}

fn gl_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    gauss_legendre()
        .iter()
        .map(|&(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let left = gl_panel(f, a, m);
    let right = gl_panel(f, m, b);
    let refined = left + right;
    let tol = QUAD_REL_TOL * refined.abs();
    if (refined - whole).abs() <= tol || depth >= MAX_DEPTH {
        refined
    } else {
        adapt(f, a, m, left, depth + 1) + adapt(f, m, b, right, depth + 1)
    }
}

/// Adaptive Gauss–Legendre integral of `f` over `[a, b]`.
///
/// A panel is accepted once bisecting it changes the estimate by less than
/// [`QUAD_REL_TOL`] of its value.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let whole = gl_panel(&f, a, b);
    adapt(&f, a, b, whole, 0)
}

/// Mean of `f` over `[a, b]`.
pub fn average<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    if a == b {
        return f(a);
    }
    integrate(f, a, b) / (b - a)
}

/// Poisson probabilities `e^{-mu} mu^j / j!` for `j = 0..=j_max`.
pub fn poisson_weights(mu: f64, j_max: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(j_max + 1);
    let mut term = (-mu).exp();
    w.push(term);
    for j in 1..=j_max {
        term *= mu / j as f64;
        w.push(term);
    }
    w
}

/// Upper bound on `sum_{j > j_max} e^{-mu} mu^j / j!` by a geometric majorant.
pub fn poisson_tail_bound(mu: f64, j_max: usize) -> f64 {
    let next = *poisson_weights(mu, j_max + 1).last().unwrap();
    let ratio = mu / (j_max as f64 + 2.0);
    if ratio >= 1.0 {
        return 1.0;
    }
    (next / (1.0 - ratio)).min(1.0)
}

/// Upper bound on `sum_{j > j_max} sqrt(e^{-mu} mu^j / j!)`.
pub fn sqrt_poisson_tail_bound(mu: f64, j_max: usize) -> f64 {
    let next = poisson_weights(mu, j_max + 1).last().unwrap().sqrt();
    let ratio = (mu / (j_max as f64 + 2.0)).sqrt();
    if ratio >= 1.0 {
        return f64::INFINITY;
    }
    next / (1.0 - ratio)
}

/// `1 - (1 - d) e^{-x}` without cancellation for small `x`.
#[inline]
pub fn threshold_click(mean_photons: f64, dark: f64) -> f64 {
    let survive = (-mean_photons).exp();
    (-(-mean_photons).exp_m1() + dark * survive).clamp(0.0, 1.0)
}

#[inline]
pub fn clamp_prob(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Binomial coefficient as f64.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
