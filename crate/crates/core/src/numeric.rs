//! Small numerical helpers shared by the modules.

use std::num::NonZeroUsize;
use std::sync::LazyLock;

use gauss_quad::legendre::GaussLegendre;

const PANELS: usize = 4;
const DEGREE: usize = 20;

/// Composite Gauss-Legendre rule on [0, 1] (4 panels of 20 nodes).
static UNIT_RULE: LazyLock<Vec<(f64, f64)>> = LazyLock::new(|| {
    let rule = GaussLegendre::new(NonZeroUsize::new(DEGREE).unwrap());
    let width = 1.0 / PANELS as f64;
    let mut out = Vec::with_capacity(PANELS * DEGREE);
    for p in 0..PANELS {
        let a = p as f64 * width;
        for &(x, w) in rule.as_node_weight_pairs() {
            out.push((a + 0.5 * width * (x + 1.0), 0.5 * width * w));
        }
    }
    out
});

/// Levels of the geometrically graded rule.
const GRADED_LEVELS: i32 = 40;

/// Gauss-Legendre panels on `[2^{-k-1}, 2^{-k}]`, `k < 40`, plus `[0, 2^{-40}]`:
/// resolves integrands with a power singularity at the origin.
static GRADED_RULE: LazyLock<Vec<(f64, f64)>> = LazyLock::new(|| {
    let rule = GaussLegendre::new(NonZeroUsize::new(DEGREE).unwrap());
    let mut out = Vec::with_capacity((GRADED_LEVELS as usize + 1) * DEGREE);
    let mut panel = |a: f64, b: f64| {
        for &(x, w) in rule.as_node_weight_pairs() {
            out.push((a + 0.5 * (b - a) * (x + 1.0), 0.5 * (b - a) * w));
        }
    };
    panel(0.0, 2f64.powi(-GRADED_LEVELS));
    for k in (0..GRADED_LEVELS).rev() {
        panel(2f64.powi(-k - 1), 2f64.powi(-k));
    }
    out
});

/// Nodes and weights of the graded rule on [0, 1].
pub fn graded_unit_rule() -> &'static [(f64, f64)] {
    &GRADED_RULE
}

/// Nodes and weights of the unit-interval rule.
pub fn unit_rule() -> &'static [(f64, f64)] {
    &UNIT_RULE
}

/// Integrates `f` over [0, 1].
pub fn integrate_unit(mut f: impl FnMut(f64) -> f64) -> f64 {
    unit_rule().iter().map(|&(u, w)| w * f(u)).sum()
}

/// `ln Σ exp(x_i)`, returning `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let s: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}

/// Golden-section search for the minimum of a unimodal `f` on `[a, b]`.
///
/// Returns `(argmin, min)`.
pub fn golden_section_min(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Bisection for the smallest `s` with `g(s) >= target`, given a nondecreasing `g`
/// and a bracket where `g(lo) < target <= g(hi)`.
pub fn bisect_level(mut g: impl FnMut(f64) -> f64, target: f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}
