//! Adaptive trapezoid quadrature, operating on log-integrands.
//!
//! All integrals in this crate are of densities or density products, so the
//! integrand is supplied as a *log*-value function and the result is the
//! *log*-integral; the weighted sum is taken with log-sum-exp. Refinement
//! halves the mesh until two successive estimates agree to `rel_tol` in
//! linear space. For integrands that decay to ~0 at the domain boundary
//! (every density truncated at ±12 scale units) the trapezoid rule converges
//! geometrically, so the default budgets are generous.

use crate::error::SsbError;
use crate::special::log_sum_exp;
use crate::Result;

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSpec {
    /// Stop when successive refinements differ by less than this, relatively.
    pub rel_tol: f64,
    /// Intervals per axis on the coarsest mesh.
    pub initial_intervals: usize,
    /// Maximum number of mesh halvings before giving up.
    pub max_refinements: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            rel_tol: 1e-10,
            initial_intervals: 64,
            max_refinements: 16,
        }
    }
}

impl QuadratureSpec {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        QuadratureSpec {
            rel_tol,
            ..Self::default()
        }
    }
}

fn trapezoid_log_1d(log_f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut terms = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let x = if i == n { b } else { a + i as f64 * h };
        let w = if i == 0 || i == n { 0.5 * h } else { h };
        terms.push(log_f(x) + w.ln());
    }
    log_sum_exp(&terms)
}

/// `log ∫_a^b exp(log_f(x)) dx` by adaptive trapezoid refinement.
pub fn integrate_log_1d(log_f: impl Fn(f64) -> f64, a: f64, b: f64, spec: &QuadratureSpec) -> Result<f64> {
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(SsbError::invalid(format!("bad quadrature domain [{a}, {b}]")));
    }
    let f = |x: f64| log_f(x);
    let mut n = spec.initial_intervals.max(2);
    let mut prev = trapezoid_log_1d(&f, a, b, n);
    for _ in 0..spec.max_refinements {
        n *= 2;
        let cur = trapezoid_log_1d(&f, a, b, n);
        if log_close(prev, cur, spec.rel_tol) {
            return Ok(cur);
        }
        prev = cur;
    }
    let last = trapezoid_log_1d(&f, a, b, 2 * n);
    if log_close(prev, last, spec.rel_tol) {
        return Ok(last);
    }
    Err(SsbError::QuadratureNonConvergence {
        prev: prev.exp(),
        last: last.exp(),
    })
}

fn trapezoid_1d(f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = 0.5 * (f(a) + f(b));
    for i in 1..n {
        s += f(a + i as f64 * h);
    }
    s * h
}

/// `∫_a^b f(x) dx` for signed integrands (KL integrals and the like),
/// adaptive as [`integrate_log_1d`] but in plain arithmetic.
pub fn integrate_1d(f: impl Fn(f64) -> f64, a: f64, b: f64, spec: &QuadratureSpec) -> Result<f64> {
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(SsbError::invalid(format!("bad quadrature domain [{a}, {b}]")));
    }
    let f = |x: f64| f(x);
    let mut n = spec.initial_intervals.max(2);
    let mut prev = trapezoid_1d(&f, a, b, n);
    for _ in 0..spec.max_refinements {
        n *= 2;
        let cur = trapezoid_1d(&f, a, b, n);
        if (cur - prev).abs() <= spec.rel_tol * cur.abs().max(1.0) {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(SsbError::QuadratureNonConvergence {
        prev,
        last: trapezoid_1d(&f, a, b, 2 * n),
    })
}

fn trapezoid_log_2d(
    log_f: &dyn Fn(f64, f64) -> f64,
    dom: [(f64, f64); 2],
    n: usize,
) -> f64 {
    let (a0, b0) = dom[0];
    let (a1, b1) = dom[1];
    let h0 = (b0 - a0) / n as f64;
    let h1 = (b1 - a1) / n as f64;
    let mut terms = Vec::with_capacity((n + 1) * (n + 1));
    for i in 0..=n {
        let x = if i == n { b0 } else { a0 + i as f64 * h0 };
        let wx = if i == 0 || i == n { 0.5 * h0 } else { h0 };
        for j in 0..=n {
            let y = if j == n { b1 } else { a1 + j as f64 * h1 };
            let wy = if j == 0 || j == n { 0.5 * h1 } else { h1 };
            terms.push(log_f(x, y) + (wx * wy).ln());
        }
    }
    log_sum_exp(&terms)
}

/// `log ∬ exp(log_f(x, y)) dx dy` over a rectangle, adaptive as in 1D.
pub fn integrate_log_2d(
    log_f: impl Fn(f64, f64) -> f64,
    dom: [(f64, f64); 2],
    spec: &QuadratureSpec,
) -> Result<f64> {
    for (a, b) in dom {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(SsbError::invalid(format!("bad quadrature domain [{a}, {b}]")));
        }
    }
    let f = |x: f64, y: f64| log_f(x, y);
    let mut n = spec.initial_intervals.max(2);
    let mut prev = trapezoid_log_2d(&f, dom, n);
    // Each halving quadruples the work; cap the mesh rather than the count.
    let max_n = 4096usize;
    while n < max_n {
        n *= 2;
        let cur = trapezoid_log_2d(&f, dom, n);
        if log_close(prev, cur, spec.rel_tol) {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(SsbError::QuadratureNonConvergence {
        prev: prev.exp(),
        last: trapezoid_log_2d(&f, dom, n).exp(),
    })
}

/// True when `exp(la)` and `exp(lb)` agree to relative tolerance `tol`.
fn log_close(la: f64, lb: f64, tol: f64) -> bool {
    if la == f64::NEG_INFINITY && lb == f64::NEG_INFINITY {
        return true;
    }
    ((la - lb).exp() - 1.0).abs() < tol
}
