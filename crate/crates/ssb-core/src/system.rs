//! Discrete-grid fixed-point solver for the β-dependent Schrödinger system.
//!
//! On compact grids the system for the potentials `(ρ₀, ρ_T)` is solved by
//! iterating the composed operator
//!
//! `𝒪(ψ)(y) = ∫ P(x,y) · (f_T(x) / ∫P(x,·)·f₀/ψ)^{β/(1+β)} dx`
//!
//! in log space. `𝒪` is homogeneous of degree `β/(1+β)`; the iteration is a
//! strict contraction in the Hilbert projective metric for finite β, and
//! reduces to classical Sinkhorn/IPF at `β = ∞`. The normalized iterate is
//! run to tolerance, then the unique absolute scale is restored via
//! `ψ* = ‖𝒪(g)‖₂^{1+β} g` (finite β only; at `β = ∞` the scale is pure
//! gauge).

use serde::Serialize;

use crate::beta::Beta;
use crate::error::SsbError;
use crate::special::{log_sum_exp, normal_logpdf};
use crate::Result;

/// Discrete transport problem on weighted grids.
///
/// `kernel` holds `p(x_T, T | y_0, 0)` row-major as `[iT * n0 + i0]`; each
/// column must integrate to ~1 against the terminal weights (it is a
/// transition density in `x`).
#[derive(Debug, Clone, Serialize)]
pub struct DiscreteProblem {
    pub points0: Vec<Vec<f64>>,
    pub w0: Vec<f64>,
    pub f0: Vec<f64>,
    pub points_t: Vec<Vec<f64>>,
    pub w_t: Vec<f64>,
    pub f_t: Vec<f64>,
    pub kernel: Vec<f64>,
    pub beta: Beta,
}

/// Uniform 1D lattice with trapezoid quadrature weights.
pub fn lattice_1d(lo: f64, hi: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let h = (hi - lo) / (n - 1) as f64;
    let points: Vec<f64> = (0..n).map(|i| lo + i as f64 * h).collect();
    let weights: Vec<f64> = (0..n)
        .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
        .collect();
    (points, weights)
}

impl DiscreteProblem {
    pub fn n0(&self) -> usize {
        self.f0.len()
    }

    pub fn n_t(&self) -> usize {
        self.f_t.len()
    }

    /// 1D problem with the closed-form Brownian kernel
    /// `p(x,T|y,0) = φ_{σ√T}(x−y)`; marginal values are normalized to unit
    /// quadrature mass. The terminal grid must pad the initial one by
    /// ~6σ√T per side or validation fails on kernel column mass.
    #[allow(clippy::too_many_arguments)]
    pub fn brownian_1d(
        k0: (f64, f64),
        n0: usize,
        k_t: (f64, f64),
        n_t: usize,
        sigma: f64,
        horizon: f64,
        log_f0: impl Fn(f64) -> f64,
        log_f_t: impl Fn(f64) -> f64,
        beta: Beta,
    ) -> Result<DiscreteProblem> {
        if n0 < 1 || n_t < 2 {
            return Err(SsbError::invalid("grids need at least 1 (initial) and 2 (terminal) points"));
        }
        let (p0, w0) = if n0 == 1 {
            (vec![0.5 * (k0.0 + k0.1)], vec![1.0])
        } else {
            lattice_1d(k0.0, k0.1, n0)
        };
        let (pt, wt) = lattice_1d(k_t.0, k_t.1, n_t);
        let normalize = |points: &[f64], weights: &[f64], logf: &dyn Fn(f64) -> f64| -> Vec<f64> {
            let terms: Vec<f64> = points
                .iter()
                .zip(weights)
                .map(|(x, w)| logf(*x) + w.ln())
                .collect();
            let lmass = log_sum_exp(&terms);
            points.iter().map(|x| (logf(*x) - lmass).exp()).collect()
        };
        let f0 = normalize(&p0, &w0, &log_f0);
        let f_t = normalize(&pt, &wt, &log_f_t);
        let s = sigma * horizon.sqrt();
        let mut kernel = Vec::with_capacity(n0 * n_t);
        for x in &pt {
            for y in &p0 {
                kernel.push(normal_logpdf(*x, *y, s).exp());
            }
        }
        let prob = DiscreteProblem {
            points0: p0.iter().map(|x| vec![*x]).collect(),
            w0,
            f0,
            points_t: pt.iter().map(|x| vec![*x]).collect(),
            w_t: wt,
            f_t,
            kernel,
            beta,
        };
        prob.validate()?;
        Ok(prob)
    }

    pub fn validate(&self) -> Result<()> {
        let (n0, nt) = (self.n0(), self.n_t());
        if self.w0.len() != n0 || self.w_t.len() != nt || self.kernel.len() != n0 * nt {
            return Err(SsbError::invalid("grid/weight/kernel sizes disagree"));
        }
        if self.kernel.iter().any(|k| !(*k > 0.0) || !k.is_finite()) {
            return Err(SsbError::invalid("kernel must be strictly positive and finite"));
        }
        if self.f0.iter().chain(&self.f_t).any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(SsbError::invalid("marginal values must be nonnegative and finite"));
        }
        let m0: f64 = self.w0.iter().zip(&self.f0).map(|(w, f)| w * f).sum();
        let mt: f64 = self.w_t.iter().zip(&self.f_t).map(|(w, f)| w * f).sum();
        if (m0 - 1.0).abs() > 1e-8 || (mt - 1.0).abs() > 1e-8 {
            return Err(SsbError::invalid(format!(
                "marginals must have unit quadrature mass (got {m0}, {mt})"
            )));
        }
        for i0 in 0..n0 {
            let col: f64 = (0..nt).map(|it| self.w_t[it] * self.kernel[it * n0 + i0]).sum();
            if (col - 1.0).abs() > 1e-6 {
                return Err(SsbError::invalid(format!(
                    "kernel column {i0} has quadrature mass {col}; widen the terminal grid"
                )));
            }
        }
        Ok(())
    }

    fn log_kernel(&self, it: usize, i0: usize) -> f64 {
        self.kernel[it * self.n0() + i0].ln()
    }

    /// `(Pv)(x) = ∫ P(x,y) v(y) w0(dy)`, log in / log out.
    fn push(&self, log_v: &[f64]) -> Vec<f64> {
        let n0 = self.n0();
        (0..self.n_t())
            .map(|it| {
                let terms: Vec<f64> = (0..n0)
                    .map(|i0| self.log_kernel(it, i0) + self.w0[i0].ln() + log_v[i0])
                    .collect();
                log_sum_exp(&terms)
            })
            .collect()
    }

    /// Adjoint `(P*v)(y) = ∫ P(x,y) v(x) wT(dx)`, log in / log out.
    fn pull(&self, log_v: &[f64]) -> Vec<f64> {
        let nt = self.n_t();
        (0..self.n0())
            .map(|i0| {
                let terms: Vec<f64> = (0..nt)
                    .map(|it| self.log_kernel(it, i0) + self.w_t[it].ln() + log_v[it])
                    .collect();
                log_sum_exp(&terms)
            })
            .collect()
    }

    fn log_f0(&self) -> Vec<f64> {
        self.f0.iter().map(|v| v.ln()).collect()
    }

    fn log_f_t(&self) -> Vec<f64> {
        self.f_t.iter().map(|v| v.ln()).collect()
    }

    /// One application of `𝒪` in log space.
    fn iterate_log(&self, log_psi0: &[f64]) -> Vec<f64> {
        let g = self.beta.gamma();
        let lf0 = self.log_f0();
        let lft = self.log_f_t();
        // ρ̂₀ = f₀/ψ₀
        let lrho0: Vec<f64> = lf0.iter().zip(log_psi0).map(|(f, p)| f - p).collect();
        // ψ̂_T = (Pρ̂₀)^γ ; ρ̂_T = f_T^γ / ψ̂_T
        let lk = self.push(&lrho0);
        let lrho_t: Vec<f64> = lft.iter().zip(&lk).map(|(f, k)| g * (f - k)).collect();
        // ψ₀ⁿᵉʷ = P*ρ̂_T
        self.pull(&lrho_t)
    }
}

/// One fixed-point sweep on a strictly positive grid function.
pub fn iterate_once(prob: &DiscreteProblem, psi0: &[f64]) -> Result<Vec<f64>> {
    if psi0.len() != prob.n0() {
        return Err(SsbError::DimensionMismatch {
            expected: prob.n0(),
            got: psi0.len(),
        });
    }
    if psi0.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(SsbError::invalid("ψ must be strictly positive and finite"));
    }
    let log_psi: Vec<f64> = psi0.iter().map(|v| v.ln()).collect();
    Ok(prob.iterate_log(&log_psi).iter().map(|v| v.exp()).collect())
}

/// Hilbert projective distance `log max(u/v) − log min(u/v)`.
pub fn hilbert_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() || u.is_empty() {
        return Err(SsbError::invalid("hilbert distance needs equal, nonempty inputs"));
    }
    if u.iter().chain(v).any(|x| !(*x > 0.0) || !x.is_finite()) {
        return Err(SsbError::invalid("hilbert distance needs strictly positive values"));
    }
    let diffs: Vec<f64> = u.iter().zip(v).map(|(a, b)| a.ln() - b.ln()).collect();
    let max = diffs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = diffs.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(max - min)
}

fn hilbert_log(lu: &[f64], lv: &[f64]) -> f64 {
    let diffs: Vec<f64> = lu.iter().zip(lv).map(|(a, b)| a - b).collect();
    let max = diffs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = diffs.iter().cloned().fold(f64::INFINITY, f64::min);
    max - min
}

/// The tempering operator `𝓟(φ) = φ^{β/(1+β)}`, exposed for the exact
/// contraction identity `d_H(𝓟φ₁, 𝓟φ₂) = (β/(1+β))·d_H(φ₁, φ₂)`.
pub fn p_operator(beta: Beta, phi: &[f64]) -> Vec<f64> {
    let g = beta.gamma();
    phi.iter().map(|v| v.powf(g)).collect()
}

/// Solved Schrödinger system on the problem grids.
#[derive(Debug, Clone, Serialize)]
pub struct SchrodingerSolution {
    pub rho0: Vec<f64>,
    pub rho_t: Vec<f64>,
    /// Sup-norm residual of `ρ₀·(P*ρ_T) = f₀`.
    pub residual0: f64,
    /// Sup-norm residual of `ρ_T·(Pρ₀)^{β/(1+β)} = f_T^{β/(1+β)}`.
    pub residual_t: f64,
    /// Hilbert distance between successive iterates, per iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    /// Optimal terminal density `q* = f_T^{β/(1+β)}·k_T^{1/(1+β)}` (with
    /// `k_T = Pρ₀` the density of ν_T), normalized on the terminal grid.
    pub q_star: Vec<f64>,
    /// Quadrature mass of q* before normalization; 1 at an exact fixed point.
    pub q_star_mass: f64,
    /// `J_β(u*) = −D_KL(μ₀, ν₀)`, clamped at 0.
    pub cost: f64,
}

impl SchrodingerSolution {
    pub fn terminal_law_and_cost(&self) -> (&[f64], f64) {
        (&self.q_star, self.cost)
    }
}

/// Solve from the canonical start `ψ₀ ≡ 1`.
pub fn solve(prob: &DiscreteProblem, tol: f64, max_iter: usize) -> Result<SchrodingerSolution> {
    solve_from(prob, &vec![1.0; prob.n0()], tol, max_iter)
}

/// Solve from an arbitrary strictly positive initialization.
pub fn solve_from(
    prob: &DiscreteProblem,
    init_psi0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<SchrodingerSolution> {
    prob.validate()?;
    if init_psi0.len() != prob.n0() || init_psi0.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(SsbError::invalid("initialization must be strictly positive on grid0"));
    }
    let mut lpsi: Vec<f64> = init_psi0.iter().map(|v| v.ln()).collect();
    let mut trace = Vec::new();
    let mut lnorm_last = 0.0;
    let mut converged = prob.beta.is_zero(); // β=0: 𝒪 ignores ψ, one sweep suffices
    let mut iterations = 0;
    for _ in 0..max_iter {
        let raw = prob.iterate_log(&lpsi);
        // weighted L2 norm: log ‖ψ‖₂ = ½ log Σ w0 ψ²
        let terms: Vec<f64> = raw.iter().zip(&prob.w0).map(|(l, w)| 2.0 * l + w.ln()).collect();
        lnorm_last = 0.5 * log_sum_exp(&terms);
        let next: Vec<f64> = raw.iter().map(|l| l - lnorm_last).collect();
        let d = hilbert_log(&lpsi, &next);
        trace.push(d);
        lpsi = next;
        iterations += 1;
        if d < tol {
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    if !converged {
        return Err(SsbError::NonConvergence {
            iterations,
            last_distance: *trace.last().unwrap_or(&f64::NAN),
            trace,
        });
    }
    // restore the unique absolute scale: ψ* = ‖𝒪(g)‖₂^{1+β}·g
    if let Beta::Finite(b) = prob.beta {
        for l in lpsi.iter_mut() {
            *l += (1.0 + b) * lnorm_last;
        }
    }
    let g = prob.beta.gamma();
    let lf0 = prob.log_f0();
    let lft = prob.log_f_t();
    let lrho0: Vec<f64> = lf0.iter().zip(&lpsi).map(|(f, p)| f - p).collect();
    let lk = prob.push(&lrho0);
    let lrho_t: Vec<f64> = lft.iter().zip(&lk).map(|(f, k)| g * (f - k)).collect();
    let lpsi_next = prob.pull(&lrho_t);
    let residual0 = lrho0
        .iter()
        .zip(&lpsi_next)
        .zip(&prob.f0)
        .map(|((r, p), f)| ((r + p).exp() - f).abs())
        .fold(0.0, f64::max);
    let residual_t = lrho_t
        .iter()
        .zip(&lk)
        .zip(&lft)
        .map(|((r, k), f)| ((r + g * k).exp() - (g * f).exp()).abs())
        .fold(0.0, f64::max);
    // q* = f_T^γ k_T^{1−γ}
    let lq: Vec<f64> = lft.iter().zip(&lk).map(|(f, k)| g * f + (1.0 - g) * k).collect();
    let mass_terms: Vec<f64> = lq.iter().zip(&prob.w_t).map(|(l, w)| l + w.ln()).collect();
    let lmass = log_sum_exp(&mass_terms);
    let q_star: Vec<f64> = lq.iter().map(|l| (l - lmass).exp()).collect();
    let cost = match prob.beta {
        Beta::Finite(_) => {
            // J = −D_KL(μ₀, ν₀) = −Σ w₀ f₀ log ψ₀
            let j: f64 = prob
                .w0
                .iter()
                .zip(&prob.f0)
                .zip(&lpsi)
                .map(|((w, f), l)| -w * f * l)
                .sum();
            j.max(0.0)
        }
        Beta::Infinite => {
            // hard bridge: KL(μ_T ‖ pushforward of μ₀)
            let lpush = prob.push(&lf0);
            prob.w_t
                .iter()
                .zip(&prob.f_t)
                .zip(lft.iter().zip(&lpush))
                .map(|((w, f), (lf, lp))| if *f > 0.0 { w * f * (lf - lp) } else { 0.0 })
                .sum::<f64>()
                .max(0.0)
        }
    };
    Ok(SchrodingerSolution {
        rho0: lrho0.iter().map(|l| l.exp()).collect(),
        rho_t: lrho_t.iter().map(|l| l.exp()).collect(),
        residual0,
        residual_t,
        trace,
        iterations,
        q_star,
        q_star_mass: lmass.exp(),
        cost,
    })
}
