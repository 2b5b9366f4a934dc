//! The SSB optimal drift `u*(x,t) = σ²∇log h(x,t)`.
//!
//! For a Brownian reference started at `x0`, `h` is the conditional
//! expectation of the tilted ratio `r(y) = (f_T(y)/φ_{σ√T}(y−x0))^{β/(1+β)}`
//! under `y ~ N(x, σ²(T−t)I)`, and the drift is the ratio-of-expectations
//!
//! `u*(x,t) = σ² · E[r(y) ∇log r(y)] / E[r(y)]`.
//!
//! Three evaluators are provided: exact Gaussian algebra for Gaussian
//! targets, plain Monte Carlo, and self-normalized importance sampling. The
//! MC estimators can *fail by overflow* — the ratio grows super-exponentially
//! for heavy-tailed targets — and failure is data, not an error: see
//! [`OverflowFailure`].

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::beta::Beta;
use crate::density::DensityModel;
use crate::error::SsbError;
use crate::quadrature::{integrate_1d, QuadratureSpec};
use crate::rng::{substream, STREAM_DRIFT};
use crate::special::{log_sum_exp, normal_logpdf};
use crate::Result;

/// Base drift of the uncontrolled SDE `dX = b dt + σ dW`.
pub type BaseDrift = Arc<dyn Fn(&[f64], f64) -> Vec<f64> + Send + Sync>;

/// Problem data for a Dirac-initialized soft bridge.
#[derive(Clone)]
pub struct BridgeSpec {
    pub sigma: f64,
    pub horizon: f64,
    pub x0: Vec<f64>,
    /// `None` means `b ≡ 0` (the Brownian reference all MC paths assume).
    pub base_drift: Option<BaseDrift>,
    pub target: DensityModel,
    pub beta: Beta,
}

impl BridgeSpec {
    pub fn new(sigma: f64, horizon: f64, x0: Vec<f64>, target: DensityModel, beta: Beta) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(SsbError::invalid("sigma must be positive"));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(SsbError::invalid("horizon must be positive"));
        }
        if x0.len() != target.dim() {
            return Err(SsbError::DimensionMismatch {
                expected: target.dim(),
                got: x0.len(),
            });
        }
        Ok(BridgeSpec {
            sigma,
            horizon,
            x0,
            base_drift: None,
            target,
            beta,
        })
    }

    pub fn with_base_drift(mut self, b: BaseDrift) -> Self {
        self.base_drift = Some(b);
        self
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn base_drift_at(&self, x: &[f64], t: f64) -> Vec<f64> {
        match &self.base_drift {
            Some(b) => b(x, t),
            None => vec![0.0; x.len()],
        }
    }

    fn require_brownian(&self) -> Result<()> {
        if self.base_drift.is_some() {
            return Err(SsbError::Unsupported(
                "ratio-form drift requires base drift ≡ 0 (Brownian reference)".into(),
            ));
        }
        Ok(())
    }
}

/// A Monte Carlo drift call that overflowed: some linear-space weight
/// aggregate left the representable range (or all weights underflowed to
/// zero). Mirrors the per-trial failures counted in heavy-tail experiments.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct OverflowFailure {
    /// `log Σ exp(ℓ_i)`; `+∞`, `−∞`, or NaN here is the failure signal.
    pub log_denominator: f64,
    pub n_mc: usize,
}

/// Successful Monte Carlo drift estimate with delta-method standard errors.
#[derive(Debug, Clone)]
pub struct DriftEstimate {
    pub value: Vec<f64>,
    pub standard_error: Vec<f64>,
    /// Effective sample size of the (self-normalized) weights.
    pub ess: f64,
    pub n_mc: usize,
}

/// Outcome of one MC drift call. Overflow is an expected event, not an error.
#[derive(Debug, Clone)]
pub enum McOutcome {
    Estimate(DriftEstimate),
    Overflow(OverflowFailure),
}

impl McOutcome {
    pub fn estimate(&self) -> Option<&DriftEstimate> {
        match self {
            McOutcome::Estimate(e) => Some(e),
            McOutcome::Overflow(_) => None,
        }
    }

    pub fn is_overflow(&self) -> bool {
        matches!(self, McOutcome::Overflow(_))
    }
}

/// `log r(z) = (β/(1+β)) · (log f_T(z) − log φ_{σ√T}(z − x0))`.
pub fn ratio_r(spec: &BridgeSpec, z: &[f64]) -> Result<f64> {
    spec.require_brownian()?;
    let g = spec.beta.gamma();
    if g == 0.0 {
        // exact: exponent zero kills the ratio even where f_T vanishes
        spec.target.log_density(z).map(|_| 0.0)
    } else {
        let s = spec.sigma * spec.horizon.sqrt();
        let log_k: f64 = z
            .iter()
            .zip(&spec.x0)
            .map(|(zi, xi)| normal_logpdf(*zi, *xi, s))
            .sum();
        Ok(g * (spec.target.log_density(z)? - log_k))
    }
}

/// `∇log r(z) = (β/(1+β)) · (score_{f_T}(z) + (z − x0)/(σ²T))`.
pub fn grad_log_r(spec: &BridgeSpec, z: &[f64]) -> Result<Vec<f64>> {
    spec.require_brownian()?;
    let g = spec.beta.gamma();
    let v = spec.sigma * spec.sigma * spec.horizon;
    let mut grad = spec.target.score(z)?;
    for (gi, (zi, xi)) in grad.iter_mut().zip(z.iter().zip(&spec.x0)) {
        *gi = g * (*gi + (zi - xi) / v);
    }
    Ok(grad)
}

/// Shared aggregation for both MC estimators.
///
/// Takes per-sample `(log weight ℓ_i, gradient g_i)` pairs. The *returned*
/// estimate is computed stably with log-sum-exp, but failure is decided by
/// the plain linear-space aggregates `Σ exp(ℓ_i)` and `Σ exp(ℓ_i)·g_i`:
/// that is exactly the quantity a naive implementation forms, so overflow
/// statistics match the naive estimator trial for trial.
pub(crate) fn aggregate(sigma: f64, log_w: &[f64], grads: &[Vec<f64>], d: usize) -> McOutcome {
    let n = log_w.len();
    let mut lin_den = 0.0f64;
    let mut lin_num = vec![0.0f64; d];
    for (l, g) in log_w.iter().zip(grads) {
        let w = l.exp();
        lin_den += w;
        for (acc, gi) in lin_num.iter_mut().zip(g) {
            *acc += w * gi;
        }
    }
    let log_den = log_sum_exp(log_w);
    let failed =
        !lin_den.is_finite() || log_den == f64::NEG_INFINITY || lin_num.iter().any(|v| !v.is_finite());
    if failed {
        return McOutcome::Overflow(OverflowFailure {
            log_denominator: if lin_den.is_finite() { log_den } else { lin_den.ln() },
            n_mc: n,
        });
    }
    // normalized weights
    let wt: Vec<f64> = log_w.iter().map(|l| (l - log_den).exp()).collect();
    let wsum: f64 = wt.iter().sum();
    let mut mean = vec![0.0; d];
    for (w, g) in wt.iter().zip(grads) {
        for (m, gi) in mean.iter_mut().zip(g) {
            *m += w * gi / wsum;
        }
    }
    let mut var = vec![0.0; d];
    for (w, g) in wt.iter().zip(grads) {
        let wn = w / wsum;
        for (v, (gi, m)) in var.iter_mut().zip(g.iter().zip(&mean)) {
            *v += wn * wn * (gi - m) * (gi - m);
        }
    }
    let s2 = sigma * sigma;
    let ess = 1.0 / wt.iter().map(|w| (w / wsum) * (w / wsum)).sum::<f64>();
    McOutcome::Estimate(DriftEstimate {
        value: mean.iter().map(|m| s2 * m).collect(),
        standard_error: var.iter().map(|v| s2 * v.sqrt()).collect(),
        ess,
        n_mc: n,
    })
}

/// Plain MC drift: `y_i = x + ζ_i`, `ζ_i ~ N(0, σ²(T−t)I)`,
/// with numerator and denominator sharing the same draws.
pub fn drift_mc<R: Rng + ?Sized>(
    spec: &BridgeSpec,
    x: &[f64],
    t: f64,
    n_mc: usize,
    rng: &mut R,
) -> Result<McOutcome> {
    spec.require_brownian()?;
    check_xt(spec, x, t, n_mc)?;
    let d = spec.dim();
    let s = spec.sigma * (spec.horizon - t).sqrt();
    let mut log_w = Vec::with_capacity(n_mc);
    let mut grads = Vec::with_capacity(n_mc);
    let mut y = vec![0.0; d];
    for _ in 0..n_mc {
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = xi + s * rng.sample::<f64, _>(StandardNormal);
        }
        log_w.push(ratio_r(spec, &y)?);
        grads.push(grad_log_r(spec, &y)?);
    }
    Ok(aggregate(spec.sigma, &log_w, &grads, d))
}

/// Importance proposal for the drift estimator, in the standardized
/// `z`-space (`y = x + σ√(T−t)·z`, coordinates iid).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Proposal {
    /// `N(0, std² I)`; `std = √(1+β)` is the tuned choice for finite β.
    Gaussian { std: f64 },
    /// Product of iid Student-t variables; 2 degrees of freedom is the tuned
    /// choice for the hard bridge onto heavy-tailed targets.
    StudentT { dof: f64 },
}

impl Proposal {
    fn log_density(&self, z: &[f64]) -> f64 {
        match self {
            Proposal::Gaussian { std } => z.iter().map(|zi| normal_logpdf(*zi, 0.0, *std)).sum(),
            Proposal::StudentT { dof } => {
                let v = *dof;
                // log Γ((v+1)/2) − log Γ(v/2) − ½log(vπ) − (v+1)/2·log(1+z²/v)
                let c = ln_gamma(0.5 * (v + 1.0)) - ln_gamma(0.5 * v) - 0.5 * (v * std::f64::consts::PI).ln();
                z.iter()
                    .map(|zi| c - 0.5 * (v + 1.0) * (1.0 + zi * zi / v).ln())
                    .sum()
            }
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, d: usize) -> Vec<f64> {
        match self {
            Proposal::Gaussian { std } => (0..d)
                .map(|_| std * rng.sample::<f64, _>(StandardNormal))
                .collect(),
            Proposal::StudentT { dof } => {
                let t = rand_distr::StudentT::new(*dof).expect("valid dof");
                (0..d).map(|_| t.sample(rng)).collect()
            }
        }
    }
}

/// Lanczos log-gamma (g = 7, n = 9), |err| < 1e-13 for x > 0.
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Importance-sampled drift: `z_i ~ w`, `y_i = x + σ√(T−t)·z_i`, log-weight
/// `log φ(z_i) + log r(y_i) − log w(z_i)`.
///
/// Numerator and denominator are separate Monte Carlo averages over
/// *independent* draws (`n_mc` each). Unlike a shared-draw self-normalized
/// ratio, the two averages fluctuate independently, so a heavy-tailed weight
/// distribution (the hard bridge onto a heavy-tailed target) produces
/// occasional enormous ratios; the path then escapes to large `|x|` where
/// the linear-space aggregates overflow. Failure is decided by those plain
/// aggregates — `Σ exp(ℓ)` per side — while the returned estimate itself is
/// computed with log-sum-exp.
pub fn drift_mc_importance<R: Rng + ?Sized>(
    spec: &BridgeSpec,
    x: &[f64],
    t: f64,
    n_mc: usize,
    proposal: Proposal,
    rng: &mut R,
) -> Result<McOutcome> {
    spec.require_brownian()?;
    check_xt(spec, x, t, n_mc)?;
    let d = spec.dim();
    let s = spec.sigma * (spec.horizon - t).sqrt();
    let mut y = vec![0.0; d];
    let log_weight = |rng: &mut R, y: &mut Vec<f64>| -> Result<f64> {
        let z = proposal.sample(rng, d);
        for (yi, (xi, zi)) in y.iter_mut().zip(x.iter().zip(&z)) {
            *yi = xi + s * zi;
        }
        let log_phi: f64 = z.iter().map(|zi| normal_logpdf(*zi, 0.0, 1.0)).sum();
        Ok(log_phi + ratio_r(spec, y)? - proposal.log_density(&z))
    };

    // numerator draws
    let mut log_w = Vec::with_capacity(n_mc);
    let mut grads = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        log_w.push(log_weight(rng, &mut y)?);
        grads.push(grad_log_r(spec, &y)?);
    }
    // independent denominator draws
    let mut log_w_den = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        log_w_den.push(log_weight(rng, &mut y)?);
    }

    let mut lin_den = 0.0f64;
    let mut lin_num = vec![0.0f64; d];
    for l in &log_w_den {
        lin_den += l.exp();
    }
    for (l, g) in log_w.iter().zip(&grads) {
        let w = l.exp();
        for (acc, gi) in lin_num.iter_mut().zip(g) {
            *acc += w * gi;
        }
    }
    let log_den = log_sum_exp(&log_w_den);
    if !lin_den.is_finite() || log_den == f64::NEG_INFINITY || lin_num.iter().any(|v| !v.is_finite())
    {
        return Ok(McOutcome::Overflow(OverflowFailure {
            log_denominator: if lin_den.is_finite() { log_den } else { lin_den.ln() },
            n_mc,
        }));
    }

    // stable ratio: scale both sides by the overall max log-weight
    let m = log_w
        .iter()
        .chain(&log_w_den)
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let n = n_mc as f64;
    let a: Vec<f64> = log_w.iter().map(|l| (l - m).exp()).collect();
    let b: Vec<f64> = log_w_den.iter().map(|l| (l - m).exp()).collect();
    let den_mean = b.iter().sum::<f64>() / n;
    let den_var = b.iter().map(|w| (w - den_mean) * (w - den_mean)).sum::<f64>() / n;
    let s2 = spec.sigma * spec.sigma;
    let mut value = vec![0.0f64; d];
    let mut se = vec![0.0f64; d];
    for i in 0..d {
        let num_mean = a.iter().zip(&grads).map(|(w, g)| w * g[i]).sum::<f64>() / n;
        let num_var = a
            .iter()
            .zip(&grads)
            .map(|(w, g)| {
                let v = w * g[i] - num_mean;
                v * v
            })
            .sum::<f64>()
            / n;
        value[i] = s2 * num_mean / den_mean;
        // delta method for the ratio of independent averages
        let var = num_var / (n * den_mean * den_mean)
            + num_mean * num_mean * den_var / (n * den_mean.powi(4));
        se[i] = s2 * var.sqrt();
    }
    let wsum: f64 = a.iter().sum();
    let ess = wsum * wsum / a.iter().map(|w| w * w).sum::<f64>();
    Ok(McOutcome::Estimate(DriftEstimate {
        value,
        standard_error: se,
        ess,
        n_mc,
    }))
}

fn check_xt(spec: &BridgeSpec, x: &[f64], t: f64, n_mc: usize) -> Result<()> {
    if x.len() != spec.dim() {
        return Err(SsbError::DimensionMismatch {
            expected: spec.dim(),
            got: x.len(),
        });
    }
    if !(t >= 0.0 && t < spec.horizon) {
        return Err(SsbError::invalid(format!(
            "time {t} outside [0, {})",
            spec.horizon
        )));
    }
    if n_mc == 0 {
        return Err(SsbError::invalid("n_mc must be at least 1"));
    }
    Ok(())
}

/// Exact drift for a diagonal Gaussian target by completing the square.
///
/// Per axis, with `γ = β/(1+β)`, `a = 1/(σ²(T−t))`, `c₁ = γ/s²`,
/// `c₂ = γ/(σ²T)`:
///
/// `u*(x,t) = σ² a (c₁(m−x) + c₂(x−x₀)) / (a + c₁ − c₂)`.
pub fn drift_closed_form_gaussian(spec: &BridgeSpec, x: &[f64], t: f64) -> Result<Vec<f64>> {
    spec.require_brownian()?;
    check_xt(spec, x, t, 1)?;
    let DensityModel::Gaussian { mean, std } = &spec.target else {
        return Err(SsbError::Unsupported(
            "closed-form drift requires a Gaussian target".into(),
        ));
    };
    let g = spec.beta.gamma();
    let s2 = spec.sigma * spec.sigma;
    let a = 1.0 / (s2 * (spec.horizon - t));
    let c2 = g / (s2 * spec.horizon);
    Ok((0..x.len())
        .map(|i| {
            let si = std.at(i);
            let c1 = g / (si * si);
            let denom = a + c1 - c2;
            s2 * a * (c1 * (mean[i] - x[i]) + c2 * (x[i] - spec.x0[i])) / denom
        })
        .collect())
}

/// Optimal cost `J_β(u*) = −(1+β)·log C` with
/// `C = ∫ f_T^{β/(1+β)} p(x,T|x0,0)^{1/(1+β)} dx`; at `β=∞` the KL limit
/// `KL(μ_T ‖ Law(X_T))` is evaluated directly.
pub fn cost_estimate(spec: &BridgeSpec, quad: &QuadratureSpec) -> Result<f64> {
    spec.require_brownian()?;
    let k_t = DensityModel::Gaussian {
        mean: spec.x0.clone(),
        std: crate::density::Scale::Iso(spec.sigma * spec.horizon.sqrt()),
    };
    match spec.beta {
        Beta::Finite(b) => {
            let gm = DensityModel::geometric_mixture(k_t, spec.target.clone(), spec.beta);
            let c = crate::density::geometric_mixture_normalizer(&gm, quad)?;
            Ok((-(1.0 + b) * c.ln()).max(0.0))
        }
        Beta::Infinite => {
            if spec.dim() != 1 {
                return Err(SsbError::Unsupported(
                    "β=∞ cost quadrature implemented for d = 1".into(),
                ));
            }
            let f = &spec.target;
            let hint = f.domain_hint()[0];
            let kl = integrate_1d(
                |x| {
                    let lf = f.log_density_unchecked(&[x]);
                    if lf == f64::NEG_INFINITY {
                        0.0
                    } else {
                        lf.exp() * (lf - k_t.log_density_unchecked(&[x]))
                    }
                },
                hint.0,
                hint.1,
                quad,
            )?;
            Ok(kl.max(0.0))
        }
    }
}

/// Drift evaluator used by the SDE engine. `State` carries whatever the
/// field needs per path (e.g. recorded checkpoints for the time-series
/// drift); stateless fields use `()`.
pub trait DriftField: Sync {
    type State: Send;

    fn dim(&self) -> usize;

    fn init_state(&self) -> Self::State;

    /// Drift at `(x, t)`. `master`, `path` and `step` identify the RNG
    /// substream for stochastic evaluators, making results independent of
    /// thread scheduling.
    fn drift(
        &self,
        state: &mut Self::State,
        x: &[f64],
        t: f64,
        master: u64,
        path: u64,
        step: u64,
    ) -> McOutcome;

    /// Called with the state reached after each Euler step (and its time).
    fn observe(&self, _state: &mut Self::State, _x: &[f64], _t: f64) {}
}

fn exact(value: Vec<f64>) -> McOutcome {
    let d = value.len();
    McOutcome::Estimate(DriftEstimate {
        value,
        standard_error: vec![0.0; d],
        ess: f64::INFINITY,
        n_mc: 0,
    })
}

/// `u ≡ 0`.
pub struct ZeroDrift(pub usize);

impl DriftField for ZeroDrift {
    type State = ();
    fn dim(&self) -> usize {
        self.0
    }
    fn init_state(&self) {}
    fn drift(&self, _: &mut (), x: &[f64], _t: f64, _m: u64, _p: u64, _s: u64) -> McOutcome {
        exact(vec![0.0; x.len()])
    }
}

/// Arbitrary deterministic drift from a closure (constant controls, OU
/// pulls, learned reverse drifts, …).
pub struct FnDrift<F: Fn(&[f64], f64) -> Vec<f64> + Sync> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64], f64) -> Vec<f64> + Sync> DriftField for FnDrift<F> {
    type State = ();
    fn dim(&self) -> usize {
        self.dim
    }
    fn init_state(&self) {}
    fn drift(&self, _: &mut (), x: &[f64], t: f64, _m: u64, _p: u64, _s: u64) -> McOutcome {
        exact((self.f)(x, t))
    }
}

/// Exact Gaussian-target drift as a field.
pub struct ClosedFormDrift {
    pub spec: BridgeSpec,
}

impl DriftField for ClosedFormDrift {
    type State = ();
    fn dim(&self) -> usize {
        self.spec.dim()
    }
    fn init_state(&self) {}
    fn drift(&self, _: &mut (), x: &[f64], t: f64, _m: u64, _p: u64, _s: u64) -> McOutcome {
        exact(drift_closed_form_gaussian(&self.spec, x, t).expect("validated spec"))
    }
}

/// Monte Carlo drift field, plain or importance-sampled.
pub struct McDrift {
    pub spec: BridgeSpec,
    pub n_mc: usize,
    /// `None` → plain estimator with the exact conditional Gaussian.
    pub proposal: Option<Proposal>,
}

impl DriftField for McDrift {
    type State = ();
    fn dim(&self) -> usize {
        self.spec.dim()
    }
    fn init_state(&self) {}
    fn drift(&self, _: &mut (), x: &[f64], t: f64, master: u64, path: u64, step: u64) -> McOutcome {
        let mut rng = substream(master, &[path, step, STREAM_DRIFT]);
        let res = match self.proposal {
            None => drift_mc(&self.spec, x, t, self.n_mc, &mut rng),
            Some(p) => drift_mc_importance(&self.spec, x, t, self.n_mc, p, &mut rng),
        };
        match res {
            Ok(out) => out,
            // non-finite states reach here via dimension-valid but NaN x;
            // treat as the overflow event rather than panicking mid-ensemble
            Err(_) => McOutcome::Overflow(OverflowFailure {
                log_denominator: f64::NAN,
                n_mc: self.n_mc,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::STREAM_ORACLE;

    fn gauss_spec(beta: Beta) -> BridgeSpec {
        BridgeSpec::new(1.0, 1.0, vec![0.0], DensityModel::gaussian1(2.0, 1.0), beta).unwrap()
    }

    #[test]
    fn ratio_is_zero_at_beta_zero_and_matched_target() {
        let spec = gauss_spec(Beta::new(0.0).unwrap());
        assert_eq!(ratio_r(&spec, &[3.7]).unwrap(), 0.0);
        let matched = BridgeSpec::new(
            1.0,
            1.0,
            vec![0.0],
            DensityModel::gaussian1(0.0, 1.0),
            Beta::Infinite,
        )
        .unwrap();
        for z in [-2.0, 0.0, 1.5] {
            assert!(ratio_r(&matched, &[z]).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn cauchy_ratio_plug_in_value() {
        let spec = BridgeSpec::new(
            1.0,
            1.0,
            vec![0.0],
            DensityModel::cauchy(0.0, 1.0),
            Beta::new(100.0).unwrap(),
        )
        .unwrap();
        let expected = (100.0 / 101.0)
            * ((1.0 / (std::f64::consts::PI * 10.0)).ln() + 0.5 * crate::special::LN_2PI + 4.5);
        assert!((ratio_r(&spec, &[3.0]).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn closed_form_frozen_value_and_trivia() {
        // β=1, σ=T=1, target N(2,1): u*(0,0) = 1 exactly.
        let spec = gauss_spec(Beta::new(1.0).unwrap());
        let u = drift_closed_form_gaussian(&spec, &[0.0], 0.0).unwrap();
        assert!((u[0] - 1.0).abs() < 1e-12, "u = {}", u[0]);
        // β=0 → no control.
        let spec0 = gauss_spec(Beta::new(0.0).unwrap());
        assert_eq!(drift_closed_form_gaussian(&spec0, &[1.3], 0.4).unwrap()[0], 0.0);
        // β=∞ with f_T equal to the uncontrolled law → no control.
        let matched = BridgeSpec::new(
            1.0,
            1.0,
            vec![0.0],
            DensityModel::gaussian1(0.0, 1.0),
            Beta::Infinite,
        )
        .unwrap();
        assert!(drift_closed_form_gaussian(&matched, &[0.8], 0.25).unwrap()[0].abs() < 1e-12);
    }

    #[test]
    fn mc_matches_closed_form_within_4_se() {
        let spec = gauss_spec(Beta::new(1.0).unwrap());
        let exact = drift_closed_form_gaussian(&spec, &[0.5], 0.3).unwrap()[0];
        let mut rng = substream(11, &[STREAM_ORACLE]);
        let out = drift_mc(&spec, &[0.5], 0.3, 10_000, &mut rng).unwrap();
        let est = out.estimate().expect("no overflow for Gaussian target");
        let err = (est.value[0] - exact).abs();
        assert!(
            err < 4.0 * est.standard_error[0],
            "err {err}, 4·SE {}",
            4.0 * est.standard_error[0]
        );
    }

    #[test]
    fn beta_zero_mc_drift_is_exactly_zero() {
        let spec = gauss_spec(Beta::new(0.0).unwrap());
        let mut rng = substream(3, &[STREAM_ORACLE]);
        let out = drift_mc(&spec, &[1.0], 0.1, 50, &mut rng).unwrap();
        assert_eq!(out.estimate().unwrap().value[0], 0.0);
    }

    #[test]
    fn symmetric_targets_give_zero_drift_at_origin() {
        for target in [DensityModel::gaussian1(0.0, 0.7), DensityModel::cauchy(0.0, 1.0)] {
            let spec =
                BridgeSpec::new(1.0, 1.0, vec![0.0], target, Beta::new(2.0).unwrap()).unwrap();
            let mut rng = substream(5, &[STREAM_ORACLE]);
            let out = drift_mc(&spec, &[0.0], 0.0, 20_000, &mut rng).unwrap();
            let est = out.estimate().unwrap();
            assert!(
                est.value[0].abs() < 4.0 * est.standard_error[0],
                "drift {} vs SE {}",
                est.value[0],
                est.standard_error[0]
            );
        }
    }

    #[test]
    fn importance_with_unit_gaussian_matches_plain_statistically() {
        // target std ≠ σ√T, otherwise the integrand is constant and the
        // estimator degenerates to an exact value with near-zero SE
        let spec = BridgeSpec::new(
            1.0,
            1.0,
            vec![0.0],
            DensityModel::gaussian1(2.0, 0.8),
            Beta::new(1.0).unwrap(),
        )
        .unwrap();
        let exact = drift_closed_form_gaussian(&spec, &[0.2], 0.5).unwrap()[0];
        let mut rng = substream(9, &[STREAM_ORACLE]);
        let out = drift_mc_importance(
            &spec,
            &[0.2],
            0.5,
            10_000,
            Proposal::Gaussian { std: 1.0 },
            &mut rng,
        )
        .unwrap();
        let est = out.estimate().unwrap();
        assert!(
            (est.value[0] - exact).abs() < 4.0 * est.standard_error[0],
            "value {} exact {exact} se {} ess {}",
            est.value[0],
            est.standard_error[0],
            est.ess
        );
    }

    #[test]
    fn tuned_gaussian_proposal_is_symmetric_at_origin() {
        let beta = 100.0;
        let spec = BridgeSpec::new(
            1.0,
            1.0,
            vec![0.0],
            DensityModel::cauchy(0.0, 1.0),
            Beta::new(beta).unwrap(),
        )
        .unwrap();
        let mut rng = substream(13, &[STREAM_ORACLE]);
        let out = drift_mc_importance(
            &spec,
            &[0.0],
            0.0,
            20_000,
            Proposal::Gaussian { std: (1.0 + beta).sqrt() },
            &mut rng,
        )
        .unwrap();
        let est = out.estimate().unwrap();
        assert!(est.value[0].abs() < 4.0 * est.standard_error[0]);
    }

    #[test]
    fn student_t_proposal_log_density_is_a_density() {
        // spot-check the hand-rolled t(2) logpdf against the closed form
        // f(z) = 1/(2√2) (1+z²/2)^{-3/2}
        let p = Proposal::StudentT { dof: 2.0 };
        for z in [-3.0f64, 0.0, 0.5, 7.0] {
            let expected = (1.0 / (2.0 * 2f64.sqrt())).ln() - 1.5 * (1.0 + z * z / 2.0).ln();
            assert!((p.log_density(&[z]) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn cost_reference_values() {
        let quad = QuadratureSpec::default();
        // target equal to the uncontrolled terminal law → 0
        let free = BridgeSpec::new(
            1.0,
            1.0,
            vec![0.0],
            DensityModel::gaussian1(0.0, 1.0),
            Beta::new(7.0).unwrap(),
        )
        .unwrap();
        assert!(cost_estimate(&free, &quad).unwrap() < 1e-8);
        // N(2,1) target, β=1, σ²T=1 → −2 log e^{−1/2} = 1
        let spec = gauss_spec(Beta::new(1.0).unwrap());
        assert!((cost_estimate(&spec, &quad).unwrap() - 1.0).abs() < 1e-8);
        // β=∞ Gaussian target N(m, σ²T): KL = m²/(2σ²T) = 2
        let hard = gauss_spec(Beta::Infinite);
        assert!((cost_estimate(&hard, &quad).unwrap() - 2.0).abs() < 1e-7);
    }

    #[test]
    fn closed_form_converges_to_hard_bridge() {
        let hard = gauss_spec(Beta::Infinite);
        let u_inf = drift_closed_form_gaussian(&hard, &[0.3], 0.2).unwrap()[0];
        let mut last_gap = f64::INFINITY;
        for b in [10.0, 100.0, 1_000.0, 10_000.0] {
            let u = drift_closed_form_gaussian(&gauss_spec(Beta::new(b).unwrap()), &[0.3], 0.2).unwrap()[0];
            let gap = (u - u_inf).abs();
            assert!(gap < last_gap, "gap not shrinking at β={b}");
            last_gap = gap;
        }
        assert!(last_gap < 1e-3);
    }

    #[test]
    fn mc_drift_is_seed_deterministic() {
        let spec = gauss_spec(Beta::new(1.0).unwrap());
        let a = drift_mc(&spec, &[0.4], 0.1, 500, &mut substream(42, &[STREAM_ORACLE])).unwrap();
        let b = drift_mc(&spec, &[0.4], 0.1, 500, &mut substream(42, &[STREAM_ORACLE])).unwrap();
        assert_eq!(a.estimate().unwrap().value, b.estimate().unwrap().value);
    }

    #[test]
    fn far_field_hard_cauchy_call_overflows() {
        // the documented failure mechanics: |x| large makes the Gaussian
        // denominator of r astronomically small, so exp(log r) overflows
        let spec = BridgeSpec::new(
            1.0,
            1.0,
            vec![0.0],
            DensityModel::cauchy(0.0, 1.0),
            Beta::Infinite,
        )
        .unwrap();
        let mut rng = substream(2, &[STREAM_ORACLE]);
        let out = drift_mc(&spec, &[60.0], 0.5, 200, &mut rng).unwrap();
        assert!(out.is_overflow(), "expected overflow at x = 60");
    }
}
