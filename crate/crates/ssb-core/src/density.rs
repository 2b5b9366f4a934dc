//! Log-space density models with analytic scores.
//!
//! A [`DensityModel`] is an immutable, possibly unnormalized log-density on
//! `R^d` together with its gradient (score). Everything is evaluated in log
//! space: ratios of these densities can grow super-exponentially, so linear
//! arithmetic is never used internally. Models serialize to a small tagged
//! JSON document (see `schema/density.json` in the repository root).

use rand::distributions::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::beta::Beta;
use crate::error::SsbError;
use crate::quadrature::{integrate_log_1d, integrate_log_2d, QuadratureSpec};
use crate::special::{log_sum_exp, normal_logpdf};
use crate::Result;

/// Diagonal covariance scale: one standard deviation for all axes or one per
/// axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scale {
    Iso(f64),
    Diag(Vec<f64>),
}

impl Scale {
    /// Standard deviation along axis `i`.
    pub fn at(&self, i: usize) -> f64 {
        match self {
            Scale::Iso(s) => *s,
            Scale::Diag(v) => v[i],
        }
    }

    pub fn max(&self) -> f64 {
        match self {
            Scale::Iso(s) => *s,
            Scale::Diag(v) => v.iter().cloned().fold(0.0, f64::max),
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let ok = match self {
            Scale::Iso(s) => s.is_finite() && *s > 0.0,
            Scale::Diag(v) => v.len() == dim && v.iter().all(|s| s.is_finite() && *s > 0.0),
        };
        if ok {
            Ok(())
        } else {
            Err(SsbError::invalid("covariance scales must be strictly positive and match the dimension"))
        }
    }

    /// Scale after convolving with isotropic `N(0, sigma^2 I)`.
    fn smoothed(&self, sigma: f64) -> Scale {
        match self {
            Scale::Iso(s) => Scale::Iso((s * s + sigma * sigma).sqrt()),
            Scale::Diag(v) => Scale::Diag(v.iter().map(|s| (s * s + sigma * sigma).sqrt()).collect()),
        }
    }
}

/// Evaluatable (possibly unnormalized) log-density with analytic score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensityModel {
    /// `N(mean, diag(std)^2)`.
    Gaussian { mean: Vec<f64>, std: Scale },
    /// Finite mixture of diagonal Gaussians; weights on the simplex.
    GaussianMixture {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        stds: Vec<Scale>,
    },
    /// One-dimensional Cauchy with location/scale.
    Cauchy { location: f64, scale: f64 },
    /// One-dimensional density tabulated on a uniform lattice over `[lo, hi]`
    /// (zero outside); log-density is piecewise linear between nodes and the
    /// score is the cell slope.
    Grid { lo: f64, hi: f64, values: Vec<f64> },
    /// Unnormalized `base^{1/(1+beta)} * target^{beta/(1+beta)}`; when `log_c`
    /// is present the density is divided by `exp(log_c)`.
    GeometricMixture {
        base: Box<DensityModel>,
        target: Box<DensityModel>,
        beta: Beta,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        log_c: Option<f64>,
    },
    /// Joint density of Brownian checkpoints `x_1, …, x_N` (each in `R^d`)
    /// at times `0 < t_1 < … < t_N`, started from `x0`:
    /// `Π_j φ_{σ√(t_j − t_{j−1})}(x_j − x_{j−1})`.
    ProductTransition {
        x0: Vec<f64>,
        sigma: f64,
        times: Vec<f64>,
    },
}

impl DensityModel {
    pub fn gaussian1(mean: f64, std: f64) -> DensityModel {
        DensityModel::Gaussian {
            mean: vec![mean],
            std: Scale::Iso(std),
        }
    }

    pub fn gaussian_iso(mean: Vec<f64>, std: f64) -> DensityModel {
        DensityModel::Gaussian {
            mean,
            std: Scale::Iso(std),
        }
    }

    pub fn cauchy(location: f64, scale: f64) -> DensityModel {
        DensityModel::Cauchy { location, scale }
    }

    pub fn mixture(weights: Vec<f64>, means: Vec<Vec<f64>>, stds: Vec<Scale>) -> DensityModel {
        DensityModel::GaussianMixture { weights, means, stds }
    }

    pub fn geometric_mixture(base: DensityModel, target: DensityModel, beta: Beta) -> DensityModel {
        DensityModel::GeometricMixture {
            base: Box::new(base),
            target: Box::new(target),
            beta,
            log_c: None,
        }
    }

    /// Tabulate `exp(log_f)` on `n` nodes over `[lo, hi]`.
    pub fn grid_from_log_fn(lo: f64, hi: f64, n: usize, log_f: impl Fn(f64) -> f64) -> DensityModel {
        let h = (hi - lo) / (n - 1) as f64;
        let values = (0..n).map(|i| log_f(lo + i as f64 * h).exp()).collect();
        DensityModel::Grid { lo, hi, values }
    }

    pub fn dim(&self) -> usize {
        match self {
            DensityModel::Gaussian { mean, .. } => mean.len(),
            DensityModel::GaussianMixture { means, .. } => means[0].len(),
            DensityModel::Cauchy { .. } | DensityModel::Grid { .. } => 1,
            DensityModel::GeometricMixture { target, .. } => target.dim(),
            DensityModel::ProductTransition { x0, times, .. } => x0.len() * times.len(),
        }
    }

    /// Structural validation; call after deserializing untrusted input.
    pub fn validate(&self) -> Result<()> {
        match self {
            DensityModel::Gaussian { mean, std } => {
                if mean.is_empty() || mean.iter().any(|m| !m.is_finite()) {
                    return Err(SsbError::invalid("gaussian mean must be finite and nonempty"));
                }
                std.validate(mean.len())
            }
            DensityModel::GaussianMixture { weights, means, stds } => {
                if weights.is_empty() || weights.len() != means.len() || weights.len() != stds.len() {
                    return Err(SsbError::invalid("mixture weights/means/stds lengths must match"));
                }
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(SsbError::invalid("mixture weights must be nonnegative"));
                }
                let sum: f64 = weights.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(SsbError::invalid(format!("mixture weights sum to {sum}, not 1")));
                }
                let d = means[0].len();
                for (m, s) in means.iter().zip(stds) {
                    if m.len() != d || m.iter().any(|v| !v.is_finite()) {
                        return Err(SsbError::invalid("mixture means must be finite with equal dimension"));
                    }
                    s.validate(d)?;
                }
                Ok(())
            }
            DensityModel::Cauchy { location, scale } => {
                if !location.is_finite() || !scale.is_finite() || *scale <= 0.0 {
                    return Err(SsbError::invalid("cauchy needs finite location and positive scale"));
                }
                Ok(())
            }
            DensityModel::Grid { lo, hi, values } => {
                if !(lo < hi) || values.len() < 2 {
                    return Err(SsbError::invalid("grid needs lo < hi and at least two nodes"));
                }
                if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(SsbError::invalid("grid values must be finite and nonnegative"));
                }
                Ok(())
            }
            DensityModel::GeometricMixture { base, target, .. } => {
                base.validate()?;
                target.validate()?;
                if base.dim() != target.dim() {
                    return Err(SsbError::DimensionMismatch {
                        expected: target.dim(),
                        got: base.dim(),
                    });
                }
                Ok(())
            }
            DensityModel::ProductTransition { x0, sigma, times } => {
                if x0.is_empty() || x0.iter().any(|v| !v.is_finite()) {
                    return Err(SsbError::invalid("product transition needs a finite start point"));
                }
                if !sigma.is_finite() || *sigma <= 0.0 {
                    return Err(SsbError::invalid("sigma must be positive"));
                }
                let increasing = times.windows(2).all(|w| w[0] < w[1]);
                if times.is_empty() || times[0] <= 0.0 || !increasing {
                    return Err(SsbError::invalid("checkpoint times must be strictly increasing and positive"));
                }
                Ok(())
            }
        }
    }

    /// Whether `exp(log_density)` integrates to 1 by construction.
    pub fn is_normalized(&self) -> bool {
        match self {
            DensityModel::Gaussian { .. }
            | DensityModel::GaussianMixture { .. }
            | DensityModel::Cauchy { .. }
            | DensityModel::ProductTransition { .. } => true,
            DensityModel::Grid { .. } => false,
            DensityModel::GeometricMixture { log_c, .. } => log_c.is_some(),
        }
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(SsbError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.log_density_unchecked(x))
    }

    /// Like [`log_density`](Self::log_density) but skips the dimension
    /// check; the caller guarantees `x.len() == self.dim()`.
    pub fn log_density_unchecked(&self, x: &[f64]) -> f64 {
        match self {
            DensityModel::Gaussian { mean, std } => (0..mean.len())
                .map(|i| normal_logpdf(x[i], mean[i], std.at(i)))
                .sum(),
            DensityModel::GaussianMixture { weights, means, stds } => {
                let terms: Vec<f64> = weights
                    .iter()
                    .zip(means)
                    .zip(stds)
                    .map(|((w, m), s)| {
                        if *w == 0.0 {
                            f64::NEG_INFINITY
                        } else {
                            w.ln() + (0..m.len()).map(|i| normal_logpdf(x[i], m[i], s.at(i))).sum::<f64>()
                        }
                    })
                    .collect();
                log_sum_exp(&terms)
            }
            DensityModel::Cauchy { location, scale } => {
                let z = (x[0] - location) / scale;
                -(std::f64::consts::PI * scale).ln() - (1.0 + z * z).ln()
            }
            DensityModel::Grid { lo, hi, values } => {
                let x = x[0];
                if x < *lo || x > *hi {
                    return f64::NEG_INFINITY;
                }
                let h = (hi - lo) / (values.len() - 1) as f64;
                let cell = (((x - lo) / h) as usize).min(values.len() - 2);
                let (l0, l1) = (values[cell].ln(), values[cell + 1].ln());
                if !l0.is_finite() || !l1.is_finite() {
                    return f64::NEG_INFINITY;
                }
                let frac = (x - (lo + cell as f64 * h)) / h;
                l0 + frac * (l1 - l0)
            }
            DensityModel::GeometricMixture { base, target, beta, log_c } => {
                let (a, g) = beta.exponents();
                let mut l = 0.0;
                if a > 0.0 {
                    l += a * base.log_density_unchecked(x);
                }
                if g > 0.0 {
                    l += g * target.log_density_unchecked(x);
                }
                l - log_c.unwrap_or(0.0)
            }
            DensityModel::ProductTransition { x0, sigma, times } => {
                let d = x0.len();
                let mut l = 0.0;
                let mut prev_t = 0.0;
                let mut prev: &[f64] = x0;
                for (j, &t) in times.iter().enumerate() {
                    let s = sigma * (t - prev_t).sqrt();
                    let cur = &x[j * d..(j + 1) * d];
                    for i in 0..d {
                        l += normal_logpdf(cur[i], prev[i], s);
                    }
                    prev = cur;
                    prev_t = t;
                }
                l
            }
        }
    }

    /// Gradient of [`Self::log_density`].
    pub fn score(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(SsbError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.score_unchecked(x))
    }

    pub(crate) fn score_unchecked(&self, x: &[f64]) -> Vec<f64> {
        match self {
            DensityModel::Gaussian { mean, std } => (0..mean.len())
                .map(|i| {
                    let s = std.at(i);
                    -(x[i] - mean[i]) / (s * s)
                })
                .collect(),
            DensityModel::GaussianMixture { weights, means, stds } => {
                // ∇ log Σ w_k N_k = Σ r_k ∇ log N_k with posterior weights r_k.
                let d = means[0].len();
                let logs: Vec<f64> = weights
                    .iter()
                    .zip(means)
                    .zip(stds)
                    .map(|((w, m), s)| {
                        if *w == 0.0 {
                            f64::NEG_INFINITY
                        } else {
                            w.ln() + (0..d).map(|i| normal_logpdf(x[i], m[i], s.at(i))).sum::<f64>()
                        }
                    })
                    .collect();
                let total = log_sum_exp(&logs);
                let mut grad = vec![0.0; d];
                for (k, lk) in logs.iter().enumerate() {
                    let r = (lk - total).exp();
                    if r == 0.0 {
                        continue;
                    }
                    for i in 0..d {
                        let s = stds[k].at(i);
                        grad[i] += r * (-(x[i] - means[k][i]) / (s * s));
                    }
                }
                grad
            }
            DensityModel::Cauchy { location, scale } => {
                let z = (x[0] - location) / scale;
                vec![-2.0 * z / (scale * (1.0 + z * z))]
            }
            DensityModel::Grid { lo, hi, values } => {
                let xv = x[0];
                if xv < *lo || xv > *hi {
                    return vec![0.0];
                }
                let h = (hi - lo) / (values.len() - 1) as f64;
                let cell = (((xv - lo) / h) as usize).min(values.len() - 2);
                let (l0, l1) = (values[cell].ln(), values[cell + 1].ln());
                vec![(l1 - l0) / h]
            }
            DensityModel::GeometricMixture { base, target, beta, .. } => {
                let (a, g) = beta.exponents();
                let d = self.dim();
                let mut grad = vec![0.0; d];
                if a > 0.0 {
                    for (gi, bi) in grad.iter_mut().zip(base.score_unchecked(x)) {
                        *gi += a * bi;
                    }
                }
                if g > 0.0 {
                    for (gi, ti) in grad.iter_mut().zip(target.score_unchecked(x)) {
                        *gi += g * ti;
                    }
                }
                grad
            }
            DensityModel::ProductTransition { x0, sigma, times } => {
                let d = x0.len();
                let n = times.len();
                let mut grad = vec![0.0; d * n];
                let mut prev_t = 0.0;
                for j in 0..n {
                    let v = sigma * sigma * (times[j] - prev_t);
                    let prev: &[f64] = if j == 0 { x0 } else { &x[(j - 1) * d..j * d] };
                    for i in 0..d {
                        let diff = (x[j * d + i] - prev[i]) / v;
                        grad[j * d + i] -= diff;
                        if j > 0 {
                            grad[(j - 1) * d + i] += diff;
                        }
                    }
                    prev_t = times[j];
                }
                grad
            }
        }
    }

    /// Draw one sample. Geometric mixtures are not directly samplable; use the
    /// rejection sampler in [`crate::diagnostics`].
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        match self {
            DensityModel::Gaussian { mean, std } => Ok((0..mean.len())
                .map(|i| mean[i] + std.at(i) * rng.sample::<f64, _>(StandardNormal))
                .collect()),
            DensityModel::GaussianMixture { weights, means, stds } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut k = weights.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    acc += w;
                    if u <= acc {
                        k = i;
                        break;
                    }
                }
                Ok((0..means[k].len())
                    .map(|i| means[k][i] + stds[k].at(i) * rng.sample::<f64, _>(StandardNormal))
                    .collect())
            }
            DensityModel::Cauchy { location, scale } => {
                let c = rand_distr::Cauchy::new(*location, *scale)
                    .map_err(|e| SsbError::invalid(e.to_string()))?;
                Ok(vec![c.sample(rng)])
            }
            DensityModel::Grid { lo, hi, values } => {
                // Inverse CDF over node-trapezoid masses, linear within a cell.
                let n = values.len();
                let h = (hi - lo) / (n - 1) as f64;
                let mut cdf = Vec::with_capacity(n);
                let mut acc = 0.0;
                cdf.push(0.0);
                for i in 0..n - 1 {
                    acc += 0.5 * h * (values[i] + values[i + 1]);
                    cdf.push(acc);
                }
                if acc <= 0.0 {
                    return Err(SsbError::DegenerateBatch("grid density has zero mass".into()));
                }
                let u: f64 = rng.gen::<f64>() * acc;
                let cell = match cdf.binary_search_by(|c| c.partial_cmp(&u).unwrap()) {
                    Ok(i) => i.min(n - 2),
                    Err(i) => i.saturating_sub(1).min(n - 2),
                };
                let mass = (cdf[cell + 1] - cdf[cell]).max(1e-300);
                let frac = (u - cdf[cell]) / mass;
                Ok(vec![lo + (cell as f64 + frac) * h])
            }
            DensityModel::ProductTransition { x0, sigma, times } => {
                let d = x0.len();
                let mut out = Vec::with_capacity(d * times.len());
                let mut prev = x0.clone();
                let mut prev_t = 0.0;
                for &t in times {
                    let s = sigma * (t - prev_t).sqrt();
                    for p in prev.iter_mut() {
                        *p += s * rng.sample::<f64, _>(StandardNormal);
                    }
                    out.extend_from_slice(&prev);
                    prev_t = t;
                }
                Ok(out)
            }
            DensityModel::GeometricMixture { .. } => Err(SsbError::Unsupported(
                "geometric mixtures have no direct sampler; use rejection sampling".into(),
            )),
        }
    }

    /// Effective support per axis for quadrature: mean ± 12 scale units, with
    /// geometric mixtures widening each component by its tempered exponent.
    pub fn domain_hint(&self) -> Vec<(f64, f64)> {
        match self {
            DensityModel::Gaussian { mean, std } => (0..mean.len())
                .map(|i| (mean[i] - 12.0 * std.at(i), mean[i] + 12.0 * std.at(i)))
                .collect(),
            DensityModel::GaussianMixture { means, stds, .. } => {
                let d = means[0].len();
                (0..d)
                    .map(|i| {
                        let lo = means
                            .iter()
                            .zip(stds)
                            .map(|(m, s)| m[i] - 12.0 * s.at(i))
                            .fold(f64::INFINITY, f64::min);
                        let hi = means
                            .iter()
                            .zip(stds)
                            .map(|(m, s)| m[i] + 12.0 * s.at(i))
                            .fold(f64::NEG_INFINITY, f64::max);
                        (lo, hi)
                    })
                    .collect()
            }
            DensityModel::Cauchy { location, scale } => {
                vec![(location - 12.0 * scale, location + 12.0 * scale)]
            }
            DensityModel::Grid { lo, hi, .. } => vec![(*lo, *hi)],
            DensityModel::GeometricMixture { base, target, beta, .. } => {
                let (a, g) = beta.exponents();
                // base^a has effective scale scale/√a; cap the widening so a
                // tiny exponent cannot blow up the domain.
                let widen = |hint: Vec<(f64, f64)>, e: f64| -> Vec<(f64, f64)> {
                    let f = (1.0 / e).sqrt().min(100.0);
                    hint.into_iter()
                        .map(|(lo, hi)| {
                            let c = 0.5 * (lo + hi);
                            let hw = 0.5 * (hi - lo) * f;
                            (c - hw, c + hw)
                        })
                        .collect()
                };
                if a == 0.0 {
                    return target.domain_hint();
                }
                if g == 0.0 {
                    return base.domain_hint();
                }
                let hb = widen(base.domain_hint(), a);
                let ht = widen(target.domain_hint(), g);
                hb.into_iter()
                    .zip(ht)
                    .map(|((bl, bh), (tl, th))| (bl.min(tl), bh.max(th)))
                    .collect()
            }
            DensityModel::ProductTransition { x0, sigma, times } => {
                let d = x0.len();
                let mut out = Vec::with_capacity(d * times.len());
                for &t in times {
                    let hw = 12.0 * sigma * t.sqrt();
                    for &c in x0 {
                        out.push((c - hw, c + hw));
                    }
                }
                out
            }
        }
    }

    /// Gaussian convolution `f_sigma(x) = ∫ f(y) φ_sigma(x−y) dy`.
    ///
    /// Exact for Gaussians and Gaussian mixtures (variances add); other
    /// one-dimensional kinds fall back to a tabulated numerical convolution.
    pub fn smooth(&self, sigma: f64, quad: &QuadratureSpec) -> Result<DensityModel> {
        if !(sigma > 0.0) {
            return Err(SsbError::invalid("smoothing bandwidth must be positive"));
        }
        match self {
            DensityModel::Gaussian { mean, std } => Ok(DensityModel::Gaussian {
                mean: mean.clone(),
                std: std.smoothed(sigma),
            }),
            DensityModel::GaussianMixture { weights, means, stds } => Ok(DensityModel::GaussianMixture {
                weights: weights.clone(),
                means: means.clone(),
                stds: stds.iter().map(|s| s.smoothed(sigma)).collect(),
            }),
            _ if self.dim() == 1 => {
                let (lo, hi) = self.domain_hint()[0];
                let (lo, hi) = (lo - 6.0 * sigma, hi + 6.0 * sigma);
                let n = 2001;
                let step = (hi - lo) / (n - 1) as f64;
                let mut values = Vec::with_capacity(n);
                for i in 0..n {
                    let x = lo + i as f64 * step;
                    // φ truncates the integrand to a 12σ window around x.
                    let (ya, yb) = (x - 12.0 * sigma, x + 12.0 * sigma);
                    let l = integrate_log_1d(
                        |y| self.log_density_unchecked(&[y]) + normal_logpdf(x - y, 0.0, sigma),
                        ya,
                        yb,
                        quad,
                    )?;
                    values.push(l.exp());
                }
                Ok(DensityModel::Grid { lo, hi, values })
            }
            _ => Err(SsbError::Unsupported(format!(
                "smoothing not implemented for {}-dimensional non-Gaussian models",
                self.dim()
            ))),
        }
    }

    /// For a geometric mixture: compute `C_beta = ∫ base^{1/(1+β)} target^{β/(1+β)}`
    /// and return a copy with the normalizer cached.
    pub fn with_normalizer(&self, quad: &QuadratureSpec) -> Result<DensityModel> {
        match self {
            DensityModel::GeometricMixture { base, target, beta, .. } => {
                let c = geometric_mixture_normalizer(self, quad)?;
                Ok(DensityModel::GeometricMixture {
                    base: base.clone(),
                    target: target.clone(),
                    beta: *beta,
                    log_c: Some(c.ln()),
                })
            }
            _ => Err(SsbError::Unsupported("with_normalizer applies to geometric mixtures".into())),
        }
    }
}

/// `C_beta = ∫ base(x)^{1/(1+β)} target(x)^{β/(1+β)} dx` for a
/// [`DensityModel::GeometricMixture`] of dimension ≤ 2.
pub fn geometric_mixture_normalizer(gm: &DensityModel, quad: &QuadratureSpec) -> Result<f64> {
    let DensityModel::GeometricMixture { base, target, beta, .. } = gm else {
        return Err(SsbError::Unsupported("normalizer applies to geometric mixtures".into()));
    };
    let (a, g) = beta.exponents();
    let log_f = |x: &[f64]| {
        let mut l = 0.0;
        if a > 0.0 {
            l += a * base.log_density_unchecked(x);
        }
        if g > 0.0 {
            l += g * target.log_density_unchecked(x);
        }
        l
    };
    let hint = gm.domain_hint();
    let log_c = match gm.dim() {
        1 => integrate_log_1d(|x| log_f(&[x]), hint[0].0, hint[0].1, quad)?,
        2 => integrate_log_2d(|x, y| log_f(&[x, y]), [hint[0], hint[1]], quad)?,
        d => {
            return Err(SsbError::Unsupported(format!(
                "normalizer quadrature supports d ≤ 2, got {d}"
            )))
        }
    };
    Ok(log_c.exp())
}
