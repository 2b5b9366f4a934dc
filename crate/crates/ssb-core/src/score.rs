//! Importance-weighted denoising score matching for geometric mixtures.
//!
//! The score model is deliberately linear in its features (bias, linear
//! term, RBF lattice) with an independent weight block per noise level:
//! the training objective is then a weighted least-squares problem with
//! exact gradients, so every training claim can be checked against the
//! normal-equations solution. Noise levels are conditioned by a discrete
//! ladder; evaluation interpolates between bracketing levels linearly in
//! σ̃².

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::beta::Beta;
use crate::error::SsbError;
use crate::rng::{substream, STREAM_INIT, STREAM_NOISE};
use crate::sde::{FailureReport, InitialLaw, PathStatus, TimeGrid};
use crate::special::{log_sum_exp, solve_linear};
use crate::Result;

/// Linear-in-features score model `s_θ(x, σ̃) ≈ ∇log f*_σ̃(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreModel {
    pub dim: usize,
    /// RBF centers (lattice over the working domain).
    pub centers: Vec<Vec<f64>>,
    /// Shared RBF bandwidth.
    pub bandwidth: f64,
    /// Ascending noise ladder σ̃₁ < … < σ̃_L.
    pub levels: Vec<f64>,
    /// Per level: row-major `[n_features × dim]` weights.
    pub weights: Vec<Vec<f64>>,
}

/// Uniform lattice of RBF centers, `per_axis^dim` points (dim ≤ 2).
pub fn lattice_centers(lo: f64, hi: f64, per_axis: usize, dim: usize) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = (0..per_axis)
        .map(|i| lo + (hi - lo) * i as f64 / (per_axis - 1) as f64)
        .collect();
    match dim {
        1 => axis.iter().map(|x| vec![*x]).collect(),
        2 => axis
            .iter()
            .flat_map(|x| axis.iter().map(move |y| vec![*x, *y]))
            .collect(),
        _ => panic!("center lattice implemented for dim ≤ 2"),
    }
}

/// `L` geometric noise levels spanning `[lo, hi]`.
pub fn geometric_levels(lo: f64, hi: f64, l: usize) -> Vec<f64> {
    (0..l)
        .map(|i| lo * (hi / lo).powf(i as f64 / (l - 1) as f64))
        .collect()
}

impl ScoreModel {
    pub fn new(dim: usize, centers: Vec<Vec<f64>>, bandwidth: f64, levels: Vec<f64>) -> Result<Self> {
        if !(bandwidth > 0.0) {
            return Err(SsbError::invalid("bandwidth must be positive"));
        }
        if levels.is_empty() || !levels.windows(2).all(|w| w[0] < w[1]) || levels[0] <= 0.0 {
            return Err(SsbError::invalid("noise levels must be positive and ascending"));
        }
        if centers.iter().any(|c| c.len() != dim) {
            return Err(SsbError::invalid("center dimension mismatch"));
        }
        let n_feat = 1 + dim + centers.len();
        let weights = vec![vec![0.0; n_feat * dim]; levels.len()];
        Ok(ScoreModel {
            dim,
            centers,
            bandwidth,
            levels,
            weights,
        })
    }

    pub fn n_features(&self) -> usize {
        1 + self.dim + self.centers.len()
    }

    /// Feature vector `[1, x, rbf(x; c_k)]`.
    pub fn features(&self, x: &[f64]) -> Vec<f64> {
        let mut phi = Vec::with_capacity(self.n_features());
        phi.push(1.0);
        phi.extend_from_slice(x);
        let b2 = 2.0 * self.bandwidth * self.bandwidth;
        for c in &self.centers {
            let d2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            phi.push((-d2 / b2).exp());
        }
        phi
    }

    /// Score at an exact ladder level (no interpolation) — the quantity the
    /// training loss regresses.
    pub fn score_at_level(&self, x: &[f64], level: usize) -> Vec<f64> {
        let phi = self.features(x);
        let w = &self.weights[level];
        let d = self.dim;
        (0..d)
            .map(|i| phi.iter().enumerate().map(|(f, p)| p * w[f * d + i]).sum())
            .collect()
    }

    /// Score at an arbitrary noise scale: clamp outside the ladder,
    /// interpolate linearly in σ̃² between bracketing levels inside.
    pub fn score(&self, x: &[f64], sigma_t: f64) -> Vec<f64> {
        let l = self.levels.len();
        if sigma_t <= self.levels[0] {
            return self.score_at_level(x, 0);
        }
        if sigma_t >= self.levels[l - 1] {
            return self.score_at_level(x, l - 1);
        }
        let hi = self.levels.partition_point(|s| *s < sigma_t).min(l - 1);
        let lo = hi - 1;
        let (v_lo, v_hi) = (self.levels[lo].powi(2), self.levels[hi].powi(2));
        let w = (sigma_t * sigma_t - v_lo) / (v_hi - v_lo);
        let a = self.score_at_level(x, lo);
        let b = self.score_at_level(x, hi);
        a.iter().zip(&b).map(|(x, y)| (1.0 - w) * x + w * y).collect()
    }
}

/// Loss and exact weight-gradient of one denoising term at a fixed noisy
/// point: `‖s_θ(x̃, σ̃_l) + (x̃ − x)/σ̃_l²‖²`. The gradient is for the
/// level-`l` weight block, same layout as `model.weights[l]`.
pub fn dsm_term(model: &ScoreModel, level: usize, x: &[f64], x_tilde: &[f64]) -> (f64, Vec<f64>) {
    let d = model.dim;
    let s2 = model.levels[level] * model.levels[level];
    let s = model.score_at_level(x_tilde, level);
    let phi = model.features(x_tilde);
    let residual: Vec<f64> = (0..d).map(|i| s[i] + (x_tilde[i] - x[i]) / s2).collect();
    let loss: f64 = residual.iter().map(|r| r * r).sum();
    let mut grad = vec![0.0; phi.len() * d];
    for (f, p) in phi.iter().enumerate() {
        for (i, r) in residual.iter().enumerate() {
            grad[f * d + i] = 2.0 * p * r;
        }
    }
    (loss, grad)
}

/// Single-draw DSM loss: samples `x̃ = x + σ̃_l ε` and evaluates
/// [`dsm_term`].
pub fn dsm_loss<R: Rng + ?Sized>(
    model: &ScoreModel,
    level: usize,
    x: &[f64],
    rng: &mut R,
) -> (f64, Vec<f64>) {
    let sig = model.levels[level];
    let x_tilde: Vec<f64> = x
        .iter()
        .map(|v| v + sig * rng.sample::<f64, _>(StandardNormal))
        .collect();
    dsm_term(model, level, x, &x_tilde)
}

/// One importance-weighted batch: points drawn from the auxiliary q̃, with
/// per-point log weights `(1/(1+β))·log(f_ref/q̃) + (β/(1+β))·log(f_obj/q̃)`,
/// self-normalized in log space. Returns the weighted loss and per-level
/// gradients.
pub fn weighted_loss<R: Rng + ?Sized>(
    model: &ScoreModel,
    batch: &[Vec<f64>],
    log_ratio_ref: impl Fn(&[f64]) -> f64,
    log_ratio_obj: impl Fn(&[f64]) -> f64,
    beta: Beta,
    rng: &mut R,
) -> Result<(f64, Vec<Vec<f64>>)> {
    if batch.is_empty() {
        return Err(SsbError::DegenerateBatch("empty batch".into()));
    }
    let (a, g) = beta.exponents();
    let log_w: Vec<f64> = batch
        .iter()
        .map(|x| {
            let mut l = 0.0;
            if a > 0.0 {
                l += a * log_ratio_ref(x);
            }
            if g > 0.0 {
                l += g * log_ratio_obj(x);
            }
            l
        })
        .collect();
    let lse = log_sum_exp(&log_w);
    if !lse.is_finite() {
        return Err(SsbError::DegenerateBatch(format!(
            "importance weights degenerate (log-sum {lse})"
        )));
    }
    let d = model.dim;
    let n_block = model.n_features() * d;
    let mut grads = vec![vec![0.0; n_block]; model.levels.len()];
    let mut loss = 0.0;
    for (x, lw) in batch.iter().zip(&log_w) {
        let wt = (lw - lse).exp();
        let level = rng.gen_range(0..model.levels.len());
        let (term, grad) = dsm_loss(model, level, x, rng);
        loss += wt * term;
        for (acc, gv) in grads[level].iter_mut().zip(&grad) {
            *acc += wt * gv;
        }
    }
    Ok((loss, grads))
}

/// Training configuration; `q̃` is whichever distribution `data` was drawn
/// from, described to the loss through the two log-ratio evaluators.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub step_size: f64,
    pub iterations: usize,
    pub seed: u64,
}

/// Plain gradient descent on the weighted DSM objective; deterministic
/// given the seed. Returns the loss trace.
pub fn train(
    model: &mut ScoreModel,
    cfg: &TrainConfig,
    data: &[Vec<f64>],
    log_ratio_ref: impl Fn(&[f64]) -> f64,
    log_ratio_obj: impl Fn(&[f64]) -> f64,
    beta: Beta,
) -> Result<Vec<f64>> {
    if data.is_empty() || cfg.batch_size == 0 {
        return Err(SsbError::Training("empty training data or batch".into()));
    }
    let mut rng = substream(cfg.seed, &[STREAM_INIT]);
    let mut trace = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let batch: Vec<Vec<f64>> = data
            .choose_multiple(&mut rng, cfg.batch_size.min(data.len()))
            .cloned()
            .collect();
        let (loss, grads) = weighted_loss(model, &batch, &log_ratio_ref, &log_ratio_obj, beta, &mut rng)?;
        if !loss.is_finite() {
            return Err(SsbError::Training(format!(
                "loss diverged at iteration {it}; trace so far {trace:?}"
            )));
        }
        for (w, g) in model.weights.iter_mut().zip(&grads) {
            for (wi, gi) in w.iter_mut().zip(g) {
                *wi -= cfg.step_size * gi;
            }
        }
        trace.push(loss);
    }
    Ok(trace)
}

/// Exact minimizer of the empirical weighted DSM objective at one level:
/// solves the normal equations `(Σ w φφᵀ) W = −Σ w φ ((x̃−x)/σ̃²)ᵀ` with the
/// given noisy replicas. Oracle for gradient-descent training.
pub fn fit_least_squares_single_level(
    model: &mut ScoreModel,
    level: usize,
    pairs: &[(Vec<f64>, Vec<f64>)], // (clean x, noisy x̃)
    log_weights: &[f64],
) -> Result<()> {
    if pairs.is_empty() || pairs.len() != log_weights.len() {
        return Err(SsbError::Training("need matching pairs and weights".into()));
    }
    let nf = model.n_features();
    let d = model.dim;
    let s2 = model.levels[level] * model.levels[level];
    let lse = log_sum_exp(log_weights);
    if !lse.is_finite() {
        return Err(SsbError::DegenerateBatch("degenerate weights".into()));
    }
    let mut gram = vec![0.0; nf * nf];
    let mut rhs = vec![vec![0.0; nf]; d];
    for ((x, xt), lw) in pairs.iter().zip(log_weights) {
        let w = (lw - lse).exp();
        let phi = model.features(xt);
        for f1 in 0..nf {
            for f2 in 0..nf {
                gram[f1 * nf + f2] += w * phi[f1] * phi[f2];
            }
            for i in 0..d {
                rhs[i][f1] -= w * phi[f1] * (xt[i] - x[i]) / s2;
            }
        }
    }
    // tiny ridge for numerical rank safety
    for f in 0..nf {
        gram[f * nf + f] += 1e-10;
    }
    for i in 0..d {
        let sol = solve_linear(gram.clone(), rhs[i].clone())
            .ok_or_else(|| SsbError::Training("singular normal equations".into()))?;
        for f in 0..nf {
            model.weights[level][f * d + i] = sol[f];
        }
    }
    Ok(())
}

/// Result of a Langevin initialization run.
#[derive(Debug, Clone)]
pub struct LangevinResult {
    pub samples: Vec<Vec<f64>>,
    pub n_failed: usize,
}

/// Langevin dynamics targeting the density whose score is supplied:
/// `X ← X + σ² s(X) Δt + σ√(2Δt) ξ` (the noise carries the √2 that makes
/// the score's density invariant). Chains start from `N(0, σ² I)`.
pub fn langevin_init(
    score: impl Fn(&[f64]) -> Vec<f64> + Sync,
    dim: usize,
    sigma: f64,
    n_samples: usize,
    n_steps: usize,
    step: f64,
    seed: u64,
) -> Result<LangevinResult> {
    if !(step > 0.0) || n_steps == 0 || n_samples == 0 {
        return Err(SsbError::invalid("langevin needs positive step, steps, samples"));
    }
    let mut samples = Vec::with_capacity(n_samples);
    let mut n_failed = 0usize;
    let s2 = sigma * sigma;
    let noise_scale = sigma * (2.0 * step).sqrt();
    for chain in 0..n_samples {
        let mut rng = substream(seed, &[chain as u64, STREAM_NOISE]);
        let mut x: Vec<f64> = (0..dim)
            .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut ok = true;
        for _ in 0..n_steps {
            let s = score(&x);
            for i in 0..dim {
                x[i] += s2 * s[i] * step + noise_scale * rng.sample::<f64, _>(StandardNormal);
                ok &= x[i].is_finite();
            }
            if !ok {
                break;
            }
        }
        if ok {
            samples.push(x);
        } else {
            n_failed += 1;
        }
    }
    if samples.is_empty() {
        return Err(SsbError::DegenerateBatch("all langevin chains failed".into()));
    }
    Ok(LangevinResult { samples, n_failed })
}

/// Initialization of the reverse bridge.
pub enum ReverseInit {
    /// Langevin at the top noise level σ√T.
    Langevin { n_steps: usize, step: f64 },
    /// Gaussian start `N(mean, std² I)`.
    Gaussian { mean: Vec<f64>, std: f64 },
}

/// Simulate the reverse bridge `dX* = σ²∇log f*_{σ√(T−t)}(X*)dt + σ dW`;
/// endpoints approximate the un-smoothed target. `score(x, σ̃)` supplies
/// the (trained or exact) smoothed score.
#[allow(clippy::too_many_arguments)]
pub fn reverse_bridge_sample(
    score: impl Fn(&[f64], f64) -> Vec<f64> + Sync,
    dim: usize,
    sigma: f64,
    horizon: f64,
    n_steps: usize,
    n_paths: usize,
    init: ReverseInit,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, FailureReport)> {
    let grid = TimeGrid::new(horizon, n_steps)?;
    let top = sigma * horizon.sqrt();
    let initial = match init {
        ReverseInit::Gaussian { mean, std } => {
            InitialLaw::Density(crate::density::DensityModel::gaussian_iso(mean, std))
        }
        ReverseInit::Langevin { n_steps, step } => {
            let lv = langevin_init(
                |x| score(x, top),
                dim,
                sigma,
                n_paths,
                n_steps,
                step,
                seed ^ 0x4c414e47, // distinct stream family for the warm-up
            )?;
            InitialLaw::Samples(lv.samples)
        }
    };
    let drift = crate::drift::FnDrift {
        dim,
        f: |x: &[f64], t: f64| {
            let level = sigma * (horizon - t).max(0.0).sqrt();
            score(x, level).iter().map(|s| sigma * sigma * s).collect()
        },
    };
    let batch = crate::sde::simulate_ensemble(
        dim,
        sigma,
        &initial,
        |_x, _t| vec![0.0; dim],
        &drift,
        &grid,
        n_paths,
        seed,
    )?;
    let (endpoints, report) = batch.endpoint_distribution();
    let _ = PathStatus::Ok; // silence unused import when cfg(test) is off
    Ok((endpoints, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DensityModel;
    use crate::diagnostics::{ks_one_sample, ks_two_sample};
    use crate::rng::STREAM_ORACLE;
    use crate::special::normal_cdf;

    fn desk_model() -> ScoreModel {
        ScoreModel::new(
            1,
            lattice_centers(-3.0, 5.0, 9, 1),
            1.0,
            geometric_levels(0.1, 1.0, 10),
        )
        .unwrap()
    }

    #[test]
    fn perfect_denoiser_has_zero_loss() {
        let mut model = desk_model();
        let (x, xt, level) = ([0.3], [0.9], 4usize);
        // force the model output to −(x̃−x)/σ̃² at x̃ using only the bias
        let s2 = model.levels[level] * model.levels[level];
        model.weights[level][0] = -(xt[0] - x[0]) / s2;
        let (loss, _) = dsm_term(&model, level, &x, &xt);
        assert!(loss < 1e-20, "loss {loss}");
    }

    #[test]
    fn zero_model_loss_is_inverse_noise_variance() {
        let model = desk_model();
        let level = 7;
        let s2 = model.levels[level] * model.levels[level];
        let mut rng = substream(5, &[STREAM_ORACLE]);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| dsm_loss(&model, level, &[0.4], &mut rng).0)
            .sum::<f64>()
            / n as f64;
        let expected = 1.0 / s2;
        assert!(
            (mean - expected).abs() / expected < 0.03,
            "mean {mean} vs {expected}"
        );
    }

    #[test]
    fn dsm_gradient_matches_finite_differences() {
        let mut model = desk_model();
        let mut rng = substream(6, &[STREAM_ORACLE]);
        // random nonzero weights
        for w in model.weights.iter_mut().flatten() {
            *w = rng.gen_range(-0.5..0.5);
        }
        let (x, xt, level) = ([0.2], [0.55], 3usize);
        let (_, grad) = dsm_term(&model, level, &x, &xt);
        let h = 1e-6;
        for f in 0..model.n_features() {
            let orig = model.weights[level][f];
            model.weights[level][f] = orig + h;
            let lp = dsm_term(&model, level, &x, &xt).0;
            model.weights[level][f] = orig - h;
            let lm = dsm_term(&model, level, &x, &xt).0;
            model.weights[level][f] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let denom = fd.abs().max(1e-6);
            assert!(
                (grad[f] - fd).abs() / denom < 1e-5,
                "grad {} vs fd {fd} at feature {f}",
                grad[f]
            );
        }
    }

    #[test]
    fn weight_telescoping_identity() {
        // q̃ = μ_ref: (1/(1+β))·log(f_ref/q̃) + (β/(1+β))·log(f_obj/q̃)
        // collapses to (β/(1+β))·log(f_obj/f_ref)
        let f_ref = DensityModel::gaussian1(0.0, 1.0);
        let f_obj = DensityModel::gaussian1(2.0, 1.0);
        let beta = Beta::new(3.0).unwrap();
        let (_a, g) = beta.exponents();
        for x in [-1.0, 0.3, 2.5] {
            let lr_ref = 0.0; // log f_ref/q̃ with q̃ = f_ref
            let lr_obj =
                f_obj.log_density(&[x]).unwrap() - f_ref.log_density(&[x]).unwrap();
            let combined = _a * lr_ref + g * lr_obj;
            assert!((combined - g * lr_obj).abs() < 1e-12);
        }
    }

    #[test]
    fn beta_zero_weights_are_constant() {
        let model = desk_model();
        let batch: Vec<Vec<f64>> = vec![vec![0.1], vec![0.7], vec![-0.3], vec![1.4]];
        let mut r1 = substream(9, &[STREAM_ORACLE]);
        let mut r2 = substream(9, &[STREAM_ORACLE]);
        // β=0, q̃=μ_ref: weights 1/n each ⇒ equals the unweighted average
        let (wl, _) = weighted_loss(
            &model,
            &batch,
            |_| 0.0,
            |x| x[0], // ignored at β=0
            Beta::new(0.0).unwrap(),
            &mut r1,
        )
        .unwrap();
        let mut plain = 0.0;
        for x in &batch {
            let level = r2.gen_range(0..model.levels.len());
            plain += dsm_loss(&model, level, x, &mut r2).0 / batch.len() as f64;
        }
        assert!((wl - plain).abs() < 1e-12);
    }

    #[test]
    fn gradient_descent_matches_least_squares_single_level() {
        let f_ref = DensityModel::gaussian1(0.0, 1.0);
        let mut rng = substream(11, &[STREAM_ORACLE]);
        let data: Vec<Vec<f64>> = (0..4000).map(|_| f_ref.sample(&mut rng).unwrap()).collect();
        // single level, purely linear features (no RBFs) ⇒ the minimizer is
        // well conditioned and GD converges to it in weight space
        let mut gd = ScoreModel::new(1, Vec::new(), 1.2, vec![0.5]).unwrap();
        let mut ls = gd.clone();
        // shared noisy replicas for the closed form
        let mut noise_rng = substream(12, &[STREAM_ORACLE]);
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = data
            .iter()
            .map(|x| {
                let xt = vec![x[0] + 0.5 * noise_rng.sample::<f64, _>(StandardNormal)];
                (x.clone(), xt)
            })
            .collect();
        let lw = vec![0.0; pairs.len()];
        fit_least_squares_single_level(&mut ls, 0, &pairs, &lw).unwrap();
        // full-batch GD on the same fixed replicas (quadratic ⇒ converges)
        for _ in 0..6000 {
            let mut grad = vec![0.0; gd.n_features()];
            for (x, xt) in &pairs {
                let (_, g) = dsm_term(&gd, 0, x, xt);
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b / pairs.len() as f64;
                }
            }
            for (w, g) in gd.weights[0].iter_mut().zip(&grad) {
                *w -= 0.05 * g;
            }
        }
        for (a, b) in gd.weights[0].iter().zip(&ls.weights[0]) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn loss_trace_is_nonincreasing_on_fixed_batch() {
        // convexity sanity: full-batch GD with fixed replicas
        let mut model = ScoreModel::new(1, lattice_centers(-2.0, 2.0, 3, 1), 1.0, vec![0.4]).unwrap();
        let mut rng = substream(13, &[STREAM_ORACLE]);
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..500)
            .map(|_| {
                let x = rng.gen_range(-1.0..1.0);
                (vec![x], vec![x + 0.4 * rng.sample::<f64, _>(StandardNormal)])
            })
            .collect();
        let batch_loss = |m: &ScoreModel| -> f64 {
            pairs.iter().map(|(x, xt)| dsm_term(m, 0, x, xt).0).sum::<f64>() / pairs.len() as f64
        };
        let mut last = batch_loss(&model);
        for _ in 0..200 {
            let mut grad = vec![0.0; model.n_features()];
            for (x, xt) in &pairs {
                let (_, g) = dsm_term(&model, 0, x, xt);
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b / pairs.len() as f64;
                }
            }
            for (w, g) in model.weights[0].iter_mut().zip(&grad) {
                *w -= 0.02 * g;
            }
            let cur = batch_loss(&model);
            assert!(cur <= last + 1e-12, "loss increased {last} -> {cur}");
            last = cur;
        }
    }

    #[test]
    fn langevin_reaches_the_stationary_gaussian() {
        // score of N(0,1)
        let out = langevin_init(|x| vec![-x[0]], 1, 1.0, 10_000, 400, 0.01, 77).unwrap();
        assert_eq!(out.n_failed, 0);
        let n = out.samples.len() as f64;
        let mean: f64 = out.samples.iter().map(|x| x[0]).sum::<f64>() / n;
        let var: f64 = out.samples.iter().map(|x| (x[0] - mean) * (x[0] - mean)).sum::<f64>() / (n - 1.0);
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
        // geometric mixture of same-covariance Gaussians: mean a·m₁+(1−a)m₂
        let gm = DensityModel::geometric_mixture(
            DensityModel::gaussian1(0.0, 1.0),
            DensityModel::gaussian1(2.0, 1.0),
            Beta::new(1.0).unwrap(),
        );
        let out = langevin_init(|x| gm.score(x).unwrap(), 1, 1.0, 10_000, 400, 0.01, 78).unwrap();
        let m: f64 = out.samples.iter().map(|x| x[0]).sum::<f64>() / out.samples.len() as f64;
        let se = (1.0 / out.samples.len() as f64).sqrt();
        assert!((m - 1.0).abs() < 3.0 * se + 0.02, "mean {m}");
    }

    #[test]
    fn zero_score_langevin_is_brownian() {
        let steps = 50;
        let step = 0.02;
        let out = langevin_init(|x| vec![0.0; x.len()], 1, 1.0, 20_000, steps, step, 5).unwrap();
        let n = out.samples.len() as f64;
        let var: f64 = out.samples.iter().map(|x| x[0] * x[0]).sum::<f64>() / n;
        // start var σ² = 1 plus 2σ²·elapsed (the √2-noise convention)
        let expected = 1.0 + 2.0 * steps as f64 * step;
        assert!((var - expected).abs() / expected < 0.05, "var {var} vs {expected}");
    }

    #[test]
    fn exact_score_reverse_bridge_hits_the_target() {
        // desk case: μ* = N(1,1); smoothed score −(x−1)/(1+σ̃²)
        let (endpoints, report) = reverse_bridge_sample(
            |x, s| vec![-(x[0] - 1.0) / (1.0 + s * s)],
            1,
            1.0,
            1.0,
            200,
            10_000,
            ReverseInit::Gaussian {
                mean: vec![1.0],
                std: 2f64.sqrt(),
            },
            31,
        )
        .unwrap();
        assert_eq!(report.n_failed, 0);
        let xs: Vec<f64> = endpoints.iter().map(|x| x[0]).collect();
        let d = ks_one_sample(&xs, |x| normal_cdf(x, 1.0, 1.0)).unwrap();
        assert!(d < 0.02, "KS {d}");
    }

    #[test]
    fn trained_desk_model_samples_the_geometric_mixture() {
        let f_ref = DensityModel::gaussian1(0.0, 1.0);
        let f_obj = DensityModel::gaussian1(2.0, 1.0);
        let beta = Beta::new(1.0).unwrap();
        let mut rng = substream(41, &[STREAM_ORACLE]);
        let data: Vec<Vec<f64>> = (0..20_000).map(|_| f_ref.sample(&mut rng).unwrap()).collect();
        let mut model = desk_model();
        let cfg = TrainConfig {
            batch_size: 256,
            step_size: 0.02,
            iterations: 3000,
            seed: 42,
        };
        let trace = train(
            &mut model,
            &cfg,
            &data,
            |_| 0.0,
            |x| f_obj.log_density(x).unwrap() - f_ref.log_density(x).unwrap(),
            beta,
        )
        .unwrap();
        assert!(trace.iter().all(|l| l.is_finite()));
        let (endpoints, _) = reverse_bridge_sample(
            |x, s| model.score(x, s),
            1,
            1.0,
            1.0,
            200,
            10_000,
            ReverseInit::Gaussian {
                mean: vec![1.0],
                std: 2f64.sqrt(),
            },
            43,
        )
        .unwrap();
        let xs: Vec<f64> = endpoints.iter().map(|x| x[0]).collect();
        let mut oracle_rng = substream(44, &[STREAM_ORACLE]);
        let target = DensityModel::gaussian1(1.0, 1.0);
        let oracle: Vec<f64> = (0..10_000)
            .map(|_| target.sample(&mut oracle_rng).unwrap()[0])
            .collect();
        let d = ks_two_sample(&xs, &oracle).unwrap();
        assert!(d < 0.08, "KS {d}");
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - 1.0).abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn model_serializes_losslessly() {
        let mut model = desk_model();
        model.weights[0][3] = 0.125;
        let s = serde_json::to_string(&model).unwrap();
        assert_eq!(model, serde_json::from_str::<ScoreModel>(&s).unwrap());
    }
}
