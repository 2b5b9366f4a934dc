//! Multi-marginal (time-series) soft bridge for Dirac initial laws.
//!
//! The target is a joint density `f_N` on the checkpoint vector
//! `(X_{t_1}, …, X_{t_N})`. The optimal drift is piecewise in time: on
//! `[t_j, t_{j+1})` it is the ratio estimator of the single-marginal case
//! applied to the conditional functional `h_j`, with the already-realized
//! checkpoints frozen into the weight. For `N = 1` everything reduces — to
//! the bit — to the `drift` module's Monte Carlo estimator: the two share
//! sampling order, gradient arithmetic, aggregation, and RNG stream tags.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::density::DensityModel;
use crate::drift::{aggregate, DriftField, McOutcome, OverflowFailure};
use crate::error::SsbError;
use crate::rng::{substream, STREAM_DRIFT};
use crate::sde::{TimeGrid, TrajectoryBatch};
use crate::special::normal_logpdf;
use crate::{Beta, Result};

/// Problem data for the time-series bridge (`b ≡ 0`, Dirac start).
#[derive(Clone)]
pub struct TimeSeriesSpec {
    pub sigma: f64,
    /// Strictly increasing checkpoint times `t_1 < … < t_N = T`.
    pub checkpoints: Vec<f64>,
    pub x0: Vec<f64>,
    /// Joint target `f_N` on `R^{d·N}`, possibly unnormalized.
    pub target: DensityModel,
    pub beta: Beta,
}

impl TimeSeriesSpec {
    pub fn new(
        sigma: f64,
        checkpoints: Vec<f64>,
        x0: Vec<f64>,
        target: DensityModel,
        beta: Beta,
    ) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(SsbError::invalid("sigma must be positive"));
        }
        if checkpoints.is_empty()
            || checkpoints[0] <= 0.0
            || !checkpoints.windows(2).all(|w| w[0] < w[1])
        {
            return Err(SsbError::invalid("checkpoints must be strictly increasing and positive"));
        }
        let d = x0.len();
        if d == 0 || target.dim() != d * checkpoints.len() {
            return Err(SsbError::DimensionMismatch {
                expected: d * checkpoints.len(),
                got: target.dim(),
            });
        }
        Ok(TimeSeriesSpec {
            sigma,
            checkpoints,
            x0,
            target,
            beta,
        })
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn n_checkpoints(&self) -> usize {
        self.checkpoints.len()
    }

    pub fn horizon(&self) -> f64 {
        *self.checkpoints.last().unwrap()
    }

    /// Map each checkpoint to its nearest grid node; errors if any snap
    /// moves a checkpoint by more than Δt/2.
    pub fn snap_checkpoints(&self, grid: &TimeGrid) -> Result<Vec<usize>> {
        if (grid.horizon - self.horizon()).abs() > 1e-12 {
            return Err(SsbError::invalid("grid horizon must equal the last checkpoint"));
        }
        let dt = grid.dt();
        let mut steps = Vec::with_capacity(self.checkpoints.len());
        for &t in &self.checkpoints {
            let k = (t / dt).round() as usize;
            let k = k.min(grid.n_steps);
            if (grid.time(k) - t).abs() > 0.5 * dt + 1e-12 {
                return Err(SsbError::invalid(format!(
                    "checkpoint {t} does not align with the time grid (nearest node {})",
                    grid.time(k)
                )));
            }
            steps.push(k);
        }
        if steps.windows(2).any(|w| w[0] >= w[1]) || steps[0] == 0 {
            return Err(SsbError::invalid("snapped checkpoints collide; refine the time grid"));
        }
        Ok(steps)
    }
}

/// `log p_N(xs | y)`: product of one-step Brownian kernels through the
/// checkpoints, started from `y` at time 0.
pub fn p_n(spec: &TimeSeriesSpec, xs: &[f64], y: &[f64]) -> Result<f64> {
    let d = spec.dim();
    if xs.len() != d * spec.n_checkpoints() || y.len() != d {
        return Err(SsbError::DimensionMismatch {
            expected: d * spec.n_checkpoints(),
            got: xs.len(),
        });
    }
    let mut l = 0.0;
    let mut prev = y;
    let mut prev_t = 0.0;
    for (j, &t) in spec.checkpoints.iter().enumerate() {
        let s = spec.sigma * (t - prev_t).sqrt();
        let cur = &xs[j * d..(j + 1) * d];
        for i in 0..d {
            l += normal_logpdf(cur[i], prev[i], s);
        }
        prev = cur;
        prev_t = t;
    }
    Ok(l)
}

/// Gradient of `log p_N(xs | y)` with respect to `xs`.
fn p_n_score(spec: &TimeSeriesSpec, xs: &[f64], y: &[f64]) -> Vec<f64> {
    let d = spec.dim();
    let n = spec.n_checkpoints();
    let mut grad = vec![0.0; d * n];
    let mut prev_t = 0.0;
    for j in 0..n {
        let v = spec.sigma * spec.sigma * (spec.checkpoints[j] - prev_t);
        let prev: &[f64] = if j == 0 { y } else { &xs[(j - 1) * d..j * d] };
        for i in 0..d {
            let diff = (xs[j * d + i] - prev[i]) / v;
            grad[j * d + i] -= diff;
            if j > 0 {
                grad[(j - 1) * d + i] += diff;
            }
        }
        prev_t = spec.checkpoints[j];
    }
    grad
}

/// `log ρ_N(xs) = (β/(1+β)) · (log f_N(xs) − log p_N(xs | x₀))`.
pub fn rho_n_dirac(spec: &TimeSeriesSpec, xs: &[f64]) -> Result<f64> {
    let g = spec.beta.gamma();
    if g == 0.0 {
        return spec.target.log_density(xs).map(|_| 0.0);
    }
    Ok(g * (spec.target.log_density(xs)? - p_n(spec, xs, &spec.x0)?))
}

/// Scalar MC outcome for `h_j`.
#[derive(Debug, Clone)]
pub enum ScalarOutcome {
    Estimate { value: f64, standard_error: f64 },
    Overflow(OverflowFailure),
}

impl ScalarOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            ScalarOutcome::Estimate { value, .. } => Some(*value),
            ScalarOutcome::Overflow(_) => None,
        }
    }
}

/// `h_j(x, t; history) = E[ρ_N(history, X_{t_{j+1}}, …) | X_t = x]` by
/// forward-sampling the uncontrolled (Brownian) process through the
/// remaining checkpoints. `history` holds the `j` realized checkpoints.
pub fn h_j_mc<R: Rng + ?Sized>(
    spec: &TimeSeriesSpec,
    j: usize,
    x: &[f64],
    t: f64,
    history: &[f64],
    n_mc: usize,
    rng: &mut R,
) -> Result<ScalarOutcome> {
    let d = spec.dim();
    let n = spec.n_checkpoints();
    if j >= n || history.len() != j * d || x.len() != d {
        return Err(SsbError::invalid("interval index / history length mismatch"));
    }
    let t_lo = if j == 0 { 0.0 } else { spec.checkpoints[j - 1] };
    if !(t >= t_lo && t < spec.checkpoints[j]) {
        return Err(SsbError::invalid(format!("time {t} outside interval {j}")));
    }
    if n_mc == 0 {
        return Err(SsbError::invalid("n_mc must be at least 1"));
    }
    let mut log_w = Vec::with_capacity(n_mc);
    let mut xs = vec![0.0; n * d];
    xs[..j * d].copy_from_slice(history);
    for _ in 0..n_mc {
        sample_future(spec, j, x, t, &mut xs, rng);
        log_w.push(rho_n_dirac(spec, &xs)?);
    }
    // stable mean/SE of exp(log_w); failure decided by the linear sum
    let lin_sum: f64 = log_w.iter().map(|l| l.exp()).sum();
    let m = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !lin_sum.is_finite() || !m.is_finite() {
        return Ok(ScalarOutcome::Overflow(OverflowFailure {
            log_denominator: if lin_sum.is_finite() { m } else { lin_sum.ln() },
            n_mc,
        }));
    }
    let shifted: Vec<f64> = log_w.iter().map(|l| (l - m).exp()).collect();
    let mean_a = shifted.iter().sum::<f64>() / n_mc as f64;
    let var_a = shifted.iter().map(|a| (a - mean_a) * (a - mean_a)).sum::<f64>()
        / (n_mc.max(2) - 1) as f64;
    Ok(ScalarOutcome::Estimate {
        value: m.exp() * mean_a,
        standard_error: m.exp() * (var_a / n_mc as f64).sqrt(),
    })
}

/// Fill `xs[j*d..]` with uncontrolled checkpoints sampled forward from
/// `(x, t)`. Draw order (checkpoint-major, coordinate-minor) is shared with
/// the drift estimator for the exact `N = 1` reduction.
fn sample_future<R: Rng + ?Sized>(
    spec: &TimeSeriesSpec,
    j: usize,
    x: &[f64],
    t: f64,
    xs: &mut [f64],
    rng: &mut R,
) {
    let d = spec.dim();
    let mut prev_t = t;
    let mut prev = x.to_vec();
    for k in j..spec.n_checkpoints() {
        let s = spec.sigma * (spec.checkpoints[k] - prev_t).sqrt();
        for i in 0..d {
            let v = prev[i] + s * rng.sample::<f64, _>(StandardNormal);
            xs[k * d + i] = v;
            prev[i] = v;
        }
        prev_t = spec.checkpoints[k];
    }
}

/// Piecewise MC drift of the time-series bridge. Per-path state records the
/// realized checkpoints; by construction the state never contains future
/// checkpoints, so adaptedness holds structurally.
pub struct PiecewiseDrift {
    pub spec: TimeSeriesSpec,
    pub n_mc: usize,
    /// Checkpoint times snapped to the simulation grid.
    snapped: Vec<f64>,
}

impl PiecewiseDrift {
    pub fn new(spec: TimeSeriesSpec, n_mc: usize, grid: &TimeGrid) -> Result<Self> {
        let steps = spec.snap_checkpoints(grid)?;
        let snapped = steps.iter().map(|&k| grid.time(k)).collect();
        if n_mc == 0 {
            return Err(SsbError::invalid("n_mc must be at least 1"));
        }
        Ok(PiecewiseDrift { spec, n_mc, snapped })
    }

    /// Drift at `(x, t)` given the realized history; exposed for tests.
    pub fn drift_at<R: Rng + ?Sized>(
        &self,
        history: &[f64],
        x: &[f64],
        t: f64,
        rng: &mut R,
    ) -> Result<McOutcome> {
        let spec = &self.spec;
        let d = spec.dim();
        let n = spec.n_checkpoints();
        let j = history.len() / d;
        assert!(
            history.len() % d == 0 && j < n,
            "history buffer out of sync with checkpoint schedule"
        );
        let g = spec.beta.gamma();
        let mut xs = vec![0.0; n * d];
        xs[..j * d].copy_from_slice(history);
        let mut log_w = Vec::with_capacity(self.n_mc);
        let mut grads = Vec::with_capacity(self.n_mc);
        for _ in 0..self.n_mc {
            sample_future(spec, j, x, t, &mut xs, rng);
            log_w.push(rho_n_dirac(spec, &xs)?);
            // ∇_x log ρ_N: future checkpoints all shift one-for-one with x
            let sf = spec.target.score(&xs)?;
            let sp = p_n_score(spec, &xs, &spec.x0);
            let mut grad = vec![0.0; d];
            for k in j..n {
                for i in 0..d {
                    grad[i] += g * (sf[k * d + i] - sp[k * d + i]);
                }
            }
            grads.push(grad);
        }
        Ok(aggregate(spec.sigma, &log_w, &grads, d))
    }
}

/// Per-path history of realized checkpoint states.
pub struct History {
    states: Vec<f64>,
    next: usize,
}

impl DriftField for PiecewiseDrift {
    type State = History;

    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn init_state(&self) -> History {
        History {
            states: Vec::with_capacity(self.spec.target.dim()),
            next: 0,
        }
    }

    fn drift(
        &self,
        state: &mut History,
        x: &[f64],
        t: f64,
        master: u64,
        path: u64,
        step: u64,
    ) -> McOutcome {
        let mut rng = substream(master, &[path, step, STREAM_DRIFT]);
        match self.drift_at(&state.states, x, t, &mut rng) {
            Ok(out) => out,
            Err(_) => McOutcome::Overflow(OverflowFailure {
                log_denominator: f64::NAN,
                n_mc: self.n_mc,
            }),
        }
    }

    fn observe(&self, state: &mut History, x: &[f64], t: f64) {
        if state.next < self.snapped.len() && (t - self.snapped[state.next]).abs() < 1e-12 {
            state.states.extend_from_slice(x);
            state.next += 1;
        }
    }
}

/// States at the snapped checkpoint steps for every ok path, in path order.
pub fn checkpoint_samples(batch: &TrajectoryBatch, steps: &[usize]) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for (p, status) in batch.statuses.iter().enumerate() {
        if *status != crate::sde::PathStatus::Ok {
            continue;
        }
        let mut row = Vec::with_capacity(steps.len() * batch.dim);
        for &k in steps {
            row.extend_from_slice(batch.state(p, k));
        }
        out.push(row);
    }
    out
}

/// Wide-format CSV: `path, x1(t_1)…, …, xd(t_N), status`.
pub fn write_checkpoints_csv<W: std::io::Write>(
    batch: &TrajectoryBatch,
    steps: &[usize],
    w: &mut W,
) -> std::io::Result<()> {
    write!(w, "path")?;
    for (j, _) in steps.iter().enumerate() {
        for i in 1..=batch.dim {
            write!(w, ",x{i}_t{}", j + 1)?;
        }
    }
    writeln!(w, ",status")?;
    for (p, status) in batch.statuses.iter().enumerate() {
        write!(w, "{p}")?;
        match status {
            crate::sde::PathStatus::Ok => {
                for &k in steps {
                    for v in batch.state(p, k) {
                        write!(w, ",{v}")?;
                    }
                }
                writeln!(w, ",ok")?;
            }
            crate::sde::PathStatus::Failed { step } => {
                for _ in 0..steps.len() * batch.dim {
                    write!(w, ",")?;
                }
                writeln!(w, ",failed@{step}")?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::{drift_mc, BridgeSpec};
    use crate::rng::STREAM_ORACLE;

    fn two_step_spec(beta: Beta) -> TimeSeriesSpec {
        // Markov-Gaussian joint target via a product-transition chain
        let target = DensityModel::ProductTransition {
            x0: vec![0.5],
            sigma: 0.8,
            times: vec![0.5, 1.0],
        };
        TimeSeriesSpec::new(1.0, vec![0.5, 1.0], vec![0.0], target, beta).unwrap()
    }

    #[test]
    fn p_n_plug_in_value() {
        let spec = TimeSeriesSpec::new(
            1.0,
            vec![0.5, 1.0],
            vec![0.0],
            DensityModel::ProductTransition {
                x0: vec![0.0],
                sigma: 1.0,
                times: vec![0.5, 1.0],
            },
            Beta::Infinite,
        )
        .unwrap();
        // log φ_{√0.5}(0) + log φ_{√0.5}(0) = −ln π
        let l = p_n(&spec, &[0.0, 0.0], &[0.0]).unwrap();
        assert!((l + std::f64::consts::PI.ln()).abs() < 1e-12);
        // N=1 reduction: single kernel
        let one = TimeSeriesSpec::new(
            1.0,
            vec![1.0],
            vec![0.0],
            DensityModel::gaussian1(0.0, 1.0),
            Beta::Infinite,
        )
        .unwrap();
        let l1 = p_n(&one, &[0.7], &[0.2]).unwrap();
        assert!((l1 - normal_logpdf(0.7, 0.2, 1.0)).abs() < 1e-12);
    }

    #[test]
    fn p_n_is_shift_invariant() {
        let spec = two_step_spec(Beta::Infinite);
        let a = p_n(&spec, &[0.3, -0.1], &[0.0]).unwrap();
        let b = p_n(&spec, &[2.3, 1.9], &[2.0]).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn rho_trivial_cases() {
        // β=0 → 0
        let spec = two_step_spec(Beta::new(0.0).unwrap());
        assert_eq!(rho_n_dirac(&spec, &[0.1, 0.4]).unwrap(), 0.0);
        // f_N = p_N(·|x₀) → 0 for all xs
        let matched = TimeSeriesSpec::new(
            1.0,
            vec![0.5, 1.0],
            vec![0.25],
            DensityModel::ProductTransition {
                x0: vec![0.25],
                sigma: 1.0,
                times: vec![0.5, 1.0],
            },
            Beta::Infinite,
        )
        .unwrap();
        for xs in [[0.0, 0.0], [1.0, -0.5]] {
            assert!(rho_n_dirac(&matched, &xs).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn h_of_constant_integrand_is_one() {
        let spec = two_step_spec(Beta::new(0.0).unwrap());
        let mut rng = substream(1, &[STREAM_ORACLE]);
        match h_j_mc(&spec, 0, &[0.0], 0.0, &[], 100, &mut rng).unwrap() {
            ScalarOutcome::Estimate { value, standard_error } => {
                assert_eq!(value, 1.0);
                assert_eq!(standard_error, 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn last_interval_h_matches_single_marginal_oracle() {
        // j = N−1 conditions on the realized first checkpoint; h is then the
        // plain single-marginal conditional expectation of exp(ρ_N).
        let spec = two_step_spec(Beta::new(1.0).unwrap());
        let hist = [0.4];
        let (x, t) = ([0.6], 0.75);
        let mut rng = substream(3, &[STREAM_ORACLE]);
        let est = match h_j_mc(&spec, 1, &x, t, &hist, 40_000, &mut rng).unwrap() {
            ScalarOutcome::Estimate { value, standard_error } => (value, standard_error),
            other => panic!("unexpected {other:?}"),
        };
        // independent oracle with its own draws
        let mut rng2 = substream(4, &[STREAM_ORACLE]);
        let s = spec.sigma * (1.0 - t).sqrt();
        let n = 40_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let y = x[0] + s * rng2.sample::<f64, _>(StandardNormal);
            acc += rho_n_dirac(&spec, &[hist[0], y]).unwrap().exp();
        }
        let oracle = acc / n as f64;
        assert!(
            (est.0 - oracle).abs() < 5.0 * est.1.max(1e-6),
            "h {} vs oracle {oracle}",
            est.0
        );
    }

    #[test]
    fn h_matches_quadrature_oracle_for_gaussian_target() {
        let spec = two_step_spec(Beta::new(2.0).unwrap());
        let mut rng = substream(6, &[STREAM_ORACLE]);
        let (x, t) = ([0.2], 0.1);
        let est = match h_j_mc(&spec, 0, &x, t, &[], 100_000, &mut rng).unwrap() {
            ScalarOutcome::Estimate { value, standard_error } => (value, standard_error),
            other => panic!("unexpected {other:?}"),
        };
        // 2D quadrature of ρ_N against the two-step transition from (x, t)
        let quad = crate::quadrature::QuadratureSpec::with_rel_tol(1e-9);
        let s1 = spec.sigma * (0.5 - t).sqrt();
        let s2 = spec.sigma * 0.5f64.sqrt();
        let l = crate::quadrature::integrate_log_2d(
            |x1, x2| {
                rho_n_dirac(&spec, &[x1, x2]).unwrap()
                    + normal_logpdf(x1, x[0], s1)
                    + normal_logpdf(x2, x1, s2)
            },
            [(-8.0, 8.0), (-8.0, 8.0)],
            &quad,
        )
        .unwrap();
        let oracle = l.exp();
        assert!(
            (est.0 - oracle).abs() < 4.0 * est.1,
            "h {} ± {} vs oracle {oracle}",
            est.0,
            est.1
        );
    }

    #[test]
    fn n_equals_one_reduces_bitwise_to_drift_mc() {
        let target = DensityModel::gaussian1(1.5, 0.9);
        let bridge = BridgeSpec::new(1.0, 1.0, vec![0.0], target.clone(), Beta::new(3.0).unwrap()).unwrap();
        let ts = TimeSeriesSpec::new(1.0, vec![1.0], vec![0.0], target, Beta::new(3.0).unwrap()).unwrap();
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let pw = PiecewiseDrift::new(ts, 64, &grid).unwrap();
        for (x, t) in [([0.0], 0.0), ([0.7], 0.5), ([-1.2], 0.875)] {
            let mut r1 = substream(99, &[0, 3, STREAM_DRIFT]);
            let mut r2 = substream(99, &[0, 3, STREAM_DRIFT]);
            let a = drift_mc(&bridge, &x, t, 64, &mut r1).unwrap();
            let b = pw.drift_at(&[], &x, t, &mut r2).unwrap();
            let (ea, eb) = (a.estimate().unwrap(), b.estimate().unwrap());
            assert_eq!(ea.value[0].to_bits(), eb.value[0].to_bits());
            assert_eq!(ea.standard_error[0].to_bits(), eb.standard_error[0].to_bits());
        }
    }

    #[test]
    fn beta_zero_piecewise_drift_vanishes() {
        let spec = two_step_spec(Beta::new(0.0).unwrap());
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let pw = PiecewiseDrift::new(spec, 32, &grid).unwrap();
        let mut rng = substream(7, &[STREAM_ORACLE]);
        let out = pw.drift_at(&[], &[0.3], 0.2, &mut rng).unwrap();
        assert_eq!(out.estimate().unwrap().value[0], 0.0);
    }

    #[test]
    fn snapping_rejects_misaligned_checkpoints() {
        let spec = TimeSeriesSpec::new(
            1.0,
            vec![0.2, 1.0],
            vec![0.0],
            DensityModel::ProductTransition {
                x0: vec![0.0],
                sigma: 1.0,
                times: vec![0.2, 1.0],
            },
            Beta::Infinite,
        )
        .unwrap();
        // dt = 0.5 snaps 0.2 onto t = 0, colliding with the start node
        let coarse = TimeGrid::new(1.0, 2).unwrap();
        assert!(spec.snap_checkpoints(&coarse).is_err());
        let fine = TimeGrid::new(1.0, 100).unwrap();
        assert_eq!(spec.snap_checkpoints(&fine).unwrap(), vec![20, 100]);
    }
}
