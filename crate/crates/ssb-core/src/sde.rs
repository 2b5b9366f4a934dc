//! Euler–Maruyama ensemble integrator for `dX = [b + u] dt + σ dW`.
//!
//! Paths are independent and simulated in parallel; every random draw comes
//! from a counter-derived substream keyed by `(seed, path, ...)`, so a batch
//! is bit-identical for any thread count. A path that hits an
//! [`OverflowFailure`] or a non-finite state is marked failed at that step
//! and carries no further states — failures are data, mirroring how failed
//! heavy-tail runs are discarded and counted.

use std::collections::BTreeMap;
use std::io::{Read as IoRead, Write as IoWrite};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::DensityModel;
use crate::drift::{BridgeSpec, DriftField, McOutcome};
use crate::error::SsbError;
use crate::rng::{substream, STREAM_INIT, STREAM_NOISE};
use crate::Result;

/// Uniform time grid on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() || n_steps == 0 {
            return Err(SsbError::invalid("time grid needs positive horizon and at least one step"));
        }
        Ok(TimeGrid { horizon, n_steps })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    /// Node `k`, with the last node equal to `horizon` exactly.
    pub fn time(&self, k: usize) -> f64 {
        if k >= self.n_steps {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PathStatus {
    Ok,
    Failed { step: usize },
}

/// Initial law of the ensemble.
#[derive(Clone)]
pub enum InitialLaw {
    Dirac(Vec<f64>),
    Density(DensityModel),
    /// Pre-drawn start points, path `i` starting from entry `i % len`.
    Samples(Vec<Vec<f64>>),
}

/// Simulated ensemble. Path `i` stores `n_steps + 1` states of dimension `d`
/// flattened row-major; for a failed path only states up to (and including)
/// the failure step are meaningful, the rest are NaN.
#[derive(Debug, Clone)]
pub struct TrajectoryBatch {
    pub grid: TimeGrid,
    pub dim: usize,
    pub seed: u64,
    pub paths: Vec<Vec<f64>>,
    pub statuses: Vec<PathStatus>,
}

/// Endpoint failure accounting for a batch.
#[derive(Debug, Clone, Serialize)]
pub struct FailureReport {
    pub n_total: usize,
    pub n_failed: usize,
    /// failure step → count
    pub failure_steps: BTreeMap<usize, usize>,
}

impl TrajectoryBatch {
    pub fn state(&self, path: usize, step: usize) -> &[f64] {
        &self.paths[path][step * self.dim..(step + 1) * self.dim]
    }

    /// Endpoints of ok paths plus a failure report. An all-failed batch
    /// yields an empty sample set, not an error.
    pub fn endpoint_distribution(&self) -> (Vec<Vec<f64>>, FailureReport) {
        let mut endpoints = Vec::new();
        let mut failure_steps = BTreeMap::new();
        for (p, status) in self.statuses.iter().enumerate() {
            match status {
                PathStatus::Ok => endpoints.push(self.state(p, self.grid.n_steps).to_vec()),
                PathStatus::Failed { step } => {
                    *failure_steps.entry(*step).or_insert(0usize) += 1;
                }
            }
        }
        let n_failed = self.statuses.len() - endpoints.len();
        (
            endpoints,
            FailureReport {
                n_total: self.statuses.len(),
                n_failed,
                failure_steps,
            },
        )
    }

    /// Long-format CSV: `path,step,t,x_1..x_d,status`.
    pub fn write_csv<W: IoWrite>(&self, w: &mut W) -> std::io::Result<()> {
        write!(w, "path,step,t")?;
        for i in 1..=self.dim {
            write!(w, ",x_{i}")?;
        }
        writeln!(w, ",status")?;
        for (p, status) in self.statuses.iter().enumerate() {
            let last = match status {
                PathStatus::Ok => self.grid.n_steps,
                PathStatus::Failed { step } => *step,
            };
            for k in 0..=last {
                write!(w, "{p},{k},{}", self.grid.time(k))?;
                for v in self.state(p, k) {
                    write!(w, ",{v}")?;
                }
                match status {
                    PathStatus::Ok => writeln!(w, ",ok")?,
                    PathStatus::Failed { step } if k == *step => writeln!(w, ",failed")?,
                    PathStatus::Failed { .. } => writeln!(w, ",ok")?,
                }
            }
        }
        Ok(())
    }

    /// Compact binary dump: magic `SSBTRAJ1`, then little-endian u64s
    /// `n_paths, n_steps, dim, seed`, horizon as f64, per-path status words
    /// (`u64::MAX` = ok, else failure step), then all states as f64.
    pub fn write_binary<W: IoWrite>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(b"SSBTRAJ1")?;
        for v in [
            self.paths.len() as u64,
            self.grid.n_steps as u64,
            self.dim as u64,
            self.seed,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.grid.horizon.to_le_bytes())?;
        for s in &self.statuses {
            let word = match s {
                PathStatus::Ok => u64::MAX,
                PathStatus::Failed { step } => *step as u64,
            };
            w.write_all(&word.to_le_bytes())?;
        }
        for p in &self.paths {
            for v in p {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: IoRead>(r: &mut R) -> Result<TrajectoryBatch> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|e| SsbError::invalid(e.to_string()))?;
        if &magic != b"SSBTRAJ1" {
            return Err(SsbError::invalid("bad trajectory file magic"));
        }
        let mut u64s = [0u64; 4];
        let mut buf = [0u8; 8];
        for v in u64s.iter_mut() {
            r.read_exact(&mut buf).map_err(|e| SsbError::invalid(e.to_string()))?;
            *v = u64::from_le_bytes(buf);
        }
        let (n_paths, n_steps, dim, seed) = (u64s[0] as usize, u64s[1] as usize, u64s[2] as usize, u64s[3]);
        r.read_exact(&mut buf).map_err(|e| SsbError::invalid(e.to_string()))?;
        let horizon = f64::from_le_bytes(buf);
        let mut statuses = Vec::with_capacity(n_paths);
        for _ in 0..n_paths {
            r.read_exact(&mut buf).map_err(|e| SsbError::invalid(e.to_string()))?;
            let word = u64::from_le_bytes(buf);
            statuses.push(if word == u64::MAX {
                PathStatus::Ok
            } else {
                PathStatus::Failed { step: word as usize }
            });
        }
        let mut paths = Vec::with_capacity(n_paths);
        for _ in 0..n_paths {
            let mut p = Vec::with_capacity((n_steps + 1) * dim);
            for _ in 0..(n_steps + 1) * dim {
                r.read_exact(&mut buf).map_err(|e| SsbError::invalid(e.to_string()))?;
                p.push(f64::from_le_bytes(buf));
            }
            paths.push(p);
        }
        Ok(TrajectoryBatch {
            grid: TimeGrid::new(horizon, n_steps)?,
            dim,
            seed,
            paths,
            statuses,
        })
    }
}

/// Simulate the Dirac-initialized bridge of `spec` under `drift`.
pub fn simulate<D: DriftField>(
    spec: &BridgeSpec,
    drift: &D,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<TrajectoryBatch> {
    simulate_ensemble(
        spec.dim(),
        spec.sigma,
        &InitialLaw::Dirac(spec.x0.clone()),
        |x, t| spec.base_drift_at(x, t),
        drift,
        grid,
        n_paths,
        seed,
    )
}

/// General ensemble simulation with an explicit initial law and base drift.
#[allow(clippy::too_many_arguments)]
pub fn simulate_ensemble<D, B>(
    dim: usize,
    sigma: f64,
    init: &InitialLaw,
    base: B,
    drift: &D,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<TrajectoryBatch>
where
    D: DriftField,
    B: Fn(&[f64], f64) -> Vec<f64> + Sync,
{
    if n_paths == 0 {
        return Err(SsbError::invalid("need at least one path"));
    }
    if drift.dim() != dim {
        return Err(SsbError::DimensionMismatch {
            expected: dim,
            got: drift.dim(),
        });
    }
    if let InitialLaw::Dirac(x) = init {
        if x.len() != dim {
            return Err(SsbError::DimensionMismatch {
                expected: dim,
                got: x.len(),
            });
        }
    }
    let dt = grid.dt();
    let sqdt = dt.sqrt();
    let results: Vec<(Vec<f64>, PathStatus)> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut x = match init {
                InitialLaw::Dirac(x0) => x0.clone(),
                InitialLaw::Density(m) => {
                    let mut rng = substream(seed, &[p as u64, STREAM_INIT]);
                    m.sample(&mut rng).expect("samplable initial law")
                }
                InitialLaw::Samples(xs) => xs[p % xs.len()].clone(),
            };
            let mut noise = substream(seed, &[p as u64, STREAM_NOISE]);
            let mut states = vec![f64::NAN; (grid.n_steps + 1) * dim];
            states[..dim].copy_from_slice(&x);
            let mut status = PathStatus::Ok;
            let mut drift_state = drift.init_state();
            for k in 0..grid.n_steps {
                let t = grid.time(k);
                let u = match drift.drift(&mut drift_state, &x, t, seed, p as u64, k as u64) {
                    McOutcome::Estimate(e) => e.value,
                    McOutcome::Overflow(_) => {
                        status = PathStatus::Failed { step: k };
                        break;
                    }
                };
                let b = base(&x, t);
                let mut finite = true;
                for i in 0..dim {
                    let xi = x[i]
                        + (b[i] + u[i]) * dt
                        + sigma * sqdt * noise.sample::<f64, _>(StandardNormal);
                    finite &= xi.is_finite();
                    x[i] = xi;
                }
                if !finite {
                    status = PathStatus::Failed { step: k };
                    break;
                }
                states[(k + 1) * dim..(k + 2) * dim].copy_from_slice(&x);
                drift.observe(&mut drift_state, &x, grid.time(k + 1));
            }
            (states, status)
        })
        .collect();
    let (paths, statuses) = results.into_iter().unzip();
    Ok(TrajectoryBatch {
        grid: *grid,
        dim,
        seed,
        paths,
        statuses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beta::Beta;
    use crate::drift::{FnDrift, ZeroDrift};

    fn brownian_spec() -> BridgeSpec {
        BridgeSpec::new(
            1.0,
            1.0,
            vec![0.0],
            DensityModel::gaussian1(0.0, 1.0),
            Beta::new(0.0).unwrap(),
        )
        .unwrap()
    }

    fn mean_var(xs: &[Vec<f64>]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().map(|x| x[0]).sum::<f64>() / n;
        let v = xs.iter().map(|x| (x[0] - m) * (x[0] - m)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn brownian_endpoint_moments() {
        let spec = brownian_spec();
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let batch = simulate(&spec, &ZeroDrift(1), &grid, 10_000, 77).unwrap();
        let (endpoints, report) = batch.endpoint_distribution();
        assert_eq!(report.n_failed, 0);
        let (m, v) = mean_var(&endpoints);
        assert!(m.abs() < 4.0 / (10_000f64).sqrt(), "mean {m}");
        assert!((v - 1.0).abs() < 0.05, "variance {v}");
    }

    #[test]
    fn constant_control_shifts_the_mean() {
        let spec = brownian_spec();
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let c = 1.5;
        let drift = FnDrift {
            dim: 1,
            f: move |x: &[f64], _t: f64| vec![c; x.len()],
        };
        let batch = simulate(&spec, &drift, &grid, 10_000, 3).unwrap();
        let (endpoints, _) = batch.endpoint_distribution();
        let (m, _) = mean_var(&endpoints);
        assert!((m - c).abs() < 4.0 / (10_000f64).sqrt() + 0.01, "mean {m}");
    }

    #[test]
    fn ou_endpoint_variance() {
        // u(x) = −x: variance σ²(1−e^{−2T})/2
        let spec = brownian_spec();
        let grid = TimeGrid::new(1.0, 400).unwrap();
        let drift = FnDrift {
            dim: 1,
            f: |x: &[f64], _t: f64| x.iter().map(|v| -v).collect(),
        };
        let batch = simulate(&spec, &drift, &grid, 10_000, 41).unwrap();
        let (endpoints, _) = batch.endpoint_distribution();
        let (_, v) = mean_var(&endpoints);
        let expected = (1.0 - (-2.0f64).exp()) / 2.0;
        assert!((v - expected).abs() / expected < 0.05, "variance {v} vs {expected}");
    }

    #[test]
    fn batches_are_seed_deterministic() {
        let spec = brownian_spec();
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let a = simulate(&spec, &ZeroDrift(1), &grid, 64, 9).unwrap();
        let b = simulate(&spec, &ZeroDrift(1), &grid, 64, 9).unwrap();
        assert_eq!(a.paths, b.paths);
        // and independent of the rayon pool size
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = pool.install(|| simulate(&spec, &ZeroDrift(1), &grid, 64, 9).unwrap());
        assert_eq!(a.paths, c.paths);
    }

    #[test]
    fn binary_round_trip() {
        let spec = brownian_spec();
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let batch = simulate(&spec, &ZeroDrift(1), &grid, 5, 1).unwrap();
        let mut buf = Vec::new();
        batch.write_binary(&mut buf).unwrap();
        let back = TrajectoryBatch::read_binary(&mut buf.as_slice()).unwrap();
        assert_eq!(batch.paths, back.paths);
        assert_eq!(batch.statuses, back.statuses);
    }

    #[test]
    fn csv_has_one_row_per_stored_state() {
        let spec = brownian_spec();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let batch = simulate(&spec, &ZeroDrift(1), &grid, 3, 2).unwrap();
        let mut buf = Vec::new();
        batch.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * 5);
        assert!(text.starts_with("path,step,t,x_1,status"));
    }

    #[test]
    fn refinement_leaves_endpoint_law_unchanged() {
        let spec = brownian_spec();
        let coarse = simulate(&spec, &ZeroDrift(1), &TimeGrid::new(1.0, 100).unwrap(), 10_000, 5).unwrap();
        let fine = simulate(&spec, &ZeroDrift(1), &TimeGrid::new(1.0, 200).unwrap(), 10_000, 6).unwrap();
        let a: Vec<f64> = coarse.endpoint_distribution().0.iter().map(|x| x[0]).collect();
        let b: Vec<f64> = fine.endpoint_distribution().0.iter().map(|x| x[0]).collect();
        let ks = crate::diagnostics::ks_two_sample(&a, &b).unwrap();
        assert!(ks < 0.02, "KS {ks}");
    }
}
