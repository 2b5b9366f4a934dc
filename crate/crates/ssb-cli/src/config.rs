//! Experiment configurations. Unknown keys are rejected everywhere; the
//! formats are documented by `schema/config.schema.json` at the repo root.

use std::path::PathBuf;

use serde::Deserialize;
use ssb_core::density::Scale;
use ssb_core::{Beta, DensityModel};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid1d {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

fn d200() -> usize {
    200
}

fn d1000() -> usize {
    1000
}

fn done() -> f64 {
    1.0
}

/// How the drift estimator draws its Monte Carlo samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalChoice {
    /// Exact conditional Gaussian (no importance weights).
    Plain,
    /// Per-β tuned proposal: N(0, 1+β) for finite β, t(2) at β=∞.
    Tuned,
}

fn default_tuned() -> ProposalChoice {
    ProposalChoice::Tuned
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CauchyConfig {
    #[serde(default = "default_cauchy_betas")]
    pub betas: Vec<Beta>,
    #[serde(default = "default_cauchy_n_mc")]
    pub n_mc: Vec<usize>,
    #[serde(default = "d1000")]
    pub n_paths: usize,
    #[serde(default = "d200")]
    pub n_steps: usize,
    #[serde(default)]
    pub seed: u64,
    /// Size of the rejection-sampling oracle per finite-β cell.
    #[serde(default = "default_oracle_samples")]
    pub oracle_samples: usize,
    #[serde(default = "default_tuned")]
    pub proposal: ProposalChoice,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_cauchy_betas() -> Vec<Beta> {
    vec![Beta::new(20.0).unwrap(), Beta::new(50.0).unwrap(), Beta::new(100.0).unwrap(), Beta::Infinite]
}

fn default_cauchy_n_mc() -> Vec<usize> {
    vec![200, 1000]
}

fn default_oracle_samples() -> usize {
    5000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalMixtureConfig {
    #[serde(default = "default_mixture_betas")]
    pub betas: Vec<Beta>,
    #[serde(default = "d200")]
    pub n_mc: usize,
    #[serde(default = "d200")]
    pub n_steps: usize,
    #[serde(default = "d1000")]
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_snapshot_times")]
    pub snapshot_times: Vec<f64>,
    /// Reference mixture (clean samples); cluster means are read from it.
    #[serde(default = "default_f_ref")]
    pub f_ref: DensityModel,
    /// Objective mixture (noisy samples).
    #[serde(default = "default_f_obj")]
    pub f_obj: DensityModel,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_mixture_betas() -> Vec<Beta> {
    vec![Beta::new(0.0).unwrap(), Beta::new(2.0).unwrap(), Beta::new(10.0).unwrap(), Beta::Infinite]
}

fn default_snapshot_times() -> Vec<f64> {
    vec![0.25, 0.5, 0.75, 1.0]
}

fn default_f_ref() -> DensityModel {
    DensityModel::mixture(
        vec![0.1, 0.2, 0.3, 0.4],
        vec![vec![1.0, 1.0], vec![-1.0, 1.0], vec![1.0, -1.0], vec![-1.0, -1.0]],
        vec![Scale::Iso(0.05); 4],
    )
}

fn default_f_obj() -> DensityModel {
    DensityModel::mixture(
        vec![0.5, 0.5],
        vec![vec![1.2, 0.8], vec![-1.5, -0.5]],
        vec![Scale::Iso(0.5); 2],
    )
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSolveConfig {
    pub beta: Beta,
    /// Unused by the solver (it is deterministic); recorded in the manifest.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "done")]
    pub sigma: f64,
    #[serde(default = "done")]
    pub horizon: f64,
    pub grid0: Grid1d,
    pub grid_t: Grid1d,
    pub f0: DensityModel,
    pub f_t: DensityModel,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_tol() -> f64 {
    1e-12
}

fn default_max_iter() -> usize {
    20_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelLadder {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_step")]
    pub step_size: f64,
    #[serde(default = "default_iters")]
    pub iterations: usize,
}

fn default_batch() -> usize {
    256
}

fn default_step() -> f64 {
    0.02
}

fn default_iters() -> usize {
    3000
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            batch_size: default_batch(),
            step_size: default_step(),
            iterations: default_iters(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LangevinSettings {
    pub n_steps: usize,
    pub step: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreDeskConfig {
    pub beta: Beta,
    pub f_ref: DensityModel,
    pub f_obj: DensityModel,
    #[serde(default = "done")]
    pub sigma: f64,
    #[serde(default = "done")]
    pub horizon: f64,
    #[serde(default = "default_centers")]
    pub centers: Grid1d,
    #[serde(default = "done")]
    pub bandwidth: f64,
    #[serde(default = "default_levels")]
    pub levels: LevelLadder,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default = "default_train_samples")]
    pub n_train_samples: usize,
    #[serde(default = "d1000")]
    pub n_paths: usize,
    #[serde(default = "d200")]
    pub n_steps: usize,
    /// Gaussian start of the reverse bridge (mean per axis, shared std).
    pub init_mean: Vec<f64>,
    pub init_std: f64,
    /// If present, replace the Gaussian start with a Langevin warm-up.
    #[serde(default)]
    pub langevin: Option<LangevinSettings>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_centers() -> Grid1d {
    Grid1d { lo: -3.0, hi: 5.0, n: 9 }
}

fn default_levels() -> LevelLadder {
    LevelLadder { lo: 0.1, hi: 1.0, n: 10 }
}

fn default_train_samples() -> usize {
    20_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSeriesConfig {
    #[serde(default = "done")]
    pub sigma: f64,
    pub checkpoints: Vec<f64>,
    pub x0: Vec<f64>,
    pub target: DensityModel,
    pub beta: Beta,
    #[serde(default = "d200")]
    pub n_mc: usize,
    #[serde(default = "d200")]
    pub n_steps: usize,
    #[serde(default = "d1000")]
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}
