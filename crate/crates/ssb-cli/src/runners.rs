//! One entry point per experiment; each writes its artifacts into an
//! already-created output directory.

use serde::Serialize;
use ssb_core::density::DensityModel;
use ssb_core::diagnostics::{ks_one_sample, ks_two_sample, rejection_sample_geometric_mixture, EmpiricalSummary};
use ssb_core::drift::{BridgeSpec, McDrift, Proposal};
use ssb_core::rng::{substream, STREAM_ORACLE};
use ssb_core::score::{
    geometric_levels, lattice_centers, reverse_bridge_sample, train, ReverseInit, ScoreModel,
    TrainConfig,
};
use ssb_core::sde::{simulate, simulate_ensemble, InitialLaw, TimeGrid, TrajectoryBatch};
use ssb_core::special::cauchy_cdf;
use ssb_core::system::{solve, DiscreteProblem};
use ssb_core::time_series::{write_checkpoints_csv, PiecewiseDrift, TimeSeriesSpec};
use ssb_core::Beta;

use crate::config::{
    CauchyConfig, NormalMixtureConfig, ProposalChoice, ScoreDeskConfig, SystemSolveConfig,
    TimeSeriesConfig,
};
use crate::manifest::OutputDir;
use crate::CliError;

fn beta_label(beta: Beta) -> String {
    match beta {
        Beta::Infinite => "inf".into(),
        Beta::Finite(b) => {
            if b == b.trunc() {
                format!("{}", b as i64)
            } else {
                format!("{b}")
            }
        }
    }
}

fn endpoint_csv(batch: &TrajectoryBatch) -> Vec<u8> {
    let mut buf = Vec::new();
    write_checkpoints_csv(batch, &[batch.grid.n_steps], &mut buf).expect("in-memory write");
    buf
}

pub fn run_cauchy(cfg: &CauchyConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let grid = TimeGrid::new(1.0, cfg.n_steps)?;
    let mut failure_rows = String::from("beta");
    for m in &cfg.n_mc {
        failure_rows.push_str(&format!(",n_mc_{m}"));
    }
    failure_rows.push('\n');

    #[derive(Serialize)]
    struct KsCell {
        beta: Beta,
        n_mc: usize,
        n_ok: usize,
        n_failed: usize,
        oracle: &'static str,
        ks: f64,
    }
    let mut ks_report = Vec::new();

    for (bi, &beta) in cfg.betas.iter().enumerate() {
        failure_rows.push_str(&beta_label(beta));
        for (mi, &n_mc) in cfg.n_mc.iter().enumerate() {
            let spec = BridgeSpec::new(1.0, 1.0, vec![0.0], DensityModel::cauchy(0.0, 1.0), beta)?;
            let proposal = match cfg.proposal {
                ProposalChoice::Plain => None,
                ProposalChoice::Tuned => Some(match beta {
                    Beta::Infinite => Proposal::StudentT { dof: 2.0 },
                    Beta::Finite(b) => Proposal::Gaussian { std: (1.0 + b).sqrt() },
                }),
            };
            let drift = McDrift { spec: spec.clone(), n_mc, proposal };
            let cell_seed = cfg.seed.wrapping_add((bi * cfg.n_mc.len() + mi) as u64);
            let batch = simulate(&spec, &drift, &grid, cfg.n_paths, cell_seed)?;
            let (endpoints, report) = batch.endpoint_distribution();
            failure_rows.push_str(&format!(",{}", report.n_failed));
            out.write(
                &format!("endpoints_beta{}_nmc{}.csv", beta_label(beta), n_mc),
                &endpoint_csv(&batch),
            )?;

            let xs: Vec<f64> = endpoints.iter().map(|p| p[0]).collect();
            let cell = match beta {
                Beta::Infinite => KsCell {
                    beta,
                    n_mc,
                    n_ok: xs.len(),
                    n_failed: report.n_failed,
                    oracle: "cauchy_cdf",
                    ks: ks_one_sample(&xs, |x| cauchy_cdf(x, 0.0, 1.0))?,
                },
                Beta::Finite(_) => {
                    let gm = DensityModel::geometric_mixture(
                        DensityModel::gaussian1(0.0, 1.0),
                        DensityModel::cauchy(0.0, 1.0),
                        beta,
                    );
                    let mut rng = substream(cell_seed, &[STREAM_ORACLE]);
                    let oracle = rejection_sample_geometric_mixture(
                        &gm,
                        &DensityModel::cauchy(0.0, 1.0),
                        cfg.oracle_samples,
                        &mut rng,
                    )?;
                    let ys: Vec<f64> = oracle.samples.iter().map(|p| p[0]).collect();
                    KsCell {
                        beta,
                        n_mc,
                        n_ok: xs.len(),
                        n_failed: report.n_failed,
                        oracle: "rejection",
                        ks: ks_two_sample(&xs, &ys)?,
                    }
                }
            };
            ks_report.push(cell);
        }
        failure_rows.push('\n');
    }
    out.write("failure_counts.csv", failure_rows.as_bytes())?;
    out.write("ks_report.json", &serde_json::to_vec_pretty(&ks_report)?)?;
    Ok(())
}

pub fn run_normal_mixture(cfg: &NormalMixtureConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let DensityModel::GaussianMixture { means: ref_means, .. } = &cfg.f_ref else {
        return Err(CliError::Config(
            "f_ref must be a gaussian_mixture (cluster means are read from it)".into(),
        ));
    };
    let ref_means = ref_means.clone();
    let dim = cfg.f_ref.dim();
    if cfg.f_obj.dim() != dim {
        return Err(CliError::Config("f_ref and f_obj dimensions differ".into()));
    }
    let grid = TimeGrid::new(1.0, cfg.n_steps)?;
    let dt = grid.dt();
    let snapshot_steps: Vec<usize> = cfg
        .snapshot_times
        .iter()
        .map(|t| ((t / dt).round() as usize).min(cfg.n_steps))
        .collect();

    #[derive(Serialize)]
    struct Cluster {
        mean: Vec<f64>,
        count: usize,
        share: f64,
        endpoint_mean: Vec<f64>,
        endpoint_std: Vec<f64>,
    }
    #[derive(Serialize)]
    struct BetaReport {
        beta: Beta,
        n_ok: usize,
        n_failed: usize,
        clusters: Vec<Cluster>,
    }
    let mut reports = Vec::new();

    for (bi, &beta) in cfg.betas.iter().enumerate() {
        // hard bridge onto the geometric mixture of the two reference laws
        let target = DensityModel::geometric_mixture(cfg.f_ref.clone(), cfg.f_obj.clone(), beta);
        let spec = BridgeSpec::new(1.0, 1.0, vec![0.0; dim], target, Beta::Infinite)?;
        let drift = McDrift { spec: spec.clone(), n_mc: cfg.n_mc, proposal: None };
        let batch = simulate(&spec, &drift, &grid, cfg.n_paths, cfg.seed.wrapping_add(bi as u64))?;
        let mut buf = Vec::new();
        write_checkpoints_csv(&batch, &snapshot_steps, &mut buf)?;
        out.write(&format!("snapshots_beta{}.csv", beta_label(beta)), &buf)?;

        let (endpoints, fail) = batch.endpoint_distribution();
        let mut assigned: Vec<Vec<&Vec<f64>>> = vec![Vec::new(); ref_means.len()];
        for p in &endpoints {
            let k = ref_means
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    let da: f64 = a.iter().zip(p.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
                    let db: f64 = b.iter().zip(p.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .map(|(k, _)| k)
                .unwrap();
            assigned[k].push(p);
        }
        let clusters = ref_means
            .iter()
            .zip(&assigned)
            .map(|(m, members)| {
                let n = members.len();
                let (mut mu, mut sd) = (vec![f64::NAN; dim], vec![f64::NAN; dim]);
                if n >= 2 {
                    for axis in 0..dim {
                        let xs: Vec<f64> = members.iter().map(|p| p[axis]).collect();
                        let mean = xs.iter().sum::<f64>() / n as f64;
                        let var =
                            xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
                        mu[axis] = mean;
                        sd[axis] = var.sqrt();
                    }
                }
                Cluster {
                    mean: m.clone(),
                    count: n,
                    share: n as f64 / endpoints.len().max(1) as f64,
                    endpoint_mean: mu,
                    endpoint_std: sd,
                }
            })
            .collect();
        reports.push(BetaReport {
            beta,
            n_ok: endpoints.len(),
            n_failed: fail.n_failed,
            clusters,
        });
    }
    out.write("cluster_report.json", &serde_json::to_vec_pretty(&reports)?)?;
    Ok(())
}

pub fn run_system_solve(cfg: &SystemSolveConfig, out: &mut OutputDir) -> Result<(), CliError> {
    cfg.f0.validate().map_err(|e| CliError::Config(e.to_string()))?;
    cfg.f_t.validate().map_err(|e| CliError::Config(e.to_string()))?;
    if cfg.f0.dim() != 1 || cfg.f_t.dim() != 1 {
        return Err(CliError::Config("system_solve works on one-dimensional marginals".into()));
    }
    let prob = DiscreteProblem::brownian_1d(
        (cfg.grid0.lo, cfg.grid0.hi),
        cfg.grid0.n,
        (cfg.grid_t.lo, cfg.grid_t.hi),
        cfg.grid_t.n,
        cfg.sigma,
        cfg.horizon,
        |x| cfg.f0.log_density_unchecked(&[x]),
        |x| cfg.f_t.log_density_unchecked(&[x]),
        cfg.beta,
    )?;
    let sol = solve(&prob, cfg.tol, cfg.max_iter)?;
    #[derive(Serialize)]
    struct Solution<'a> {
        problem: &'a DiscreteProblem,
        solution: &'a ssb_core::system::SchrodingerSolution,
    }
    out.write(
        "solution.json",
        &serde_json::to_vec_pretty(&Solution { problem: &prob, solution: &sol })?,
    )?;
    Ok(())
}

pub fn run_score_desk(cfg: &ScoreDeskConfig, out: &mut OutputDir) -> Result<(), CliError> {
    cfg.f_ref.validate().map_err(|e| CliError::Config(e.to_string()))?;
    cfg.f_obj.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let dim = cfg.f_ref.dim();
    if cfg.f_obj.dim() != dim || cfg.init_mean.len() != dim {
        return Err(CliError::Config("f_ref, f_obj and init_mean dimensions differ".into()));
    }
    if dim != 1 {
        return Err(CliError::Config("score_desk trains one-dimensional models".into()));
    }
    let mut data_rng = substream(cfg.seed, &[STREAM_ORACLE]);
    let data: Vec<Vec<f64>> = (0..cfg.n_train_samples)
        .map(|_| cfg.f_ref.sample(&mut data_rng))
        .collect::<Result<_, _>>()?;
    let mut model = ScoreModel::new(
        dim,
        lattice_centers(cfg.centers.lo, cfg.centers.hi, cfg.centers.n, dim),
        cfg.bandwidth,
        geometric_levels(cfg.levels.lo, cfg.levels.hi, cfg.levels.n),
    )?;
    let train_cfg = TrainConfig {
        batch_size: cfg.train.batch_size,
        step_size: cfg.train.step_size,
        iterations: cfg.train.iterations,
        seed: cfg.seed,
    };
    let f_ref = cfg.f_ref.clone();
    let f_obj = cfg.f_obj.clone();
    let trace = train(
        &mut model,
        &train_cfg,
        &data,
        |_| 0.0,
        |x| f_obj.log_density_unchecked(x) - f_ref.log_density_unchecked(x),
        cfg.beta,
    )?;
    out.write("weights.json", &serde_json::to_vec_pretty(&model)?)?;

    let init = match &cfg.langevin {
        Some(l) => ReverseInit::Langevin { n_steps: l.n_steps, step: l.step },
        None => ReverseInit::Gaussian { mean: cfg.init_mean.clone(), std: cfg.init_std },
    };
    let (endpoints, fail) = reverse_bridge_sample(
        |x, s| model.score(x, s),
        dim,
        cfg.sigma,
        cfg.horizon,
        cfg.n_steps,
        cfg.n_paths,
        init,
        cfg.seed,
    )?;
    let mut csv = String::from("path,x\n");
    for (p, x) in endpoints.iter().enumerate() {
        csv.push_str(&format!("{p},{}\n", x[0]));
    }
    out.write("endpoints.csv", csv.as_bytes())?;

    #[derive(Serialize)]
    struct Report {
        loss_first: f64,
        loss_last: f64,
        n_ok: usize,
        n_failed: usize,
        endpoints: EmpiricalSummary,
    }
    let report = Report {
        loss_first: *trace.first().unwrap(),
        loss_last: *trace.last().unwrap(),
        n_ok: endpoints.len(),
        n_failed: fail.n_failed,
        endpoints: EmpiricalSummary::from_samples(&endpoints)?,
    };
    out.write("report.json", &serde_json::to_vec_pretty(&report)?)?;
    Ok(())
}

pub fn run_time_series(cfg: &TimeSeriesConfig, out: &mut OutputDir) -> Result<(), CliError> {
    cfg.target.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let spec = TimeSeriesSpec::new(
        cfg.sigma,
        cfg.checkpoints.clone(),
        cfg.x0.clone(),
        cfg.target.clone(),
        cfg.beta,
    )?;
    let grid = TimeGrid::new(spec.horizon(), cfg.n_steps)?;
    let steps = spec.snap_checkpoints(&grid)?;
    let drift = PiecewiseDrift::new(spec.clone(), cfg.n_mc, &grid)?;
    let batch = simulate_ensemble(
        spec.dim(),
        cfg.sigma,
        &InitialLaw::Dirac(cfg.x0.clone()),
        |_x, _t| vec![0.0; cfg.x0.len()],
        &drift,
        &grid,
        cfg.n_paths,
        cfg.seed,
    )?;
    let mut buf = Vec::new();
    write_checkpoints_csv(&batch, &steps, &mut buf)?;
    out.write("checkpoints.csv", &buf)?;

    let samples = ssb_core::time_series::checkpoint_samples(&batch, &steps);
    #[derive(Serialize)]
    struct Report {
        n_ok: usize,
        n_failed: usize,
        joint: Option<EmpiricalSummary>,
    }
    let (_, fail) = batch.endpoint_distribution();
    let report = Report {
        n_ok: samples.len(),
        n_failed: fail.n_failed,
        joint: if samples.len() >= 2 {
            Some(EmpiricalSummary::from_samples(&samples)?)
        } else {
            None
        },
    };
    out.write("report.json", &serde_json::to_vec_pretty(&report)?)?;
    Ok(())
}
