//! Experiment drivers behind the subcommands.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::basis_adapt::{quantile_sorted, AdaptivePropagator, BasisPolicy};
use crate::dynsys::{flow_jacobian_fd, integrate, propagate_rows, Lorenz84};
use crate::error::{Flag, Result};
use crate::exec::{try_map_range, Execution};
use crate::filter::{
    estimate_forward_map_bayes, estimate_forward_map_surrogate, smooth, Forecaster,
    MeasurementModel, SmootherKind, SmoothingProblem, SystemForecaster,
};
use crate::linalg::{column_mean, rel_frobenius};
use crate::pce::{sample_germ, sample_germ_balanced, GaussianDensity, PCExpansion};
use crate::rng::derive_seed;

/// Truth trajectory and the synthetic measurement at the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Twin {
    pub times: Vec<f64>,
    pub truth: Vec<Vec<f64>>,
    pub truth_at_horizon: Vec<f64>,
    pub observed: Vec<usize>,
    pub measurement: Vec<f64>,
    pub noise_var: Vec<f64>,
}

/// Truth states at the report times and a noisy measurement of the observed components
/// at the horizon, with noise standard deviation `noise_coef · |x_truth|`.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Twin> {
    cfg.validate()?;
    let sys = cfg.system();
    let times = cfg.report_times();
    let mut truth = Vec::with_capacity(times.len());
    let mut x = cfg.truth.clone();
    let mut t = cfg.t0;
    for &r in &times {
        x = integrate(&sys, &x, t, r, &cfg.integrator)?;
        t = r;
        truth.push(x.clone());
    }
    let x_end = truth.last().cloned().unwrap_or_else(|| cfg.truth.clone());
    let observed = cfg.observed_components();
    let noise_var: Vec<f64> = observed
        .iter()
        .map(|&i| (cfg.noise_coef * x_end[i]).powi(2))
        .collect();
    let xi = sample_germ(1, observed.len(), derive_seed(cfg.seed()?, &[100]));
    let measurement = observed
        .iter()
        .enumerate()
        .map(|(r, &i)| x_end[i] + noise_var[r].sqrt() * xi[(0, r)])
        .collect();
    Ok(Twin {
        times,
        truth,
        truth_at_horizon: x_end,
        observed,
        measurement,
        noise_var,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub time: f64,
    pub truth: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub p01: Vec<f64>,
    pub p99: Vec<f64>,
}

impl ReportRow {
    /// True when every truth component lies inside its 1%–99% band.
    pub fn covered(&self) -> bool {
        (0..self.truth.len()).all(|i| self.p01[i] <= self.truth[i] && self.truth[i] <= self.p99[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub time: f64,
    pub iterations: usize,
    pub converged: bool,
    pub errors: Vec<f64>,
    pub bias: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub seed: u64,
    pub smoother: SmootherKind,
    pub twin: Twin,
    pub reports: Vec<ReportRow>,
    pub steps: Vec<StepInfo>,
    pub flags: Vec<Flag>,
    /// Fraction of report times whose truth lies inside the posterior 99% band.
    pub coverage: f64,
    pub wall_clock_s: f64,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub posteriors: Vec<(f64, PCExpansion)>,
}

fn prior(cfg: &ExperimentConfig) -> Result<PCExpansion> {
    let var = DVector::from_iterator(3, cfg.prior_std.iter().map(|s| s * s));
    let g = GaussianDensity::diagonal(DVector::from_vec(cfg.prior_mean.clone()), &var)?;
    PCExpansion::from_gaussian(&g, 0, 3)
}

fn sorted_column(samples: &DMatrix<f64>, j: usize) -> Vec<f64> {
    let mut c: Vec<f64> = samples.column(j).iter().cloned().collect();
    c.sort_by(f64::total_cmp);
    c
}

fn report_row(
    time: f64,
    truth: &[f64],
    samples: &DMatrix<f64>,
    exact: Option<&PCExpansion>,
) -> Result<ReportRow> {
    let (mean, variance) = match exact {
        Some(x) => (x.mean()?, x.variance()?),
        None => {
            let m = column_mean(samples);
            let n = samples.nrows() as f64;
            let v = DVector::from_iterator(
                samples.ncols(),
                (0..samples.ncols()).map(|j| {
                    samples
                        .column(j)
                        .iter()
                        .map(|s| (s - m[j]).powi(2))
                        .sum::<f64>()
                        / (n - 1.0)
                }),
            );
            (m, v)
        }
    };
    let mut p01 = Vec::new();
    let mut p99 = Vec::new();
    for j in 0..samples.ncols() {
        let c = sorted_column(samples, j);
        p01.push(quantile_sorted(&c, 0.01));
        p99.push(quantile_sorted(&c, 0.99));
    }
    Ok(ReportRow {
        time,
        truth: truth.to_vec(),
        mean: mean.iter().cloned().collect(),
        variance: variance.iter().cloned().collect(),
        p01,
        p99,
    })
}

/// Run the configured smoother on a twin experiment.
///
/// Report times that fall between smoother steps are served by propagating the
/// posterior samples of the preceding step.
pub fn run_experiment(cfg: &ExperimentConfig, exec: Execution) -> Result<RunOutput> {
    let clock = Instant::now();
    let twin = simulate(cfg)?;
    let seed = cfg.seed()?;
    let sys = cfg.system();
    let x0 = prior(cfg)?;
    let fc = SystemForecaster::new(
        &sys,
        cfg.integrator,
        x0,
        cfg.t0,
        cfg.adaptive_config(cfg.basis),
        derive_seed(seed, &[101]),
    )?
    .with_execution(exec);
    let noise_cov = DMatrix::from_diagonal(&DVector::from_vec(twin.noise_var.clone()));
    let model = MeasurementModel::select(&twin.observed, 3, noise_cov)?;
    let y = DVector::from_vec(twin.measurement.clone());
    let problem = SmoothingProblem {
        forecaster: &fc,
        model: &model,
        measurement: &y,
        t_end: cfg.horizon,
    };
    let result = smooth(
        cfg.smoother,
        &problem,
        &cfg.filter_config(),
        derive_seed(seed, &[102]),
        exec,
    )?;

    let mut reports = Vec::with_capacity(twin.times.len());
    for (k, &r) in twin.times.iter().enumerate() {
        let step = result
            .steps
            .iter()
            .rev()
            .find(|s| s.time <= r + 1e-9 * r.abs().max(1.0))
            .unwrap_or(&result.steps[0]);
        let germ = sample_germ(
            cfg.quantile_samples,
            step.posterior.germ_dim(),
            derive_seed(seed, &[103, k as u64]),
        );
        let samples = step.posterior.eval_many(&germ)?;
        let on_grid = (step.time - r).abs() <= 1e-9 * r.abs().max(1.0);
        let row = if on_grid {
            report_row(r, &twin.truth[k], &samples, Some(&step.posterior))?
        } else {
            let moved = fc.propagate(&samples, step.time, r)?;
            report_row(r, &twin.truth[k], &moved, None)?
        };
        reports.push(row);
    }
    let covered = reports.iter().filter(|r| r.covered()).count();
    let coverage = covered as f64 / reports.len() as f64;
    let steps = result
        .steps
        .iter()
        .map(|s| StepInfo {
            time: s.time,
            iterations: s.iterations,
            converged: s.converged,
            errors: s.errors.clone(),
            bias: s.bias.as_ref().map(|b| b.iter().cloned().collect()),
        })
        .collect();
    let posteriors = result
        .steps
        .iter()
        .map(|s| (s.time, s.posterior.clone()))
        .collect();
    Ok(RunOutput {
        summary: RunSummary {
            config_hash: cfg.hash(),
            seed,
            smoother: cfg.smoother,
            twin,
            reports,
            steps,
            flags: result.flags,
            coverage,
            wall_clock_s: clock.elapsed().as_secs_f64(),
            config: cfg.clone(),
        },
        posteriors,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitPceRow {
    pub policy: BasisPolicy,
    pub time: f64,
    pub component: usize,
    pub rmse: f64,
    /// RMSE divided by the validation ensemble's standard deviation.
    pub rel_rmse: f64,
}

/// Propagate the prior with each basis policy and score the surrogate against
/// independently integrated validation trajectories at every step.
pub fn fit_pce(cfg: &ExperimentConfig, exec: Execution) -> Result<(Vec<FitPceRow>, Vec<Flag>)> {
    cfg.validate()?;
    let seed = cfg.seed()?;
    let sys = cfg.system();
    let x0 = prior(cfg)?;
    let opts = &cfg.fit_pce;
    let germ = sample_germ(opts.validation_samples, 3, derive_seed(seed, &[200]));
    let mut rows = Vec::new();
    let mut flags = Vec::new();
    for &policy in &opts.policies {
        let mut prop = AdaptivePropagator::new(
            &sys,
            cfg.integrator,
            &x0,
            cfg.t0,
            cfg.adaptive_config(policy),
            derive_seed(seed, &[201]),
        )?
        .with_execution(exec);
        let mut states = x0.eval_many(&germ)?;
        let mut t = cfg.t0;
        while t < opts.horizon - 1e-9 {
            let next = (t + opts.step).min(opts.horizon);
            let step = prop.advance_to(next)?;
            states = propagate_rows(exec, &sys, &states, t, next, &cfg.integrator)?;
            t = next;
            let pred = step.expansion.eval_many(&germ)?;
            let n = states.nrows() as f64;
            for j in 0..3 {
                let col = states.column(j);
                let m = col.mean();
                let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
                let rmse = ((pred.column(j) - col).norm_squared() / n).sqrt();
                rows.push(FitPceRow {
                    policy,
                    time: t,
                    component: j,
                    rmse,
                    rel_rmse: rmse / sd.max(f64::MIN_POSITIVE),
                });
            }
        }
        flags.extend(prop.flags().iter().cloned());
    }
    Ok((rows, flags))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianRow {
    pub time: f64,
    pub window: f64,
    /// Relative Frobenius error of the projection (surrogate) estimate.
    pub projection: f64,
    /// Relative Frobenius error of the sparse Bayesian estimate.
    pub bayes: f64,
}

/// Compare both forward-map estimators with the finite-difference Jacobian of the flow
/// at points of the truth trajectory.
pub fn jacobian_check(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<JacobianRow>> {
    cfg.validate()?;
    let seed = cfg.seed()?;
    let sys = cfg.system();
    let opts = &cfg.jacobian;
    let fcfg = cfg.filter_config();
    let mut cells = Vec::new();
    for (i, &tt) in opts.times.iter().enumerate() {
        for (j, &w) in opts.windows.iter().enumerate() {
            cells.push((i, j, tt, w));
        }
    }
    try_map_range(exec, cells.len(), |c| {
        let (i, j, tt, w) = cells[c];
        let center = integrate(&sys, &cfg.truth, cfg.t0, tt, &cfg.integrator)?;
        jacobian_cell(
            &sys,
            cfg,
            &fcfg,
            &center,
            tt,
            w,
            derive_seed(seed, &[300, i as u64, j as u64]),
        )
    })
}

fn jacobian_cell(
    sys: &Lorenz84,
    cfg: &ExperimentConfig,
    fcfg: &crate::filter::FilterConfig,
    center: &[f64],
    tt: f64,
    w: f64,
    seed: u64,
) -> Result<JacobianRow> {
    let c = DVector::from_column_slice(center);
    let spread = cfg.jacobian.spread;
    let g = GaussianDensity::diagonal(c.clone(), &DVector::from_element(3, spread * spread))?;
    let x = PCExpansion::from_gaussian(&g, 0, 3)?;
    let germ = sample_germ_balanced(cfg.samples, 3, derive_seed(seed, &[1]));
    let moments = sample_germ_balanced(fcfg.moment_samples, 3, derive_seed(seed, &[2]));
    let xs = x.eval_many(&germ)?;
    let zs = propagate_rows(Execution::Sequential, sys, &xs, tt, tt + w, &cfg.integrator)?;
    let fd = flow_jacobian_fd(
        sys,
        center,
        tt,
        tt + w,
        &cfg.integrator,
        cfg.jacobian.fd_step,
    )?;
    let (proj, _) = estimate_forward_map_surrogate(
        &x,
        &germ,
        &zs,
        &c,
        &moments,
        fcfg,
        derive_seed(seed, &[3]),
    )?;
    let (bayes, _) = estimate_forward_map_bayes(&xs, &zs, &c, &DMatrix::zeros(3, 3), &cfg.rvm)?;
    Ok(JacobianRow {
        time: tt,
        window: w,
        projection: rel_frobenius(&proj.h_mat, &fd),
        bayes: rel_frobenius(&bayes.h_mat, &fd),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub delta_tau: f64,
    pub noise_coef: f64,
    pub smoother: SmootherKind,
    pub summary: RunSummary,
}

/// Run every (Δτ, noise coefficient, smoother) combination as an isolated experiment.
pub fn sweep(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<SweepCell>> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for &dt in &cfg.sweep.delta_tau {
        for &c in &cfg.sweep.noise_coef {
            for &k in &cfg.sweep.smoother {
                let mut cell = cfg.clone();
                cell.filter.delta_tau = dt;
                cell.noise_coef = c;
                cell.smoother = k;
                cells.push(cell);
            }
        }
    }
    try_map_range(exec, cells.len(), |i| {
        let cell = &cells[i];
        let out = run_experiment(cell, exec)?;
        Ok(SweepCell {
            delta_tau: cell.filter.delta_tau,
            noise_coef: cell.noise_coef,
            smoother: cell.smoother,
            summary: out.summary,
        })
    })
}
