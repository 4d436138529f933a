//! Direct and pseudo-update smoothers over a fixed assimilation window.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{
    gnmk_iterate, AffineForwardMap, BiasGain, FilterConfig, Forecaster, GnmkResult, Measurement,
    MeasurementModel,
};
use crate::basis_adapt::reduce_germ;
use crate::error::{Error, Flag, Result};
use crate::exec::{try_map_range, Execution};
use crate::linalg::{column_mean, pinv, sample_cov};
use crate::pce::{gaussianize, sample_germ_balanced, GaussianDensity, PCExpansion};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmootherKind {
    /// Independent update at every time against the end-of-window measurement.
    Ds,
    /// Backward pseudo-updates with a Gaussian pseudo-measurement.
    Ps1,
    /// Backward pseudo-updates with the full posterior as pseudo-measurement.
    Ps2,
}

impl SmootherKind {
    pub fn name(self) -> &'static str {
        match self {
            SmootherKind::Ds => "ds",
            SmootherKind::Ps1 => "ps1",
            SmootherKind::Ps2 => "ps2",
        }
    }
}

/// Measurement of the state at `t_end`, with priors and dynamics from `forecaster`.
#[derive(Clone, Copy)]
pub struct SmoothingProblem<'a> {
    pub forecaster: &'a dyn Forecaster,
    pub model: &'a MeasurementModel,
    pub measurement: &'a DVector<f64>,
    pub t_end: f64,
}

#[derive(Debug, Clone)]
pub struct SmoothingStep {
    pub time: f64,
    pub posterior: PCExpansion,
    pub iterations: usize,
    pub errors: Vec<f64>,
    pub lin_points: Vec<DVector<f64>>,
    pub converged: bool,
    /// Bias estimate subtracted from the posterior mean (PS-1 only).
    pub bias: Option<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub struct SmootherResult {
    pub kind: SmootherKind,
    /// Ascending in time; the last step is the end of the window.
    pub steps: Vec<SmoothingStep>,
    pub flags: Vec<Flag>,
}

impl SmootherResult {
    pub fn times(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.time).collect()
    }

    pub fn at(&self, t: f64) -> Option<&SmoothingStep> {
        self.steps
            .iter()
            .find(|s| (s.time - t).abs() < 1e-9 * (1.0 + t.abs()))
    }
}

/// Times `t0, t0 + Δτ, …, t_end`; the last interval may be shorter.
pub fn smoothing_grid(t0: f64, t_end: f64, delta_tau: f64) -> Result<Vec<f64>> {
    if !(t_end >= t0) || !(delta_tau > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bad smoothing window [{t0}, {t_end}] with step {delta_tau}"
        )));
    }
    let n = ((t_end - t0) / delta_tau - 1e-9).ceil().max(0.0) as usize;
    let mut grid: Vec<f64> = (0..n).map(|k| t0 + k as f64 * delta_tau).collect();
    grid.push(t_end);
    Ok(grid)
}

fn step_from(time: f64, r: GnmkResult, bias: Option<DVector<f64>>) -> (SmoothingStep, Vec<Flag>) {
    (
        SmoothingStep {
            time,
            posterior: r.posterior,
            iterations: r.iterations,
            errors: r.errors,
            lin_points: r.lin_points,
            converged: r.converged,
            bias,
        },
        r.flags,
    )
}

fn grid_and_priors(
    p: &SmoothingProblem,
    cfg: &FilterConfig,
) -> Result<(Vec<f64>, Vec<PCExpansion>, Vec<Flag>)> {
    cfg.validate()?;
    if p.measurement.len() != p.model.obs_dim() {
        return Err(Error::dim(
            "measurement",
            p.model.obs_dim(),
            p.measurement.len(),
        ));
    }
    if p.forecaster.state_dim() != p.model.state_dim() {
        return Err(Error::dim(
            "state",
            p.model.state_dim(),
            p.forecaster.state_dim(),
        ));
    }
    let grid = smoothing_grid(p.forecaster.start(), p.t_end, cfg.delta_tau)?;
    let (priors, flags) = p.forecaster.priors(&grid)?;
    Ok((grid, priors, flags))
}

/// Direct smoother: every grid time is updated against the measurement at `t_end`
/// through the full remaining propagation.
pub fn direct_smooth(
    p: &SmoothingProblem,
    cfg: &FilterConfig,
    seed: u64,
    exec: Execution,
) -> Result<SmootherResult> {
    let (grid, priors, mut flags) = grid_and_priors(p, cfg)?;
    let y = Measurement::Vector(p.measurement.clone());
    let results = try_map_range(exec, grid.len(), |k| {
        gnmk_iterate(
            &priors[k],
            &y,
            (grid[k], p.t_end),
            p.model,
            cfg,
            p.forecaster,
            derive_seed(seed, &[20, k as u64]),
        )
    })?;
    let mut steps = Vec::with_capacity(grid.len());
    for (t, r) in grid.iter().zip(results) {
        let (s, f) = step_from(*t, r, None);
        flags.extend(f);
        steps.push(s);
    }
    Ok(SmootherResult {
        kind: SmootherKind::Ds,
        steps,
        flags,
    })
}

fn end_update(
    p: &SmoothingProblem,
    prior: &PCExpansion,
    cfg: &FilterConfig,
    seed: u64,
) -> Result<GnmkResult> {
    gnmk_iterate(
        prior,
        &Measurement::Vector(p.measurement.clone()),
        (p.t_end, p.t_end),
        p.model,
        cfg,
        p.forecaster,
        seed,
    )
}

/// Bias of a pseudo-update posterior `x_post` at `window.0` against the pseudo-measurement
/// `pseudo` at `window.1`.
///
/// `x_post` is propagated to `window.1` and re-assimilated with gain
/// `K = C^f (C^f + C_pseudo)^†`; the resulting mean shift `d = K (E x^f - E pseudo)` is
/// mapped back through `(K H̊)^†` (or taken as is with [`BiasGain::Identity`]).
pub fn bias_correct(
    x_post: &PCExpansion,
    pseudo: &GaussianDensity,
    forward: &AffineForwardMap,
    window: (f64, f64),
    forecaster: &dyn Forecaster,
    cfg: &FilterConfig,
    seed: u64,
) -> Result<DVector<f64>> {
    let d = x_post.state_dim();
    if pseudo.dim() != d || forward.h_mat.shape() != (d, d) {
        return Err(Error::dim("pseudo-measurement", d, pseudo.dim()));
    }
    let germ = sample_germ_balanced(cfg.moment_samples, x_post.germ_dim(), seed);
    let xs = x_post.eval_many(&germ)?;
    let zs = forecaster.propagate(&xs, window.0, window.1)?;
    let mf = column_mean(&zs);
    let cf = sample_cov(&zs);
    let (s_pinv, _) = pinv(&(&cf + &pseudo.cov), cfg.pinv_rcond);
    let k = &cf * s_pinv;
    let shift = &k * (&mf - &pseudo.mean);
    Ok(match cfg.bias_gain {
        BiasGain::Inverse => pinv(&(&k * &forward.h_mat), cfg.pinv_rcond).0 * shift,
        BiasGain::Identity => shift,
    })
}

/// Pseudo-update smoother with the moment-matched Gaussian of the later posterior as
/// pseudo-measurement, optionally bias corrected.
pub fn ps1_smooth(p: &SmoothingProblem, cfg: &FilterConfig, seed: u64) -> Result<SmootherResult> {
    let (grid, priors, mut flags) = grid_and_priors(p, cfg)?;
    let n = grid.len();
    let d = p.model.state_dim();
    let pseudo_model = MeasurementModel::identity(d, DMatrix::zeros(d, d))?;
    let last = end_update(p, &priors[n - 1], cfg, derive_seed(seed, &[30]))?;
    let (step, f) = step_from(grid[n - 1], last, None);
    flags.extend(f);
    let mut steps = vec![step];
    for k in (0..n - 1).rev() {
        let later = &steps.last().expect("nonempty").posterior;
        let pseudo = gaussianize(later)?;
        let window = (grid[k], grid[k + 1]);
        let r = gnmk_iterate(
            &priors[k],
            &Measurement::Gaussian(pseudo.clone()),
            window,
            &pseudo_model,
            cfg,
            p.forecaster,
            derive_seed(seed, &[31, k as u64]),
        )?;
        let bias = if cfg.bias_correct {
            let e = bias_correct(
                &r.posterior,
                &pseudo,
                &r.forward,
                window,
                p.forecaster,
                cfg,
                derive_seed(seed, &[32, k as u64]),
            )?;
            Some(e)
        } else {
            None
        };
        let (mut step, f) = step_from(grid[k], r, None);
        if let Some(e) = bias {
            let eye = DMatrix::identity(d, d);
            step.posterior = step.posterior.transform(&eye, Some(&-&e))?;
            step.bias = Some(e);
        }
        flags.extend(f);
        steps.push(step);
    }
    steps.reverse();
    Ok(SmootherResult {
        kind: SmootherKind::Ps1,
        steps,
        flags,
    })
}

/// Pseudo-update smoother with the full later posterior as random-variable
/// pseudo-measurement; each posterior is re-expanded on a state-dimensional germ.
pub fn ps2_smooth(p: &SmoothingProblem, cfg: &FilterConfig, seed: u64) -> Result<SmootherResult> {
    let (grid, priors, mut flags) = grid_and_priors(p, cfg)?;
    let n = grid.len();
    let d = p.model.state_dim();
    let pseudo_model = MeasurementModel::identity(d, DMatrix::zeros(d, d))?;
    let reduce = |x: &PCExpansion, tag: u64, flags: &mut Vec<Flag>| -> Result<PCExpansion> {
        let red = reduce_germ(
            x,
            cfg.moment_samples,
            cfg.order,
            &cfg.rvm,
            derive_seed(seed, &[40, tag]),
        )?;
        flags.extend(red.flags);
        Ok(red.expansion)
    };
    let last = end_update(p, &priors[n - 1], cfg, derive_seed(seed, &[41]))?;
    let (mut step, f) = step_from(grid[n - 1], last, None);
    flags.extend(f);
    step.posterior = reduce(&step.posterior, n as u64, &mut flags)?;
    let mut steps = vec![step];
    for k in (0..n - 1).rev() {
        let later = steps.last().expect("nonempty").posterior.clone();
        let r = gnmk_iterate(
            &priors[k],
            &Measurement::RandomVariable(later),
            (grid[k], grid[k + 1]),
            &pseudo_model,
            cfg,
            p.forecaster,
            derive_seed(seed, &[42, k as u64]),
        )?;
        let (mut step, f) = step_from(grid[k], r, None);
        flags.extend(f);
        step.posterior = reduce(&step.posterior, k as u64, &mut flags)?;
        steps.push(step);
    }
    steps.reverse();
    Ok(SmootherResult {
        kind: SmootherKind::Ps2,
        steps,
        flags,
    })
}

pub fn smooth(
    kind: SmootherKind,
    p: &SmoothingProblem,
    cfg: &FilterConfig,
    seed: u64,
    exec: Execution,
) -> Result<SmootherResult> {
    match kind {
        SmootherKind::Ds => direct_smooth(p, cfg, seed, exec),
        SmootherKind::Ps1 => ps1_smooth(p, cfg, seed),
        SmootherKind::Ps2 => ps2_smooth(p, cfg, seed),
    }
}
