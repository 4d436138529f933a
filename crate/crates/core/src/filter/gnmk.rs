//! Iterated Gauss–Newton–Markov–Kalman update over a propagation window.

use nalgebra::{DMatrix, DVector};

use super::{
    estimate_forward_map_bayes, estimate_forward_map_surrogate, estimate_inverse_map_bayes,
    estimate_inverse_map_projection, AffineForwardMap, AffineInverseMap, FilterConfig, Forecaster,
    MapMode, MeasurementModel,
};
use crate::error::{Error, Flag, Result};
use crate::linalg::pinv;
use crate::pce::{sample_germ_balanced, GaussianDensity, PCExpansion};
use crate::rng::derive_seed;

/// Measurement data assimilated by [`gnmk_iterate`].
#[derive(Debug, Clone)]
pub enum Measurement {
    /// Deterministic value; the model noise enters the forecast.
    Vector(DVector<f64>),
    /// Mean used as data, covariance added to the model noise.
    Gaussian(GaussianDensity),
    /// Full random-variable pseudo-measurement, independent of the prior.
    RandomVariable(PCExpansion),
}

impl Measurement {
    pub fn dim(&self) -> usize {
        match self {
            Measurement::Vector(v) => v.len(),
            Measurement::Gaussian(g) => g.dim(),
            Measurement::RandomVariable(p) => p.state_dim(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GnmkResult {
    /// Posterior on the germ `[prior | measurement | noise]`.
    pub posterior: PCExpansion,
    pub iterations: usize,
    /// Relative change of the posterior mean per iteration.
    pub errors: Vec<f64>,
    /// Linearization point used in each iteration.
    pub lin_points: Vec<DVector<f64>>,
    pub forward: AffineForwardMap,
    pub inverse: AffineInverseMap,
    pub converged: bool,
    pub flags: Vec<Flag>,
}

fn is_numerical_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::StepUnderflow { .. }
            | Error::TooManySteps(_)
            | Error::NonFinite(_)
            | Error::Sample { .. }
            | Error::NotPsd { .. }
    )
}

const MAX_STATE_MAGNITUDE: f64 = 1e100;

struct Workspace<'a> {
    forecaster: &'a dyn Forecaster,
    cfg: &'a FilterConfig,
    window: (f64, f64),
    selector: &'a DMatrix<f64>,
    map_germ: DMatrix<f64>,
    moment_germ: DMatrix<f64>,
    seed: u64,
}

impl Workspace<'_> {
    fn observe(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let z =
            self.forecaster.propagate(x, self.window.0, self.window.1)? * self.selector.transpose();
        if z.iter()
            .any(|v| !v.is_finite() || v.abs() > MAX_STATE_MAGNITUDE)
        {
            return Err(Error::NonFinite(self.window.1));
        }
        Ok(z)
    }

    fn forward_map(
        &self,
        x_a: &PCExpansion,
        x_lin: &DVector<f64>,
        prev_gain: Option<&DMatrix<f64>>,
        iteration: usize,
    ) -> Result<(AffineForwardMap, Vec<Flag>)> {
        let xs = x_a.eval_many(&self.map_germ)?;
        let zs = self.observe(&xs)?;
        match self.cfg.map_mode {
            MapMode::Projection => estimate_forward_map_surrogate(
                x_a,
                &self.map_germ,
                &zs,
                x_lin,
                &self.moment_germ,
                self.cfg,
                derive_seed(self.seed, &[3, iteration as u64]),
            ),
            MapMode::Bayes => {
                let d = x_a.state_dim();
                let prior = match prev_gain {
                    Some(k) => pinv(k, self.cfg.pinv_rcond).0,
                    None => DMatrix::zeros(zs.ncols(), d),
                };
                estimate_forward_map_bayes(&xs, &zs, x_lin, &prior, &self.cfg.rvm)
            }
        }
    }

    fn inverse_map(
        &self,
        x_f: &PCExpansion,
        y: &PCExpansion,
    ) -> Result<(AffineInverseMap, Vec<Flag>)> {
        match self.cfg.map_mode {
            MapMode::Projection => estimate_inverse_map_projection(x_f, y, self.cfg.pinv_rcond),
            MapMode::Bayes => {
                let xs = x_f.eval_many(&self.moment_germ)?;
                let ys = y.eval_many(&self.moment_germ)?;
                estimate_inverse_map_bayes(&xs, &ys, &self.cfg.rvm)
            }
        }
    }
}

fn same_affine_map(a: &AffineForwardMap, b: &AffineForwardMap) -> bool {
    let tol = 1e-10;
    let dh = (&a.h_mat - &b.h_mat).norm();
    let dc = (a.intercept() - b.intercept()).norm();
    dh <= tol * (1.0 + a.h_mat.norm()) && dc <= tol * (1.0 + a.intercept().norm())
}

/// Iterated update of `x_f` against `y_mes` observed through the propagation over
/// `window` followed by the measurement model.
///
/// The forward map is re-estimated around the current posterior mean each iteration;
/// the loop stops when the relative mean change drops below `cfg.tol`, when the
/// affine map reaches a fixed point, after `cfg.divergence_window` consecutive error
/// increases, or at `cfg.max_iter`.
pub fn gnmk_iterate(
    x_f: &PCExpansion,
    y_mes: &Measurement,
    window: (f64, f64),
    model: &MeasurementModel,
    cfg: &FilterConfig,
    forecaster: &dyn Forecaster,
    seed: u64,
) -> Result<GnmkResult> {
    cfg.validate()?;
    if !(window.1 >= window.0) {
        return Err(Error::InvalidArgument(format!(
            "window end {} before start {}",
            window.1, window.0
        )));
    }
    if !x_f.is_hermite() {
        return Err(Error::UnsupportedBasis("filter prior"));
    }
    let d = model.state_dim();
    let m = model.obs_dim();
    if x_f.state_dim() != d {
        return Err(Error::dim("prior state", d, x_f.state_dim()));
    }
    if y_mes.dim() != m {
        return Err(Error::dim("measurement", m, y_mes.dim()));
    }

    let (data, rv, noise_cov) = match y_mes {
        Measurement::Vector(v) => (v.clone(), None, model.noise().cov.clone()),
        Measurement::Gaussian(g) => (g.mean.clone(), None, &model.noise().cov + &g.cov),
        Measurement::RandomVariable(p) => {
            if !p.is_hermite() {
                return Err(Error::UnsupportedBasis("random-variable measurement"));
            }
            (DVector::zeros(m), Some(p), model.noise().cov.clone())
        }
    };
    let gf = x_f.germ_dim();
    let gm = rv.map_or(0, |p| p.germ_dim());
    let gn = if noise_cov.iter().all(|&v| v == 0.0) {
        0
    } else {
        m
    };
    let total = gf + gm + gn;

    let xf = x_f.embed(0, total)?;
    let ym = rv.map(|p| p.embed(gf, total)).transpose()?;
    let noise = if gn > 0 {
        let g = GaussianDensity::new(DVector::zeros(m), noise_cov)?;
        Some(PCExpansion::from_gaussian(&g, gf + gm, total)?)
    } else {
        None
    };
    let eye_d = DMatrix::identity(d, d);
    let eye_m = DMatrix::identity(m, m);
    let mut flags = Vec::new();

    let forecast_obs = |map: &AffineForwardMap| -> Result<PCExpansion> {
        let c = map.intercept();
        match &noise {
            Some(n) => PCExpansion::affine_combination(&[(&map.h_mat, &xf), (&eye_m, n)], Some(&c)),
            None => PCExpansion::affine_combination(&[(&map.h_mat, &xf)], Some(&c)),
        }
    };
    let update = |y_l: &PCExpansion, k: &DMatrix<f64>| -> Result<PCExpansion> {
        let neg = -k;
        match &ym {
            Some(ym) => {
                PCExpansion::affine_combination(&[(&eye_d, &xf), (k, ym), (&neg, y_l)], None)
            }
            None => {
                let shift = k * &data;
                PCExpansion::affine_combination(&[(&eye_d, &xf), (&neg, y_l)], Some(&shift))
            }
        }
    };

    let prior_mean = xf.mean()?;
    let rel_change = |new: &DVector<f64>, old: &DVector<f64>| {
        let n = old.norm();
        let diff = (new - old).norm();
        if n > 0.0 {
            diff / n
        } else {
            diff
        }
    };

    if window.1 == window.0 {
        let forward = AffineForwardMap {
            h_mat: model.selector().clone(),
            x_lin: prior_mean.clone(),
            h: model.selector() * &prior_mean,
            eps_var: DVector::zeros(m),
        };
        let y_l = forecast_obs(&forward)?;
        let (inverse, f) = estimate_inverse_map_projection(&xf, &y_l, cfg.pinv_rcond)?;
        flags.extend(f);
        let posterior = update(&y_l, &inverse.k)?;
        let err = rel_change(&posterior.mean()?, &prior_mean);
        return Ok(GnmkResult {
            posterior,
            iterations: 1,
            errors: vec![err],
            lin_points: vec![prior_mean],
            forward,
            inverse,
            converged: true,
            flags,
        });
    }

    let ws = Workspace {
        forecaster,
        cfg,
        window,
        selector: model.selector(),
        map_germ: sample_germ_balanced(cfg.map_samples, total, derive_seed(seed, &[1])),
        moment_germ: sample_germ_balanced(cfg.moment_samples, total, derive_seed(seed, &[2])),
        seed,
    };

    let mut x_a = xf.clone();
    let mut mean_prev = prior_mean;
    let mut errors: Vec<f64> = Vec::new();
    let mut lin_points = Vec::new();
    let mut last: Option<(AffineForwardMap, AffineInverseMap)> = None;
    let mut converged = false;
    let mut stopped = false;
    let mut increases = 0;
    let mut iterations = 0;

    for i in 1..=cfg.max_iter {
        let x_lin = x_a.mean()?;
        let prev_gain = last.as_ref().map(|(_, inv)| &inv.k);
        let forward = match ws.forward_map(&x_a, &x_lin, prev_gain, i) {
            Ok((f, fl)) => {
                flags.extend(fl);
                f
            }
            Err(e) if is_numerical_failure(&e) && last.is_some() => {
                flags.push(Flag::GnmkDiverged {
                    time: window.0,
                    iterations,
                });
                stopped = true;
                break;
            }
            Err(e) => return Err(e),
        };
        if let Some((prev, _)) = &last {
            if same_affine_map(prev, &forward) {
                converged = true;
                break;
            }
        }
        let y_l = forecast_obs(&forward)?;
        let (inverse, fl) = ws.inverse_map(&xf, &y_l)?;
        flags.extend(fl);
        let next = update(&y_l, &inverse.k)?;
        let mean = next.mean()?;
        if mean.iter().any(|v| !v.is_finite()) {
            flags.push(Flag::GnmkDiverged {
                time: window.0,
                iterations,
            });
            stopped = true;
            break;
        }
        let err = rel_change(&mean, &mean_prev);
        if errors.last().is_some_and(|&prev| err > prev) {
            increases += 1;
        } else {
            increases = 0;
        }
        errors.push(err);
        lin_points.push(x_lin);
        x_a = next;
        mean_prev = mean;
        last = Some((forward, inverse));
        iterations = i;
        if err < cfg.tol {
            converged = true;
            break;
        }
        if increases >= cfg.divergence_window {
            flags.push(Flag::GnmkDiverged {
                time: window.0,
                iterations,
            });
            stopped = true;
            break;
        }
    }
    if !converged && !stopped {
        flags.push(Flag::GnmkNotConverged {
            time: window.0,
            iterations,
        });
    }
    let (forward, inverse) =
        last.ok_or_else(|| Error::InvalidArgument("no GNMK iteration completed".into()))?;
    Ok(GnmkResult {
        posterior: x_a,
        iterations,
        errors,
        lin_points,
        forward,
        inverse,
        converged,
        flags,
    })
}
