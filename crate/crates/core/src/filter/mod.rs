//! Gauss–Markov–Kalman updates on polynomial chaos expansions, their iterated
//! Gauss–Newton form, and the smoothers built on top of them.

mod forecast;
mod gnmk;
mod smoother;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis_adapt::{fit_link, BasisPolicy};
use crate::error::{Error, Flag, Result};
use crate::linalg::{column_mean, pinv, psd_repair, PINV_RCOND};
use crate::pce::{GaussianDensity, PCExpansion};
use crate::sparse_bayes::{fit_columns, RvmConfig};

pub use forecast::{Forecaster, LinearForecaster, SystemForecaster};
pub use gnmk::{gnmk_iterate, GnmkResult, Measurement};
pub use smoother::{
    bias_correct, direct_smooth, ps1_smooth, ps2_smooth, smooth, smoothing_grid, SmootherKind,
    SmootherResult, SmoothingProblem, SmoothingStep,
};

/// Observation of selected state components corrupted by independent Gaussian noise.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementModel {
    selector: DMatrix<f64>,
    noise: GaussianDensity,
}

impl MeasurementModel {
    pub fn new(selector: DMatrix<f64>, noise: GaussianDensity) -> Result<Self> {
        if selector.nrows() != noise.dim() {
            return Err(Error::dim("noise dimension", selector.nrows(), noise.dim()));
        }
        if selector.nrows() > selector.ncols() {
            return Err(Error::InvalidArgument(
                "more observed components than state components".into(),
            ));
        }
        for r in 0..selector.nrows() {
            let row = selector.row(r);
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || ones + zeros != row.len() {
                return Err(Error::InvalidArgument(format!(
                    "selector row {r} is not a unit row"
                )));
            }
        }
        let g = selector.transpose() * &selector;
        if (0..g.nrows()).any(|k| g[(k, k)] > 1.0) {
            return Err(Error::InvalidArgument(
                "selector picks a component twice".into(),
            ));
        }
        if noise.mean.iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidArgument(
                "measurement noise must be zero-mean".into(),
            ));
        }
        Ok(Self { selector, noise })
    }

    /// Observe the components listed in `observed` of a `state_dim` vector.
    pub fn select(observed: &[usize], state_dim: usize, noise_cov: DMatrix<f64>) -> Result<Self> {
        let mut s = DMatrix::zeros(observed.len(), state_dim);
        for (r, &c) in observed.iter().enumerate() {
            if c >= state_dim {
                return Err(Error::InvalidArgument(format!(
                    "observed component {c} out of range"
                )));
            }
            s[(r, c)] = 1.0;
        }
        let noise = GaussianDensity::new(DVector::zeros(observed.len()), noise_cov)?;
        Self::new(s, noise)
    }

    pub fn identity(state_dim: usize, noise_cov: DMatrix<f64>) -> Result<Self> {
        let all: Vec<usize> = (0..state_dim).collect();
        Self::select(&all, state_dim, noise_cov)
    }

    pub fn selector(&self) -> &DMatrix<f64> {
        &self.selector
    }

    pub fn noise(&self) -> &GaussianDensity {
        &self.noise
    }

    pub fn obs_dim(&self) -> usize {
        self.selector.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.selector.ncols()
    }

    /// Noise as an order-1 expansion on germ block `offset..offset+m` of a `total` germ.
    pub fn noise_expansion(&self, offset: usize, total: usize) -> Result<PCExpansion> {
        PCExpansion::from_gaussian(&self.noise, offset, total)
    }
}

/// Affine surrogate `z ≈ H (x - x_lin) + h` of a forward map.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineForwardMap {
    pub h_mat: DMatrix<f64>,
    pub x_lin: DVector<f64>,
    pub h: DVector<f64>,
    /// Residual variance per output.
    pub eps_var: DVector<f64>,
}

impl AffineForwardMap {
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.h_mat * (x - &self.x_lin) + &self.h
    }

    /// Offset of the map written as `H x + c`.
    pub fn intercept(&self) -> DVector<f64> {
        &self.h - &self.h_mat * &self.x_lin
    }
}

/// Affine estimate `x ≈ K y + b` of the inverse map.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineInverseMap {
    pub k: DMatrix<f64>,
    pub b: DVector<f64>,
    pub eps_var: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MapMode {
    #[default]
    Projection,
    Bayes,
}

/// How the bias estimate undoes the re-assimilation gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BiasGain {
    /// `ē = (K H̊)^† E(x^f - x^a)`.
    #[default]
    Inverse,
    /// `ē = E(x^f - x^a)`, i.e. `K H̊ ≈ I`.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub map_mode: MapMode,
    pub pinv_rcond: f64,
    /// Pseudo-update step in hours.
    pub delta_tau: f64,
    pub bias_correct: bool,
    pub bias_gain: BiasGain,
    /// Trajectories integrated per forward-map estimate.
    pub map_samples: usize,
    /// Surrogate evaluations for moments, gains and germ reduction.
    pub moment_samples: usize,
    /// Basis of the forward-map surrogate; fixed-hermite uses state monomials.
    pub basis: BasisPolicy,
    pub order: u32,
    /// Consecutive error increases that count as divergence.
    pub divergence_window: usize,
    pub rvm: RvmConfig,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_iter: 100,
            map_mode: MapMode::Projection,
            pinv_rcond: PINV_RCOND,
            delta_tau: 6.0,
            bias_correct: true,
            bias_gain: BiasGain::Inverse,
            map_samples: 100,
            moment_samples: 2000,
            basis: BasisPolicy::Nmap,
            order: 4,
            divergence_window: 3,
            rvm: RvmConfig::default(),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("tol must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if !(self.delta_tau > 0.0) {
            return Err(Error::InvalidArgument("delta_tau must be positive".into()));
        }
        if !(self.pinv_rcond > 0.0 && self.pinv_rcond < 1.0) {
            return Err(Error::InvalidArgument(
                "pinv_rcond must lie in (0, 1)".into(),
            ));
        }
        if self.order < 1 {
            return Err(Error::InvalidArgument("order must be at least 1".into()));
        }
        if self.map_samples < 3 || self.moment_samples < 30 {
            return Err(Error::InvalidArgument("sample budgets too small".into()));
        }
        if self.divergence_window == 0 {
            return Err(Error::InvalidArgument(
                "divergence_window must be at least 1".into(),
            ));
        }
        self.rvm.validate()
    }
}

/// Forecast of the observation `y_f = S x + ε` on the germ of `x` followed by the noise germ.
pub fn forecast_measurement(x: &PCExpansion, model: &MeasurementModel) -> Result<PCExpansion> {
    if x.state_dim() != model.state_dim() {
        return Err(Error::dim("state", model.state_dim(), x.state_dim()));
    }
    let g = x.germ_dim();
    let total = g + model.obs_dim();
    let xe = x.embed(0, total)?;
    let noise = model.noise_expansion(g, total)?;
    let eye = DMatrix::identity(model.obs_dim(), model.obs_dim());
    PCExpansion::affine_combination(&[(model.selector(), &xe), (&eye, &noise)], None)
}

/// Posterior of a linear Gauss–Markov–Kalman update.
#[derive(Debug, Clone)]
pub struct GmkUpdate {
    pub posterior: PCExpansion,
    pub gain: DMatrix<f64>,
    pub flags: Vec<Flag>,
}

/// Extend `x` by trailing germ dimensions so it shares the germ of `y`.
fn align_germ(x: &PCExpansion, y: &PCExpansion) -> Result<PCExpansion> {
    match x.germ_dim().cmp(&y.germ_dim()) {
        std::cmp::Ordering::Equal => Ok(x.clone()),
        std::cmp::Ordering::Less => x.embed(0, y.germ_dim()),
        std::cmp::Ordering::Greater => Err(Error::GermCollision(format!(
            "observation germ ({}) smaller than state germ ({})",
            y.germ_dim(),
            x.germ_dim()
        ))),
    }
}

/// Kalman gain `C_xy C_y^†`, flagging truncation that leaves part of the innovation unexplained.
fn kalman_gain(
    cxy: &DMatrix<f64>,
    cy: &DMatrix<f64>,
    innovation: &DVector<f64>,
    rcond: f64,
    flags: &mut Vec<Flag>,
) -> DMatrix<f64> {
    let (cy_pinv, truncated) = pinv(cy, rcond);
    if truncated {
        let resid = innovation - cy * (&cy_pinv * innovation);
        if resid.norm() > 1e-12 * (1.0 + innovation.norm()) {
            flags.push(Flag::SingularUpdate);
        }
    }
    cxy * cy_pinv
}

/// `x_a = x_f + K (y_mes - y_f)` with `K = C_{x_f,y_f} C_{y_f}^†`.
pub fn gmk_update(
    x_f: &PCExpansion,
    y_f: &PCExpansion,
    y_mes: &DVector<f64>,
    pinv_rcond: f64,
) -> Result<GmkUpdate> {
    if y_mes.len() != y_f.state_dim() {
        return Err(Error::dim("measurement", y_f.state_dim(), y_mes.len()));
    }
    let xf = align_germ(x_f, y_f)?;
    let cxy = xf.cross_cov(y_f)?;
    let cy = y_f.cov()?;
    let mut flags = Vec::new();
    let innovation = y_mes - y_f.mean()?;
    let gain = kalman_gain(&cxy, &cy, &innovation, pinv_rcond, &mut flags);
    let eye = DMatrix::identity(xf.state_dim(), xf.state_dim());
    let neg = -&gain;
    let shift = &gain * y_mes;
    let posterior = PCExpansion::affine_combination(&[(&eye, &xf), (&neg, y_f)], Some(&shift))?;
    Ok(GmkUpdate {
        posterior,
        gain,
        flags,
    })
}

fn residual_variance(cz: &DMatrix<f64>, h: &DMatrix<f64>, czx: &DMatrix<f64>) -> DVector<f64> {
    (cz - h * czx.transpose()).diagonal().map(|v| v.max(0.0))
}

/// `H̊ = C_{z,x} C_x^†` and the offset that makes the map unbiased at the mean.
pub fn estimate_forward_map_projection(
    x: &PCExpansion,
    z: &PCExpansion,
    x_lin: &DVector<f64>,
    pinv_rcond: f64,
) -> Result<(AffineForwardMap, Vec<Flag>)> {
    let cx = x.cov()?;
    let czx = z.cross_cov(x)?;
    let cz = z.cov()?;
    let (mx, mz) = (x.mean()?, z.mean()?);
    forward_from_moments(&cx, &czx, &cz, &mx, &mz, x_lin, pinv_rcond)
}

/// As [`estimate_forward_map_projection`] with moments taken from paired samples (rows).
pub fn estimate_forward_map_samples(
    x_samples: &DMatrix<f64>,
    z_samples: &DMatrix<f64>,
    x_lin: &DVector<f64>,
    pinv_rcond: f64,
) -> Result<(AffineForwardMap, Vec<Flag>)> {
    if x_samples.nrows() != z_samples.nrows() {
        return Err(Error::dim(
            "paired samples",
            x_samples.nrows(),
            z_samples.nrows(),
        ));
    }
    let (mx, mz) = (column_mean(x_samples), column_mean(z_samples));
    let n = x_samples.nrows() as f64;
    let xc = centered(x_samples, &mx);
    let zc = centered(z_samples, &mz);
    let cx = xc.transpose() * &xc / n;
    let czx = zc.transpose() * &xc / n;
    let cz = zc.transpose() * &zc / n;
    forward_from_moments(&cx, &czx, &cz, &mx, &mz, x_lin, pinv_rcond)
}

/// Projection estimate through a polynomial surrogate of the forward map.
///
/// `z_samples` are the observations of `x.eval_many(germ)`. They are regressed on an
/// NMAP (or MGS, when `cfg.basis` asks for it) basis in the standardized state, and
/// `H̊` is taken from the surrogate's moments over `moment_germ`.
pub fn estimate_forward_map_surrogate(
    x: &PCExpansion,
    germ: &DMatrix<f64>,
    z_samples: &DMatrix<f64>,
    x_lin: &DVector<f64>,
    moment_germ: &DMatrix<f64>,
    cfg: &FilterConfig,
    seed: u64,
) -> Result<(AffineForwardMap, Vec<Flag>)> {
    if germ.nrows() != z_samples.nrows() {
        return Err(Error::dim(
            "paired samples",
            germ.nrows(),
            z_samples.nrows(),
        ));
    }
    let sd = x.variance()?.map(|v| if v > 0.0 { v.sqrt() } else { 1.0 });
    let scale = DMatrix::from_diagonal(&sd.map(|v| 1.0 / v));
    let shift = -(&scale * x_lin);
    let anchor = Arc::new(x.transform(&scale, Some(&shift))?);
    let anchor_states = anchor.eval_many(germ)?;
    let policy = match cfg.basis {
        BasisPolicy::Mgs => BasisPolicy::Mgs,
        _ => BasisPolicy::Nmap,
    };
    let link = fit_link(
        policy,
        &anchor,
        &anchor_states,
        z_samples,
        cfg.order,
        &cfg.rvm,
        cfg.moment_samples,
        seed,
    )?;
    let xm = x.eval_many(moment_germ)?;
    let zm = link.expansion.eval_many(moment_germ)?;
    let (map, mut flags) = estimate_forward_map_samples(&xm, &zm, x_lin, cfg.pinv_rcond)?;
    flags.extend(link.flags);
    Ok((map, flags))
}

fn centered(samples: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut c = samples.clone();
    for mut row in c.row_iter_mut() {
        row -= mean.transpose();
    }
    c
}

fn forward_from_moments(
    cx: &DMatrix<f64>,
    czx: &DMatrix<f64>,
    cz: &DMatrix<f64>,
    mx: &DVector<f64>,
    mz: &DVector<f64>,
    x_lin: &DVector<f64>,
    pinv_rcond: f64,
) -> Result<(AffineForwardMap, Vec<Flag>)> {
    if x_lin.len() != mx.len() {
        return Err(Error::dim("linearization point", mx.len(), x_lin.len()));
    }
    let (cx_pinv, truncated) = pinv(cx, pinv_rcond);
    let mut flags = Vec::new();
    if truncated {
        flags.push(Flag::RankDeficient {
            context: "forward map state covariance".into(),
        });
    }
    let h_mat = czx * cx_pinv;
    let h = mz - &h_mat * (mx - x_lin);
    let eps_var = residual_variance(cz, &h_mat, czx);
    Ok((
        AffineForwardMap {
            h_mat,
            x_lin: x_lin.clone(),
            h,
            eps_var,
        },
        flags,
    ))
}

fn affine_design(samples: &DMatrix<f64>, shift: &DVector<f64>) -> DMatrix<f64> {
    let n = samples.nrows();
    let d = samples.ncols();
    DMatrix::from_fn(n, d + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            samples[(i, j - 1)] - shift[j - 1]
        }
    })
}

/// Per-output sparse Bayesian regression of `z - H₀ (x - x_lin)` on `[1, x - x_lin]`.
pub fn estimate_forward_map_bayes(
    x_samples: &DMatrix<f64>,
    z_samples: &DMatrix<f64>,
    x_lin: &DVector<f64>,
    prior_mean_h: &DMatrix<f64>,
    cfg: &RvmConfig,
) -> Result<(AffineForwardMap, Vec<Flag>)> {
    let (n, d) = x_samples.shape();
    let m = z_samples.ncols();
    if z_samples.nrows() != n {
        return Err(Error::dim("paired samples", n, z_samples.nrows()));
    }
    if n < d + 2 {
        return Err(Error::TooFewSamples {
            need: d + 2,
            got: n,
        });
    }
    if prior_mean_h.shape() != (m, d) {
        return Err(Error::dim("prior Jacobian rows", m, prior_mean_h.nrows()));
    }
    let design = affine_design(x_samples, x_lin);
    let dx = design.columns(1, d);
    let resid = z_samples - dx * prior_mean_h.transpose();
    let (coeffs, results) = fit_columns(&design, &resid, cfg)?;
    let h = coeffs.column(0).into_owned();
    let h_mat = prior_mean_h + coeffs.columns(1, d);
    let eps_var = DVector::from_iterator(m, results.iter().map(|r| r.noise_var));
    let flags = results.into_iter().flat_map(|r| r.flags).collect();
    Ok((
        AffineForwardMap {
            h_mat,
            x_lin: x_lin.clone(),
            h,
            eps_var,
        },
        flags,
    ))
}

/// Projection estimate `K = C_{x,y} C_y^†`, `b = E x - K E y`.
pub fn estimate_inverse_map_projection(
    x_f: &PCExpansion,
    y: &PCExpansion,
    pinv_rcond: f64,
) -> Result<(AffineInverseMap, Vec<Flag>)> {
    let xf = align_germ(x_f, y)?;
    let cxy = xf.cross_cov(y)?;
    let cy = y.cov()?;
    let (cy_pinv, truncated) = pinv(&cy, pinv_rcond);
    let mut flags = Vec::new();
    if truncated {
        flags.push(Flag::RankDeficient {
            context: "observation covariance".into(),
        });
    }
    let k = &cxy * cy_pinv;
    let b = xf.mean()? - &k * y.mean()?;
    let eps_var = residual_variance(&xf.cov()?, &k, &cxy);
    Ok((AffineInverseMap { k, b, eps_var }, flags))
}

/// Per-component sparse Bayesian regression of `x` on `[1, y]` from paired samples.
pub fn estimate_inverse_map_bayes(
    x_samples: &DMatrix<f64>,
    y_samples: &DMatrix<f64>,
    cfg: &RvmConfig,
) -> Result<(AffineInverseMap, Vec<Flag>)> {
    let (n, m) = y_samples.shape();
    if x_samples.nrows() != n {
        return Err(Error::dim("paired samples", n, x_samples.nrows()));
    }
    if n < m + 2 {
        return Err(Error::TooFewSamples {
            need: m + 2,
            got: n,
        });
    }
    let design = affine_design(y_samples, &DVector::zeros(m));
    let (coeffs, results) = fit_columns(&design, x_samples, cfg)?;
    let b = coeffs.column(0).into_owned();
    let k = coeffs.columns(1, m).into_owned();
    let eps_var = DVector::from_iterator(x_samples.ncols(), results.iter().map(|r| r.noise_var));
    let flags = results.into_iter().flat_map(|r| r.flags).collect();
    Ok((AffineInverseMap { k, b, eps_var }, flags))
}

/// Posterior covariance of `x_a = x_f + K (y_m - y_f)` with `K = C_{x_f,y_f} C_{y_f}^†` and
/// `y_m` independent of `(x_f, y_f)`: `C_f + K (C_m - C_y) Kᵀ`.
pub fn posterior_cov_rv(
    c_xf: &DMatrix<f64>,
    c_xy: &DMatrix<f64>,
    c_y: &DMatrix<f64>,
    c_meas: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, Vec<Flag>)> {
    let d = c_xf.nrows();
    let m = c_y.nrows();
    if c_xf.ncols() != d || c_xy.shape() != (d, m) || c_y.ncols() != m || c_meas.shape() != (m, m) {
        return Err(Error::dim("covariance blocks", m, c_meas.nrows()));
    }
    let (cy_pinv, _) = pinv(c_y, PINV_RCOND);
    let k = c_xy * cy_pinv;
    let raw = c_xf + &k * (c_meas - c_y) * k.transpose();
    let (cov, clamped) = psd_repair(&raw)?;
    let flags = if clamped {
        vec![Flag::PsdClamped {
            context: "random-variable posterior covariance".into(),
        }]
    } else {
        Vec::new()
    };
    Ok((cov, flags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pce::total_degree_index_set;

    fn scalar_prior() -> PCExpansion {
        let set = total_degree_index_set(1, 1).unwrap();
        PCExpansion::hermite(DMatrix::from_row_slice(1, 2, &[0.0, 1.0]), set).unwrap()
    }

    #[test]
    fn scalar_kalman_example() {
        let x = scalar_prior();
        let noise = GaussianDensity::new(
            DVector::from_element(1, 0.0),
            DMatrix::from_element(1, 1, 0.25),
        )
        .unwrap();
        let model = MeasurementModel::new(DMatrix::from_element(1, 1, 1.0), noise).unwrap();
        let y = forecast_measurement(
            &x.transform(&DMatrix::from_element(1, 1, 2.0), None)
                .unwrap(),
            &model,
        )
        .unwrap();
        let u = gmk_update(&x, &y, &DVector::from_element(1, 1.0), PINV_RCOND).unwrap();
        let k = 2.0 / 4.25;
        assert!((u.gain[(0, 0)] - k).abs() < 1e-12);
        assert!((u.posterior.mean().unwrap()[0] - k).abs() < 1e-12);
        assert!((u.posterior.variance().unwrap()[0] - (1.0 - 2.0 * k)).abs() < 1e-12);
    }

    #[test]
    fn forecast_cross_covariance_is_selector() {
        let set = total_degree_index_set(2, 1).unwrap();
        let x = PCExpansion::hermite(
            DMatrix::from_row_slice(2, 3, &[1.0, 0.5, 0.2, -1.0, 0.1, 0.9]),
            set,
        )
        .unwrap();
        let model = MeasurementModel::select(&[1], 2, DMatrix::from_element(1, 1, 0.3)).unwrap();
        let y = forecast_measurement(&x, &model).unwrap();
        let xe = x.embed(0, 3).unwrap();
        let cxy = xe.cross_cov(&y).unwrap();
        let expect = x.cov().unwrap() * model.selector().transpose();
        assert!((cxy - expect).norm() < 1e-14);
        assert!((y.variance().unwrap()[0] - (0.01 + 0.81 + 0.3)).abs() < 1e-12);
    }

    #[test]
    fn constant_state_forecast() {
        let x = PCExpansion::constant(&DVector::from_vec(vec![2.0, 3.0]), 1).unwrap();
        let model =
            MeasurementModel::identity(2, DMatrix::from_diagonal_element(2, 2, 0.5)).unwrap();
        let y = forecast_measurement(&x, &model).unwrap();
        assert_eq!(y.mean().unwrap(), DVector::from_vec(vec![2.0, 3.0]));
        assert!((y.variance().unwrap() - DVector::from_element(2, 0.5)).norm() < 1e-14);
    }

    #[test]
    fn selector_validation() {
        let noise = GaussianDensity::standard(1);
        assert!(
            MeasurementModel::new(DMatrix::from_row_slice(1, 2, &[0.5, 0.5]), noise.clone())
                .is_err()
        );
        assert!(MeasurementModel::select(&[3], 2, DMatrix::identity(1, 1)).is_err());
    }

    #[test]
    fn projection_recovers_linear_map() {
        let set = total_degree_index_set(3, 2).unwrap();
        let mut c = DMatrix::zeros(3, set.len());
        for k in 0..3 {
            c[(k, k + 1)] = 1.0 + k as f64;
        }
        c[(0, 5)] = 0.3;
        let x = PCExpansion::hermite(c, set).unwrap();
        let h = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 0.0, 3.0, 1.0]);
        let off = DVector::from_vec(vec![1.0, -1.0]);
        let z = x.transform(&h, Some(&off)).unwrap();
        let x_lin = DVector::from_vec(vec![0.1, 0.2, 0.3]);
        let (map, _) = estimate_forward_map_projection(&x, &z, &x_lin, PINV_RCOND).unwrap();
        assert!((&map.h_mat - &h).norm() < 1e-10);
        assert!((map.apply(&x.mean().unwrap()) - z.mean().unwrap()).norm() < 1e-12);
    }

    #[test]
    fn projection_of_constant_map() {
        let x = scalar_prior();
        let z = PCExpansion::constant(&DVector::from_element(1, 4.0), 1).unwrap();
        let (map, _) =
            estimate_forward_map_projection(&x, &z, &DVector::from_element(1, 0.0), PINV_RCOND)
                .unwrap();
        assert_eq!(map.h_mat[(0, 0)], 0.0);
        assert_eq!(map.h[0], 4.0);
    }

    #[test]
    fn rv_covariance_examples() {
        let c = DMatrix::from_element(1, 1, 1.0);
        let (p, _) = posterior_cov_rv(&c, &c, &c, &DMatrix::zeros(1, 1)).unwrap();
        assert!(p[(0, 0)].abs() < 1e-14);
        let cf = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let cxy = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.1, 0.5]);
        let cy = DMatrix::from_row_slice(2, 2, &[1.5, 0.1, 0.1, 0.7]);
        let (p, _) = posterior_cov_rv(&cf, &cxy, &cy, &cy).unwrap();
        assert!((p - cf).norm() < 1e-12);
    }
}
