//! Relevance vector machine: sparse Bayesian linear regression by evidence maximization.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Flag, Result};
use crate::exec::{try_map_range, Execution};
use crate::pce::{BasisKind, MultiIndexSet, PCExpansion};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RvmConfig {
    pub max_iter: usize,
    /// Relative change of the log evidence below which the fit is considered converged.
    pub tol: f64,
    pub noise_floor: f64,
    /// Precision (in column-normalized units) above which a weight is removed.
    pub prune_threshold: f64,
    pub estimate_noise: bool,
    /// Initial noise variance; the fixed value when `estimate_noise` is off.
    pub noise_var: Option<f64>,
}

impl Default for RvmConfig {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            tol: 1e-9,
            noise_floor: 1e-12,
            prune_threshold: 1e12,
            estimate_noise: true,
            noise_var: None,
        }
    }
}

impl RvmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 || !(self.tol > 0.0) || !(self.prune_threshold > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "invalid RVM configuration {self:?}"
            )));
        }
        if !(self.noise_floor > 0.0) {
            return Err(Error::InvalidArgument(
                "noise_floor must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Monotonicity slack on the evidence trace, relative to `1 + |L|`.
pub const EVIDENCE_SLACK: f64 = 1e-10;

/// Relative precision change below which hyperparameters count as settled.
const ALPHA_RTOL: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct RvmResult {
    /// Posterior mean weights; exactly zero outside the active set.
    pub weights: DVector<f64>,
    /// Prior precision per weight (`inf` when pruned), in the units of the design.
    pub precisions: DVector<f64>,
    pub noise_var: f64,
    pub active_set: Vec<usize>,
    /// Posterior covariance of the active weights, ordered as `active_set`.
    pub posterior_cov: DMatrix<f64>,
    pub log_evidence_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub flags: Vec<Flag>,
}

impl RvmResult {
    pub fn log_evidence(&self) -> f64 {
        *self.log_evidence_trace.last().unwrap_or(&f64::NEG_INFINITY)
    }

    /// First iteration whose log evidence lies within `rel * (1 + |L_final|)` of the final value.
    pub fn evidence_settling_iteration(&self, rel: f64) -> usize {
        let last = self.log_evidence();
        let band = rel * (1.0 + last.abs());
        self.log_evidence_trace
            .iter()
            .position(|l| (l - last).abs() <= band)
            .unwrap_or(0)
    }
}

struct Posterior {
    sigma: DMatrix<f64>,
    mu: DVector<f64>,
    resid2: f64,
    log_ev: f64,
    rank_deficient: bool,
}

struct Problem<'a> {
    phi: &'a DMatrix<f64>,
    gram: DMatrix<f64>,
    proj: DVector<f64>,
    u: &'a DVector<f64>,
}

impl Problem<'_> {
    fn n(&self) -> usize {
        self.u.len()
    }

    fn posterior(&self, active: &[usize], alpha: &[f64], beta: f64) -> Posterior {
        let n = self.n() as f64;
        let k = active.len();
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        if k == 0 {
            let resid2 = self.u.norm_squared();
            let log_ev = -0.5 * (n * ln2pi - n * beta.ln() + beta * resid2);
            return Posterior {
                sigma: DMatrix::zeros(0, 0),
                mu: DVector::zeros(0),
                resid2,
                log_ev,
                rank_deficient: false,
            };
        }
        let mut prec = DMatrix::from_fn(k, k, |i, j| beta * self.gram[(active[i], active[j])]);
        for (i, &a) in active.iter().enumerate() {
            prec[(i, i)] += alpha[a];
        }
        let rhs = DVector::from_fn(k, |i, _| beta * self.proj[active[i]]);
        let (sigma, logdet_prec, rank_deficient) = match prec.clone().cholesky() {
            Some(ch) => {
                let logdet = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
                (ch.inverse(), logdet, false)
            }
            None => {
                let eig = crate::linalg::symmetrize(&prec).symmetric_eigen();
                let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
                let cut = top * 1e-14;
                let inv = eig.eigenvalues.map(|v| if v > cut { 1.0 / v } else { 0.0 });
                let logdet = eig.eigenvalues.iter().map(|v| v.max(cut).ln()).sum::<f64>();
                let v = &eig.eigenvectors;
                (
                    v * DMatrix::from_diagonal(&inv) * v.transpose(),
                    logdet,
                    true,
                )
            }
        };
        let mu = &sigma * rhs;
        let mut r = self.u.clone();
        for (i, &a) in active.iter().enumerate() {
            r.axpy(-mu[i], &self.phi.column(a), 1.0);
        }
        let resid2 = r.norm_squared();
        let log_alpha: f64 = active.iter().map(|&a| alpha[a].ln()).sum();
        let mu_a_mu: f64 = active
            .iter()
            .enumerate()
            .map(|(i, &a)| alpha[a] * mu[i] * mu[i])
            .sum();
        let log_ev =
            -0.5 * (n * ln2pi - n * beta.ln() - log_alpha + logdet_prec + beta * resid2 + mu_a_mu);
        Posterior {
            sigma,
            mu,
            resid2,
            log_ev,
            rank_deficient,
        }
    }
}

/// Fit `targets ≈ design · w` with per-weight precision hyperparameters.
pub fn rvm_fit(
    design: &DMatrix<f64>,
    targets: &DVector<f64>,
    cfg: &RvmConfig,
) -> Result<RvmResult> {
    cfg.validate()?;
    let (n, p) = design.shape();
    if targets.len() != n {
        return Err(Error::dim("RVM targets", n, targets.len()));
    }
    if n == 0 || p == 0 {
        return Err(Error::InvalidArgument("empty design matrix".into()));
    }
    if design.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite regression data".into()));
    }

    // Work with unit-RMS columns so precisions are comparable across features.
    let scale: Vec<f64> = design
        .column_iter()
        .map(|c| (c.norm_squared() / n as f64).sqrt())
        .collect();
    let phi = DMatrix::from_fn(n, p, |i, j| {
        if scale[j] > 0.0 {
            design[(i, j)] / scale[j]
        } else {
            0.0
        }
    });
    let prob = Problem {
        gram: phi.transpose() * &phi,
        proj: phi.transpose() * targets,
        phi: &phi,
        u: targets,
    };

    let uu = targets.norm_squared();
    let nf = n as f64;
    let mean_u = targets.mean();
    let var_u = (uu / nf - mean_u * mean_u).max(0.0);
    let floor = cfg.noise_floor;
    let mut sigma2 = cfg
        .noise_var
        .unwrap_or_else(|| (0.1 * var_u).max(1e-6 * uu / nf))
        .max(floor);
    let mut flags = Vec::new();

    let mut alpha = vec![f64::INFINITY; p];
    let mut active: Vec<usize> = (0..p).filter(|&j| scale[j] > 0.0).collect();
    if uu == 0.0 {
        active.clear();
        sigma2 = if cfg.estimate_noise { floor } else { sigma2 };
    }
    let alpha0 = if uu > 0.0 { nf / uu } else { 1.0 };
    for &j in &active {
        alpha[j] = alpha0;
    }

    let mut post = prob.posterior(&active, &alpha, 1.0 / sigma2);
    let mut trace = vec![post.log_ev];
    let mut converged = active.is_empty();
    let mut iterations = 0;

    while !converged && iterations < cfg.max_iter {
        iterations += 1;
        let gamma: Vec<f64> = active
            .iter()
            .enumerate()
            .map(|(i, &a)| 1.0 - alpha[a] * post.sigma[(i, i)])
            .collect();
        let sum_gamma: f64 = gamma.iter().sum();

        let mut mackay = alpha.clone();
        let mut em = alpha.clone();
        for (i, &a) in active.iter().enumerate() {
            let m2 = post.mu[i] * post.mu[i];
            mackay[a] = if m2 > 0.0 {
                (gamma[i].max(0.0) / m2).max(f64::MIN_POSITIVE)
            } else {
                f64::INFINITY
            };
            em[a] = 1.0 / (m2 + post.sigma[(i, i)]);
        }
        let (s2_mackay, s2_em) = if cfg.estimate_noise {
            let dof = nf - sum_gamma;
            let mk = if dof > 0.0 { post.resid2 / dof } else { floor };
            let e = (post.resid2 + sigma2 * sum_gamma) / nf;
            (mk.max(floor), e.max(floor))
        } else {
            (sigma2, sigma2)
        };

        let slack = EVIDENCE_SLACK * (1.0 + post.log_ev.abs());
        let mut accepted = None;
        for (cand, s2) in [(&mackay, s2_mackay), (&em, s2_em)] {
            let kept: Vec<usize> = active
                .iter()
                .copied()
                .filter(|&a| cand[a] <= cfg.prune_threshold)
                .collect();
            let cp = prob.posterior(&kept, cand, 1.0 / s2);
            if cp.log_ev.is_finite() && cp.log_ev >= post.log_ev - slack {
                accepted = Some((cand.clone(), s2, kept, cp));
                break;
            }
        }
        let (new_alpha, new_s2, new_active, new_post) = match accepted {
            Some(a) => a,
            None => {
                let mut capped = em.clone();
                for &a in &active {
                    capped[a] = capped[a].min(cfg.prune_threshold);
                }
                let cp = prob.posterior(&active, &capped, 1.0 / s2_em);
                (capped, s2_em, active.clone(), cp)
            }
        };

        let d_ev = (new_post.log_ev - post.log_ev).abs();
        let same_set = new_active == active;
        let alpha_settled = new_active
            .iter()
            .all(|&a| (new_alpha[a] / alpha[a]).ln().abs() <= ALPHA_RTOL);
        let noise_settled = (new_s2 / sigma2).ln().abs() <= ALPHA_RTOL;
        for &a in &active {
            if !new_active.contains(&a) {
                alpha[a] = f64::INFINITY;
            }
        }
        for &a in &new_active {
            alpha[a] = new_alpha[a];
        }
        sigma2 = new_s2;
        active = new_active;
        post = new_post;
        trace.push(post.log_ev);
        converged = d_ev <= cfg.tol * (1.0 + post.log_ev.abs())
            && same_set
            && alpha_settled
            && noise_settled;
    }

    if !converged {
        flags.push(Flag::RvmNotConverged { iterations });
    }
    if post.rank_deficient {
        flags.push(Flag::RankDeficient {
            context: "RVM posterior precision".into(),
        });
    }

    let mut weights = DVector::zeros(p);
    let mut precisions = DVector::from_element(p, f64::INFINITY);
    for (i, &a) in active.iter().enumerate() {
        weights[a] = post.mu[i] / scale[a];
        precisions[a] = alpha[a] * scale[a] * scale[a];
    }
    let k = active.len();
    let posterior_cov = DMatrix::from_fn(k, k, |i, j| {
        post.sigma[(i, j)] / (scale[active[i]] * scale[active[j]])
    });

    Ok(RvmResult {
        weights,
        precisions,
        noise_var: sigma2,
        active_set: active,
        posterior_cov,
        log_evidence_trace: trace,
        iterations,
        converged,
        flags,
    })
}

/// Predictive mean and variance at a feature vector.
pub fn rvm_predict(result: &RvmResult, features: &DVector<f64>) -> (f64, f64) {
    let mean = features.dot(&result.weights);
    let fa = DVector::from_fn(result.active_set.len(), |i, _| {
        features[result.active_set[i]]
    });
    let var = result.noise_var + (fa.transpose() * &result.posterior_cov * &fa)[(0, 0)].max(0.0);
    (mean, var)
}

/// One RVM per target column on a shared design; returns coefficients (targets × features).
pub fn fit_columns(
    design: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    cfg: &RvmConfig,
) -> Result<(DMatrix<f64>, Vec<RvmResult>)> {
    if design.nrows() != targets.nrows() {
        return Err(Error::dim(
            "paired sample count",
            design.nrows(),
            targets.nrows(),
        ));
    }
    let results = try_map_range(Execution::default(), targets.ncols(), |k| {
        rvm_fit(design, &targets.column(k).into_owned(), cfg)
    })?;
    let coeffs = DMatrix::from_fn(targets.ncols(), design.ncols(), |r, c| {
        results[r].weights[c]
    });
    Ok((coeffs, results))
}

/// Sparse regression of state samples onto a polynomial basis of germ samples.
#[derive(Debug, Clone)]
pub struct PceFit {
    pub expansion: PCExpansion,
    pub results: Vec<RvmResult>,
}

impl PceFit {
    /// Estimated regression noise variance per state component.
    pub fn noise_var(&self) -> DVector<f64> {
        DVector::from_iterator(self.results.len(), self.results.iter().map(|r| r.noise_var))
    }

    pub fn flags(&self) -> Vec<Flag> {
        self.results.iter().flat_map(|r| r.flags.clone()).collect()
    }
}

pub fn fit_pce_detailed(
    germ_samples: &DMatrix<f64>,
    state_samples: &DMatrix<f64>,
    basis: BasisKind,
    index_set: MultiIndexSet,
    cfg: &RvmConfig,
) -> Result<PceFit> {
    if germ_samples.nrows() != state_samples.nrows() {
        return Err(Error::dim(
            "paired sample count",
            germ_samples.nrows(),
            state_samples.nrows(),
        ));
    }
    let design = basis.design(&index_set, germ_samples)?;
    let (coeffs, results) = fit_columns(&design, state_samples, cfg)?;
    let expansion = PCExpansion::new(coeffs, basis, index_set)?;
    Ok(PceFit { expansion, results })
}

pub fn fit_pce(
    germ_samples: &DMatrix<f64>,
    state_samples: &DMatrix<f64>,
    basis: BasisKind,
    index_set: MultiIndexSet,
    cfg: &RvmConfig,
) -> Result<PCExpansion> {
    Ok(fit_pce_detailed(germ_samples, state_samples, basis, index_set, cfg)?.expansion)
}
