//! Time-adaptive bases: MGS orthonormalization, nonlinear-map monomials, marginal
//! CDF estimation, the Nataf transform and Hermite re-expansion.

mod adaptive;
mod cdf;
mod nataf;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Flag, Result};
use crate::linalg::{column_mean, sample_cov, sqrt_factor};
use crate::pce::{monomial_design, total_degree_index_set, BasisKind, PCExpansion};
use crate::sparse_bayes::{fit_pce_detailed, RvmConfig};

pub use adaptive::{
    fit_link, AdaptiveBasisState, AdaptiveConfig, AdaptivePropagator, BasisPolicy, LinkFit,
    PropagationStep,
};
pub use cdf::{fit_cdf, isj_bandwidth, quantile_sorted, silverman_bandwidth, EmpiricalCdf};
pub use nataf::{nataf_apply, nataf_fit, NatafTransform};

/// Ratio of residual to original column norm below which a column counts as collinear.
pub const MGS_DROP_RATIO: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct MgsResult {
    /// Orthonormal columns, `features[:, kept] · transform`.
    pub orthonormal: DMatrix<f64>,
    /// Upper-triangular map from the kept feature columns to the orthonormal ones.
    pub transform: DMatrix<f64>,
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
}

impl MgsResult {
    pub fn flags(&self) -> Vec<Flag> {
        if self.dropped.is_empty() {
            Vec::new()
        } else {
            vec![Flag::CollinearColumns {
                dropped: self.dropped.clone(),
            }]
        }
    }
}

/// Modified Gram–Schmidt with one re-orthogonalization pass under the
/// empirical inner product `⟨a, b⟩ = aᵀb / N`.
pub fn mgs_orthonormalize(features: &DMatrix<f64>) -> Result<MgsResult> {
    let (n, p) = features.shape();
    if n <= p {
        return Err(Error::TooFewSamples {
            need: p + 1,
            got: n,
        });
    }
    let nf = n as f64;
    let ip = |a: &DVector<f64>, b: &DVector<f64>| a.dot(b) / nf;
    let mut q: Vec<DVector<f64>> = Vec::with_capacity(p);
    let mut r_cols: Vec<DVector<f64>> = Vec::with_capacity(p);
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..p {
        let orig = features.column(j).into_owned();
        let orig_norm = ip(&orig, &orig).sqrt();
        let mut v = orig.clone();
        let mut r = DVector::zeros(p);
        for _pass in 0..2 {
            for (k, qk) in q.iter().enumerate() {
                let c = ip(qk, &v);
                r[k] += c;
                v.axpy(-c, qk, 1.0);
            }
        }
        let norm = ip(&v, &v).sqrt();
        if orig_norm == 0.0 || norm <= MGS_DROP_RATIO * orig_norm {
            dropped.push(j);
            continue;
        }
        r[q.len()] = norm;
        q.push(v / norm);
        r_cols.push(r);
        kept.push(j);
    }
    let k = q.len();
    let r = DMatrix::from_fn(k, k, |i, j| r_cols[j][i]);
    let mut transform = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::Degenerate("singular MGS triangle".into()))?;
    let mut orthonormal = DMatrix::from_fn(n, k, |i, j| q[j][i]);
    for j in 0..k {
        let col = transform.column(j);
        let big = col
            .iter()
            .cloned()
            .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if big < 0.0 {
            transform.column_mut(j).neg_mut();
            orthonormal.column_mut(j).neg_mut();
        }
    }
    Ok(MgsResult {
        orthonormal,
        transform,
        kept,
        dropped,
    })
}

/// All total-degree monomials of the anchor state, in graded-lexicographic order.
pub fn build_nmap_features(anchor_samples: &DMatrix<f64>, order: u32) -> Result<DMatrix<f64>> {
    if order < 1 {
        return Err(Error::InvalidArgument(
            "NMAP order must be at least 1".into(),
        ));
    }
    let set = total_degree_index_set(anchor_samples.ncols(), order)?;
    monomial_design(&set, anchor_samples)
}

/// Hermite expansion of the states in the Nataf variables `θ`.
pub fn reexpand_hermite(
    state_samples: &DMatrix<f64>,
    theta_samples: &DMatrix<f64>,
    order: u32,
    cfg: &RvmConfig,
) -> Result<PCExpansion> {
    let set = total_degree_index_set(theta_samples.ncols(), order)?;
    Ok(fit_pce_detailed(theta_samples, state_samples, BasisKind::Hermite, set, cfg)?.expansion)
}

/// Result of replacing an expansion's germ by a state-dimensional Nataf germ.
#[derive(Debug, Clone)]
pub struct GermReduction {
    pub expansion: PCExpansion,
    pub nataf: NatafTransform,
    pub flags: Vec<Flag>,
}

/// Re-express `x` as a Hermite expansion over a fresh germ of dimension `state_dim`.
///
/// Samples of `x` are mapped through a fitted Nataf transform and regressed on Hermite
/// polynomials of order `order`. The result is then affinely corrected so that its mean
/// and covariance equal those of `x` (exact for Hermite/MGS inputs, sample moments otherwise).
pub fn reduce_germ(
    x: &PCExpansion,
    n_samples: usize,
    order: u32,
    cfg: &RvmConfig,
    seed: u64,
) -> Result<GermReduction> {
    let germ = crate::pce::sample_germ(n_samples, x.germ_dim(), seed);
    let states = x.eval_many(&germ)?;
    let (mean, cov) = match (x.mean(), x.cov()) {
        (Ok(m), Ok(c)) => (m, c),
        _ => (column_mean(&states), sample_cov(&states)),
    };
    reduce_samples(&states, &mean, &cov, order, cfg)
}

/// As [`reduce_germ`] for raw state samples with prescribed target moments.
pub fn reduce_samples(
    states: &DMatrix<f64>,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    order: u32,
    cfg: &RvmConfig,
) -> Result<GermReduction> {
    let nataf = nataf_fit(states)?;
    let mut flags = nataf.flags();
    let theta = nataf.apply(states)?;
    let set = total_degree_index_set(theta.ncols(), order)?;
    let fit = fit_pce_detailed(&theta, states, BasisKind::Hermite, set, cfg)?;
    flags.extend(fit.flags());
    let fitted = fit.expansion;
    let fm = fitted.mean()?;
    let fc = fitted.cov()?;
    let expansion = match (sqrt_factor(cov), fc.clone().cholesky()) {
        (Ok(lt), Some(ch)) => {
            let lf_inv = ch
                .l()
                .solve_lower_triangular(&DMatrix::identity(fc.nrows(), fc.nrows()))
                .expect("nonsingular Cholesky factor");
            let a = lt * lf_inv;
            let shift = mean - &a * &fm;
            fitted.transform(&a, Some(&shift))?
        }
        _ => {
            flags.push(Flag::RankDeficient {
                context: "germ reduction moment correction".into(),
            });
            fitted
        }
    };
    Ok(GermReduction {
        expansion,
        nataf,
        flags,
    })
}

pub const KL_MIN_SAMPLES: usize = 100;

/// Kullback–Leibler divergence `KL(p_approx ‖ p_validation)` from kernel densities
/// evaluated on a shared grid.
pub fn kl_check(approx_samples: &[f64], validation_samples: &[f64]) -> Result<f64> {
    const GRID: usize = 1024;
    if approx_samples.len() < KL_MIN_SAMPLES || validation_samples.len() < KL_MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            need: KL_MIN_SAMPLES,
            got: approx_samples.len().min(validation_samples.len()),
        });
    }
    if approx_samples.iter().any(|v| !v.is_finite()) {
        return Ok(f64::INFINITY);
    }
    if validation_samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(f64::NAN));
    }
    let sort = |s: &[f64]| {
        let mut v = s.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
        v
    };
    let a = sort(approx_samples);
    let b = sort(validation_samples);
    let bw = |s: &[f64]| {
        let h = silverman_bandwidth(s);
        if h > 0.0 {
            h
        } else {
            1e-6 * (1.0 + s[0].abs())
        }
    };
    let (ha, hb) = (bw(&a), bw(&b));
    let lo = a[0].min(b[0]) - 4.0 * ha.max(hb);
    let hi = a[a.len() - 1].max(b[b.len() - 1]) + 4.0 * ha.max(hb);
    let dx = (hi - lo) / (GRID - 1) as f64;
    let mut pa: Vec<f64> = (0..GRID)
        .map(|k| cdf::kernel_pdf(&a, ha, lo + k as f64 * dx))
        .collect();
    let mut pb: Vec<f64> = (0..GRID)
        .map(|k| cdf::kernel_pdf(&b, hb, lo + k as f64 * dx))
        .collect();
    for p in [&mut pa, &mut pb] {
        let peak = p.iter().cloned().fold(0.0, f64::max);
        let floor = 1e-10 * peak;
        p.iter_mut().for_each(|v| *v = v.max(floor));
        let mass: f64 = p.iter().sum::<f64>() * dx;
        p.iter_mut().for_each(|v| *v /= mass);
    }
    let kl: f64 = pa
        .iter()
        .zip(&pb)
        .map(|(&p, &q)| p * (p / q).ln())
        .sum::<f64>()
        * dx;
    Ok(kl.max(0.0))
}
