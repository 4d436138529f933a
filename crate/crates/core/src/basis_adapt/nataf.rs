//! Nataf isoprobabilistic transform to uncorrelated standard Gaussians.

use nalgebra::DMatrix;

use super::cdf::{fit_cdf, EmpiricalCdf};
use crate::error::{Error, Flag, Result};
use crate::exec::{map_range, try_map_range, Execution};

const JITTER: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct NatafTransform {
    pub marginals: Vec<EmpiricalCdf>,
    /// `L⁻¹` where `L Lᵀ` is the second-moment matrix of the Gaussianized samples.
    pub chol_inv: DMatrix<f64>,
    pub jittered: bool,
}

impl NatafTransform {
    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn flags(&self) -> Vec<Flag> {
        if self.jittered {
            vec![Flag::CorrelationJitter]
        } else {
            Vec::new()
        }
    }

    /// Componentwise `κ = Φ⁻¹(F(ζ))`.
    pub fn gaussianize(&self, samples: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if samples.ncols() != self.dim() {
            return Err(Error::dim("Nataf input", self.dim(), samples.ncols()));
        }
        let cols = map_range(Execution::default(), self.dim(), |j| {
            samples
                .column(j)
                .iter()
                .map(|&x| self.marginals[j].gaussianize(x))
                .collect::<Vec<f64>>()
        });
        Ok(DMatrix::from_fn(samples.nrows(), self.dim(), |i, j| {
            cols[j][i]
        }))
    }

    /// `θ = L⁻¹ κ` for every sample row.
    pub fn apply(&self, samples: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let kappa = self.gaussianize(samples)?;
        Ok(kappa * self.chol_inv.transpose())
    }
}

/// Fit marginal CDFs and the decorrelating factor on calibration samples (rows).
pub fn nataf_fit(samples: &DMatrix<f64>) -> Result<NatafTransform> {
    let (n, d) = samples.shape();
    if n < 30 {
        return Err(Error::TooFewSamples { need: 30, got: n });
    }
    let marginals = try_map_range(Execution::default(), d, |j| {
        fit_cdf(samples.column(j).as_slice()).map_err(|e| match e {
            Error::Degenerate(m) => Error::Degenerate(format!("component {j}: {m}")),
            other => other,
        })
    })?;
    let mut t = NatafTransform {
        marginals,
        chol_inv: DMatrix::identity(d, d),
        jittered: false,
    };
    let kappa = t.gaussianize(samples)?;
    let c = kappa.transpose() * &kappa / n as f64;
    let mut jitter = 0.0;
    let l = loop {
        let mut cj = c.clone();
        for i in 0..d {
            cj[(i, i)] += jitter * c[(i, i)].max(f64::MIN_POSITIVE);
        }
        let pd = cj.clone().cholesky().filter(|ch| {
            let diag = ch.l().diagonal();
            let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
            lo > 1e-7 * hi
        });
        match pd {
            Some(ch) => break ch.l(),
            None => {
                t.jittered = true;
                jitter = if jitter == 0.0 { JITTER } else { jitter * 10.0 };
                if jitter > 1.0 {
                    return Err(Error::Degenerate(
                        "Gaussianized correlation is singular".into(),
                    ));
                }
            }
        }
    };
    t.chol_inv = l
        .solve_lower_triangular(&DMatrix::identity(d, d))
        .ok_or_else(|| Error::Degenerate("singular Cholesky factor".into()))?;
    Ok(t)
}

pub fn nataf_apply(t: &NatafTransform, samples: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    t.apply(samples)
}
