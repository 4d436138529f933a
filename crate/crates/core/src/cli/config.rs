//! Experiment configuration (TOML) and its validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis_adapt::{AdaptiveConfig, BasisPolicy, KL_MIN_SAMPLES};
use crate::dynsys::{IntegratorConfig, Lorenz84, SystemParams};
use crate::error::{Error, Result};
use crate::filter::{BiasGain, FilterConfig, MapMode, SmootherKind};
use crate::sparse_bayes::RvmConfig;

/// GNMK iteration and smoother settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub map_mode: MapMode,
    pub pinv_rcond: f64,
    pub delta_tau: f64,
    pub bias_correct: bool,
    pub bias_gain: BiasGain,
    pub moment_samples: usize,
    pub divergence_window: usize,
}

impl Default for FilterOptions {
    fn default() -> Self {
        let f = FilterConfig::default();
        Self {
            tol: f.tol,
            max_iter: f.max_iter,
            map_mode: f.map_mode,
            pinv_rcond: f.pinv_rcond,
            delta_tau: f.delta_tau,
            bias_correct: f.bias_correct,
            bias_gain: f.bias_gain,
            moment_samples: f.moment_samples,
            divergence_window: f.divergence_window,
        }
    }
}

/// Settings of the prior surrogate chain beyond basis, order and sample budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptiveOptions {
    pub validation_samples: usize,
    pub surrogate_samples: usize,
    pub kl_tolerance: f64,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        let a = AdaptiveConfig::default();
        Self {
            validation_samples: a.validation_samples,
            surrogate_samples: a.surrogate_samples,
            kl_tolerance: a.kl_tolerance,
        }
    }
}

/// Cells of the `sweep` subcommand: the cartesian product of the three lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepOptions {
    pub delta_tau: Vec<f64>,
    pub noise_coef: Vec<f64>,
    pub smoother: Vec<SmootherKind>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            delta_tau: vec![6.0, 3.0],
            noise_coef: vec![0.05, 0.1, 0.2],
            smoother: vec![SmootherKind::Ps2],
        }
    }
}

/// Surrogate-chain comparison of the `fit-pce` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitPceOptions {
    pub policies: Vec<BasisPolicy>,
    pub horizon: f64,
    pub step: f64,
    pub validation_samples: usize,
}

impl Default for FitPceOptions {
    fn default() -> Self {
        Self {
            policies: vec![
                BasisPolicy::FixedHermite,
                BasisPolicy::Mgs,
                BasisPolicy::Nmap,
            ],
            horizon: 96.0,
            step: 6.0,
            validation_samples: 1000,
        }
    }
}

/// Forward-map estimates against finite differences (`jacobian-check`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JacobianOptions {
    /// Start times on the truth trajectory.
    pub times: Vec<f64>,
    pub windows: Vec<f64>,
    /// Standard deviation of the sample cloud around the truth.
    pub spread: f64,
    pub fd_step: f64,
}

impl Default for JacobianOptions {
    fn default() -> Self {
        Self {
            times: vec![0.0, 12.0, 24.0, 36.0, 48.0],
            windows: vec![6.0, 24.0],
            spread: 0.1,
            fd_step: 1e-6,
        }
    }
}

/// A twin experiment on Lorenz-84. Times are in hours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Mandatory; may be supplied on the command line instead.
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub system: SystemParams,
    pub hours_per_unit: f64,
    pub truth: Vec<f64>,
    pub prior_mean: Vec<f64>,
    pub prior_std: Vec<f64>,
    pub t0: f64,
    /// Measurement time T.
    pub horizon: f64,
    pub report_step: f64,
    /// Measurement noise standard deviation relative to the true state.
    pub noise_coef: f64,
    pub observed: Vec<bool>,
    pub smoother: SmootherKind,
    pub basis: BasisPolicy,
    pub order: u32,
    /// Trajectories per surrogate or forward-map fit.
    pub samples: usize,
    /// Posterior draws behind every reported quantile.
    pub quantile_samples: usize,
    pub filter: FilterOptions,
    pub adaptive: AdaptiveOptions,
    pub integrator: IntegratorConfig,
    pub rvm: RvmConfig,
    pub sweep: SweepOptions,
    pub fit_pce: FitPceOptions,
    pub jacobian: JacobianOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: None,
            output_dir: None,
            system: SystemParams::default(),
            hours_per_unit: Lorenz84::DEFAULT_HOURS_PER_UNIT,
            truth: vec![1.0, 0.0, -0.75],
            prior_mean: vec![0.0; 3],
            prior_std: vec![1.0; 3],
            t0: 0.0,
            horizon: 48.0,
            report_step: 6.0,
            noise_coef: 0.1,
            observed: vec![true; 3],
            smoother: SmootherKind::Ps2,
            basis: BasisPolicy::Nmap,
            order: 4,
            samples: 100,
            quantile_samples: 100_000,
            filter: FilterOptions::default(),
            adaptive: AdaptiveOptions::default(),
            integrator: IntegratorConfig::default(),
            rvm: RvmConfig::default(),
            sweep: SweepOptions::default(),
            fit_pce: FitPceOptions::default(),
            jacobian: JacobianOptions::default(),
        }
    }
}

fn field(path: &str, ok: bool, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(path, msg))
    }
}

/// True when `a` is an integer multiple of `b` (relative tolerance 1e-9).
fn is_multiple(a: f64, b: f64) -> bool {
    let r = a / b;
    (r - r.round()).abs() <= 1e-9 * r.abs().max(1.0) && r.round() >= 1.0
}

fn commensurate(a: f64, b: f64) -> bool {
    is_multiple(a, b) || is_multiple(b, a)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("<config>", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        toml::from_str(&text).map_err(|e| Error::config(path.display().to_string(), e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::config("seed", "a seed is required"))
    }

    pub fn system(&self) -> Lorenz84 {
        Lorenz84::new(self.system).with_hours_per_unit(self.hours_per_unit)
    }

    pub fn filter_config(&self) -> FilterConfig {
        let f = &self.filter;
        FilterConfig {
            tol: f.tol,
            max_iter: f.max_iter,
            map_mode: f.map_mode,
            pinv_rcond: f.pinv_rcond,
            delta_tau: f.delta_tau,
            bias_correct: f.bias_correct,
            bias_gain: f.bias_gain,
            map_samples: self.samples,
            moment_samples: f.moment_samples,
            basis: self.basis,
            order: self.order,
            divergence_window: f.divergence_window,
            rvm: self.rvm,
        }
    }

    pub fn adaptive_config(&self, policy: BasisPolicy) -> AdaptiveConfig {
        AdaptiveConfig {
            policy,
            order: self.order,
            train_samples: self.samples,
            validation_samples: self.adaptive.validation_samples,
            surrogate_samples: self.adaptive.surrogate_samples,
            kl_tolerance: self.adaptive.kl_tolerance,
            rvm: self.rvm,
        }
    }

    /// Indices of the observed state components.
    pub fn observed_components(&self) -> Vec<usize> {
        self.observed
            .iter()
            .enumerate()
            .filter_map(|(i, &o)| o.then_some(i))
            .collect()
    }

    /// Report times `t0, t0 + report_step, …` up to and including the horizon.
    pub fn report_times(&self) -> Vec<f64> {
        let n = ((self.horizon - self.t0) / self.report_step + 1e-9).floor() as usize;
        let mut times: Vec<f64> = (0..=n)
            .map(|k| self.t0 + k as f64 * self.report_step)
            .collect();
        if let Some(last) = times.last_mut() {
            if (self.horizon - *last).abs() < 1e-9 * self.horizon.abs().max(1.0) {
                *last = self.horizon;
            } else {
                times.push(self.horizon);
            }
        }
        times
    }

    /// Check every setting, reporting the offending field path.
    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        let d = 3;
        field(
            "hours_per_unit",
            self.hours_per_unit > 0.0,
            "must be positive",
        )?;
        self.system
            .validate()
            .map_err(|e| Error::config("system", e.to_string()))?;
        field("truth", self.truth.len() == d, "needs 3 components")?;
        field(
            "truth",
            self.truth.iter().all(|v| v.is_finite()),
            "must be finite",
        )?;
        field(
            "prior_mean",
            self.prior_mean.len() == d,
            "needs 3 components",
        )?;
        field(
            "prior_mean",
            self.prior_mean.iter().all(|v| v.is_finite()),
            "must be finite",
        )?;
        field("prior_std", self.prior_std.len() == d, "needs 3 components")?;
        field(
            "prior_std",
            self.prior_std.iter().all(|&v| v > 0.0 && v.is_finite()),
            "must be positive",
        )?;
        field("t0", self.t0.is_finite(), "must be finite")?;
        field(
            "horizon",
            self.horizon >= self.t0 && self.horizon.is_finite(),
            "must not precede t0",
        )?;
        field("report_step", self.report_step > 0.0, "must be positive")?;
        field(
            "noise_coef",
            self.noise_coef >= 0.0 && self.noise_coef.is_finite(),
            "must be non-negative",
        )?;
        field("observed", self.observed.len() == d, "needs 3 entries")?;
        field(
            "observed",
            self.observed.iter().any(|&o| o),
            "observe at least one component",
        )?;
        field("order", self.order >= 1, "must be at least 1")?;
        field("samples", self.samples >= 3, "must be at least 3")?;
        field(
            "quantile_samples",
            self.quantile_samples >= 100,
            "must be at least 100",
        )?;
        field(
            "filter.delta_tau",
            self.filter.delta_tau > 0.0 && commensurate(self.filter.delta_tau, self.report_step),
            "must be positive and commensurate with report_step",
        )?;
        self.filter_config()
            .validate()
            .map_err(|e| Error::config("filter", e.to_string()))?;
        field(
            "adaptive.validation_samples",
            self.adaptive.validation_samples >= KL_MIN_SAMPLES,
            "must be at least 100",
        )?;
        field(
            "adaptive.surrogate_samples",
            self.adaptive.surrogate_samples >= KL_MIN_SAMPLES,
            "must be at least 100",
        )?;
        for p in [
            BasisPolicy::FixedHermite,
            BasisPolicy::Mgs,
            BasisPolicy::Nmap,
        ] {
            self.adaptive_config(p)
                .validate()
                .map_err(|e| Error::config("adaptive", e.to_string()))?;
        }
        self.integrator
            .validate()
            .map_err(|e| Error::config("integrator", e.to_string()))?;
        field(
            "sweep.delta_tau",
            self.sweep
                .delta_tau
                .iter()
                .all(|&t| t > 0.0 && commensurate(t, self.report_step)),
            "entries must be positive and commensurate with report_step",
        )?;
        field(
            "sweep.noise_coef",
            self.sweep
                .noise_coef
                .iter()
                .all(|&c| c >= 0.0 && c.is_finite()),
            "entries must be non-negative",
        )?;
        field(
            "fit_pce.horizon",
            self.fit_pce.horizon >= self.t0,
            "must not precede t0",
        )?;
        field("fit_pce.step", self.fit_pce.step > 0.0, "must be positive")?;
        field(
            "fit_pce.validation_samples",
            self.fit_pce.validation_samples >= 2,
            "must be at least 2",
        )?;
        field(
            "jacobian.times",
            self.jacobian.times.iter().all(|&t| t >= self.t0),
            "must not precede t0",
        )?;
        field(
            "jacobian.windows",
            self.jacobian.windows.iter().all(|&w| w > 0.0),
            "must be positive",
        )?;
        field(
            "jacobian.spread",
            self.jacobian.spread > 0.0,
            "must be positive",
        )?;
        field(
            "jacobian.fd_step",
            self.jacobian.fd_step > 0.0,
            "must be positive",
        )?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
