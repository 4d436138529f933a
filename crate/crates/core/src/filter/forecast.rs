//! Prior forecasts and sample propagation used by the smoothers.

use nalgebra::{DMatrix, DVector};

use crate::basis_adapt::{reduce_samples, AdaptiveConfig, AdaptivePropagator, BasisPolicy};
use crate::dynsys::{propagate_rows, DynamicalSystem, IntegratorConfig, LinearSystem};
use crate::error::{Error, Flag, Result};
use crate::exec::Execution;
use crate::linalg::{column_mean, sample_cov};
use crate::pce::{sample_germ_balanced, PCExpansion};
use crate::rng::derive_seed;

/// Source of prior expansions and of the forward model for sample propagation.
pub trait Forecaster: Sync {
    fn state_dim(&self) -> usize;

    /// Start time of the prior.
    fn start(&self) -> f64;

    /// Hermite priors at ascending `times` (all `>= start()`), plus any flags raised.
    fn priors(&self, times: &[f64]) -> Result<(Vec<PCExpansion>, Vec<Flag>)>;

    /// Propagate each row of `samples` from `t0` to `t1`.
    fn propagate(&self, samples: &DMatrix<f64>, t0: f64, t1: f64) -> Result<DMatrix<f64>>;

    fn propagate_point(&self, x: &DVector<f64>, t0: f64, t1: f64) -> Result<DVector<f64>> {
        let m = DMatrix::from_row_slice(1, x.len(), x.as_slice());
        Ok(self.propagate(&m, t0, t1)?.row(0).transpose())
    }
}

fn check_times(times: &[f64], start: f64) -> Result<()> {
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < start) {
        return Err(Error::InvalidArgument(
            "prior times must be ascending and not before the start".into(),
        ));
    }
    Ok(())
}

/// Priors from the adaptive surrogate chain of an ODE system, re-expanded onto a
/// state-dimensional Hermite germ at every requested time.
pub struct SystemForecaster<'a> {
    system: &'a dyn DynamicalSystem,
    integ: IntegratorConfig,
    initial: PCExpansion,
    t0: f64,
    adaptive: AdaptiveConfig,
    seed: u64,
    exec: Execution,
}

impl<'a> SystemForecaster<'a> {
    pub fn new(
        system: &'a dyn DynamicalSystem,
        integ: IntegratorConfig,
        initial: PCExpansion,
        t0: f64,
        adaptive: AdaptiveConfig,
        seed: u64,
    ) -> Result<Self> {
        if !initial.is_hermite() {
            return Err(Error::UnsupportedBasis("initial prior"));
        }
        if initial.state_dim() != system.dim() {
            return Err(Error::dim(
                "initial prior",
                system.dim(),
                initial.state_dim(),
            ));
        }
        adaptive.validate()?;
        integ.validate()?;
        Ok(Self {
            system,
            integ,
            initial,
            t0,
            adaptive,
            seed,
            exec: Execution::default(),
        })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn integrator(&self) -> &IntegratorConfig {
        &self.integ
    }
}

impl Forecaster for SystemForecaster<'_> {
    fn state_dim(&self) -> usize {
        self.system.dim()
    }

    fn start(&self) -> f64 {
        self.t0
    }

    fn priors(&self, times: &[f64]) -> Result<(Vec<PCExpansion>, Vec<Flag>)> {
        check_times(times, self.t0)?;
        let mut prop = AdaptivePropagator::new(
            self.system,
            self.integ,
            &self.initial,
            self.t0,
            self.adaptive,
            derive_seed(self.seed, &[10]),
        )?
        .with_execution(self.exec);
        let mut out = Vec::with_capacity(times.len());
        let mut flags = Vec::new();
        for (k, &t) in times.iter().enumerate() {
            if t == self.t0 {
                out.push(self.initial.clone());
                continue;
            }
            let step = prop.advance_to(t)?;
            if self.adaptive.policy == BasisPolicy::FixedHermite {
                out.push(step.expansion);
                continue;
            }
            let germ = sample_germ_balanced(
                self.adaptive.surrogate_samples,
                step.expansion.germ_dim(),
                derive_seed(self.seed, &[11, k as u64]),
            );
            let states = step.expansion.eval_many(&germ)?;
            let red = reduce_samples(
                &states,
                &column_mean(&states),
                &sample_cov(&states),
                self.adaptive.order,
                &self.adaptive.rvm,
            )?;
            flags.extend(red.flags);
            out.push(red.expansion);
        }
        flags.extend(prop.flags().iter().cloned());
        Ok((out, flags))
    }

    fn propagate(&self, samples: &DMatrix<f64>, t0: f64, t1: f64) -> Result<DMatrix<f64>> {
        propagate_rows(self.exec, self.system, samples, t0, t1, &self.integ)
    }
}

/// Exact priors and propagation for a linear system `ẋ = A x`.
pub struct LinearForecaster {
    system: LinearSystem,
    initial: PCExpansion,
    t0: f64,
}

impl LinearForecaster {
    pub fn new(system: LinearSystem, initial: PCExpansion, t0: f64) -> Result<Self> {
        if !initial.is_hermite() {
            return Err(Error::UnsupportedBasis("initial prior"));
        }
        if initial.state_dim() != system.dim() {
            return Err(Error::dim(
                "initial prior",
                system.dim(),
                initial.state_dim(),
            ));
        }
        Ok(Self {
            system,
            initial,
            t0,
        })
    }

    pub fn flow(&self, dt: f64) -> DMatrix<f64> {
        self.system.flow_matrix(dt)
    }
}

impl Forecaster for LinearForecaster {
    fn state_dim(&self) -> usize {
        self.system.dim()
    }

    fn start(&self) -> f64 {
        self.t0
    }

    fn priors(&self, times: &[f64]) -> Result<(Vec<PCExpansion>, Vec<Flag>)> {
        check_times(times, self.t0)?;
        let priors = times
            .iter()
            .map(|&t| self.initial.transform(&self.flow(t - self.t0), None))
            .collect::<Result<_>>()?;
        Ok((priors, Vec::new()))
    }

    fn propagate(&self, samples: &DMatrix<f64>, t0: f64, t1: f64) -> Result<DMatrix<f64>> {
        if samples.ncols() != self.system.dim() {
            return Err(Error::dim("state", self.system.dim(), samples.ncols()));
        }
        Ok(samples * self.flow(t1 - t0).transpose())
    }
}
