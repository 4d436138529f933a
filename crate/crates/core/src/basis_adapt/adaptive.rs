//! Time-adaptive propagation of an uncertain initial state through a chain of
//! anchored polynomial surrogates.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{kl_check, mgs_orthonormalize, KL_MIN_SAMPLES};
use crate::dynsys::{propagate_rows, DynamicalSystem, IntegratorConfig};
use crate::error::{Error, Flag, Result};
use crate::exec::Execution;
use crate::pce::{monomial_design, sample_germ, total_degree_index_set, BasisKind, PCExpansion};
use crate::rng::derive_seed;
use crate::sparse_bayes::{fit_columns, RvmConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisPolicy {
    FixedHermite,
    Mgs,
    Nmap,
}

impl BasisPolicy {
    pub fn name(self) -> &'static str {
        match self {
            BasisPolicy::FixedHermite => "fixed-hermite",
            BasisPolicy::Mgs => "mgs",
            BasisPolicy::Nmap => "nmap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptiveConfig {
    pub policy: BasisPolicy,
    pub order: u32,
    /// Trajectories used to fit each surrogate.
    pub train_samples: usize,
    /// Trajectories used for the divergence check that triggers re-anchoring.
    pub validation_samples: usize,
    /// Surrogate evaluations used for orthonormalization and moment estimates.
    pub surrogate_samples: usize,
    pub kl_tolerance: f64,
    pub rvm: RvmConfig,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            policy: BasisPolicy::Nmap,
            order: 4,
            train_samples: 100,
            validation_samples: 200,
            surrogate_samples: 2000,
            kl_tolerance: 0.05,
            rvm: RvmConfig::default(),
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.order < 1 {
            return Err(Error::InvalidArgument(
                "basis order must be at least 1".into(),
            ));
        }
        if self.train_samples < 2
            || self.surrogate_samples < KL_MIN_SAMPLES
            || self.validation_samples < KL_MIN_SAMPLES
        {
            return Err(Error::InvalidArgument("sample budgets too small".into()));
        }
        if !(self.kl_tolerance > 0.0) {
            return Err(Error::InvalidArgument(
                "kl_tolerance must be positive".into(),
            ));
        }
        self.rvm.validate()
    }
}

/// Anchor of the current surrogate chain link.
#[derive(Debug, Clone)]
pub struct AdaptiveBasisState {
    pub anchor_time: f64,
    pub anchor_expansion: Arc<PCExpansion>,
    pub basis: BasisKind,
    pub kl_tolerance: f64,
}

/// Surrogate of a state expressed through an anchor expansion.
#[derive(Debug, Clone)]
pub struct LinkFit {
    pub expansion: PCExpansion,
    pub noise_var: DVector<f64>,
    pub flags: Vec<Flag>,
}

/// Fit `target ≈ Σ c_α Φ_α(anchor)` with an MGS or NMAP basis in the anchor state.
///
/// `anchor_states` are the anchor values belonging to the rows of `target`.
pub fn fit_link(
    policy: BasisPolicy,
    anchor: &Arc<PCExpansion>,
    anchor_states: &DMatrix<f64>,
    target: &DMatrix<f64>,
    order: u32,
    rvm: &RvmConfig,
    calibration_samples: usize,
    seed: u64,
) -> Result<LinkFit> {
    let set = total_degree_index_set(anchor.state_dim(), order)?;
    let mut flags = Vec::new();
    let (basis, set, design) = match policy {
        BasisPolicy::Nmap => {
            let design = monomial_design(&set, anchor_states)?;
            (
                BasisKind::NmapMonomial {
                    anchor: anchor.clone(),
                },
                set,
                design,
            )
        }
        BasisPolicy::Mgs => {
            let germ = sample_germ(calibration_samples, anchor.germ_dim(), seed);
            let calib = monomial_design(&set, &anchor.eval_many(&germ)?)?;
            let mgs = mgs_orthonormalize(&calib)?;
            flags.extend(mgs.flags());
            let kept = set.subset(&mgs.kept)?;
            let design = monomial_design(&kept, anchor_states)? * &mgs.transform;
            (
                BasisKind::MgsOrthonormal {
                    anchor: anchor.clone(),
                    transform: mgs.transform,
                },
                kept,
                design,
            )
        }
        BasisPolicy::FixedHermite => {
            return Err(Error::InvalidArgument(
                "fixed-hermite surrogates are fitted on the germ, not on an anchor".into(),
            ))
        }
    };
    let (coeffs, results) = fit_columns(&design, target, rvm)?;
    for r in &results {
        flags.extend(r.flags.iter().cloned());
    }
    let noise_var = DVector::from_iterator(results.len(), results.iter().map(|r| r.noise_var));
    Ok(LinkFit {
        expansion: PCExpansion::new(coeffs, basis, set)?,
        noise_var,
        flags,
    })
}

#[derive(Debug, Clone)]
pub struct PropagationStep {
    pub time: f64,
    pub expansion: PCExpansion,
    /// Per-component divergence of the surrogate against validation trajectories.
    pub kl: Vec<f64>,
    /// True when this surrogate became the anchor of the next link.
    pub reanchored: bool,
    pub noise_var: DVector<f64>,
}

struct Snapshot {
    time: f64,
    expansion: Arc<PCExpansion>,
    states: DMatrix<f64>,
}

/// Propagates an initial expansion forward in time through a chain of surrogates.
///
/// Each new surrogate is expressed in the basis of the last well-approximated
/// state, meaning the most recent surrogate whose divergence against the
/// validation ensemble stayed within `kl_tolerance`.
pub struct AdaptivePropagator<'a> {
    system: &'a dyn DynamicalSystem,
    integ: IntegratorConfig,
    cfg: AdaptiveConfig,
    seed: u64,
    time: f64,
    train_germ: DMatrix<f64>,
    train_states: DMatrix<f64>,
    val_germ: DMatrix<f64>,
    val_states: DMatrix<f64>,
    anchor: Snapshot,
    steps: u64,
    flags: Vec<Flag>,
    exec: Execution,
}

impl<'a> AdaptivePropagator<'a> {
    pub fn new(
        system: &'a dyn DynamicalSystem,
        integ: IntegratorConfig,
        initial: &PCExpansion,
        t0: f64,
        cfg: AdaptiveConfig,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if initial.state_dim() != system.dim() {
            return Err(Error::dim(
                "initial expansion",
                system.dim(),
                initial.state_dim(),
            ));
        }
        let g = initial.germ_dim();
        let train_germ = sample_germ(cfg.train_samples, g, derive_seed(seed, &[1]));
        let val_germ = sample_germ(cfg.validation_samples, g, derive_seed(seed, &[2]));
        let train_states = initial.eval_many(&train_germ)?;
        let val_states = initial.eval_many(&val_germ)?;
        let anchor = Snapshot {
            time: t0,
            expansion: Arc::new(initial.clone()),
            states: train_states.clone(),
        };
        Ok(Self {
            system,
            integ,
            cfg,
            seed,
            time: t0,
            train_germ,
            train_states,
            val_germ,
            val_states,
            anchor,
            steps: 0,
            flags: Vec::new(),
            exec: Execution::default(),
        })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn flags(&self) -> &[Flag] {
        &self.flags
    }

    pub fn config(&self) -> &AdaptiveConfig {
        &self.cfg
    }

    pub fn train_germ(&self) -> &DMatrix<f64> {
        &self.train_germ
    }

    pub fn train_states(&self) -> &DMatrix<f64> {
        &self.train_states
    }

    pub fn state(&self) -> AdaptiveBasisState {
        let basis = match self.cfg.policy {
            BasisPolicy::FixedHermite => BasisKind::Hermite,
            BasisPolicy::Nmap => BasisKind::NmapMonomial {
                anchor: self.anchor.expansion.clone(),
            },
            BasisPolicy::Mgs => BasisKind::MgsOrthonormal {
                anchor: self.anchor.expansion.clone(),
                transform: DMatrix::zeros(0, 0),
            },
        };
        AdaptiveBasisState {
            anchor_time: self.anchor.time,
            anchor_expansion: self.anchor.expansion.clone(),
            basis,
            kl_tolerance: self.cfg.kl_tolerance,
        }
    }

    fn fit_current(&self) -> Result<LinkFit> {
        match self.cfg.policy {
            BasisPolicy::FixedHermite => {
                let set = total_degree_index_set(self.train_germ.ncols(), self.cfg.order)?;
                let design = crate::pce::hermite_design(&set, &self.train_germ)?;
                let (coeffs, results) = fit_columns(&design, &self.train_states, &self.cfg.rvm)?;
                Ok(LinkFit {
                    expansion: PCExpansion::hermite(coeffs, set)?,
                    noise_var: DVector::from_iterator(
                        results.len(),
                        results.iter().map(|r| r.noise_var),
                    ),
                    flags: results.iter().flat_map(|r| r.flags.clone()).collect(),
                })
            }
            policy => fit_link(
                policy,
                &self.anchor.expansion,
                &self.anchor.states,
                &self.train_states,
                self.cfg.order,
                &self.cfg.rvm,
                self.cfg.surrogate_samples,
                derive_seed(self.seed, &[3, self.steps]),
            ),
        }
    }

    fn divergence(&self, e: &PCExpansion) -> Result<Vec<f64>> {
        let approx = e.eval_many(&self.val_germ)?;
        (0..approx.ncols())
            .map(|j| {
                kl_check(
                    approx.column(j).as_slice(),
                    self.val_states.column(j).as_slice(),
                )
            })
            .collect()
    }

    /// Integrate the training and validation ensembles to `t` and fit the surrogate there.
    pub fn advance_to(&mut self, t: f64) -> Result<PropagationStep> {
        if t < self.time {
            return Err(Error::InvalidArgument(format!(
                "cannot propagate backwards from {} to {t}",
                self.time
            )));
        }
        self.steps += 1;
        self.train_states = propagate_rows(
            self.exec,
            self.system,
            &self.train_states,
            self.time,
            t,
            &self.integ,
        )?;
        self.val_states = propagate_rows(
            self.exec,
            self.system,
            &self.val_states,
            self.time,
            t,
            &self.integ,
        )?;
        self.time = t;

        let link = self.fit_current()?;
        let kl = self.divergence(&link.expansion)?;
        let worst = kl.iter().cloned().fold(0.0, f64::max);
        self.flags.extend(link.flags.iter().cloned());
        let mut reanchored = false;
        if self.cfg.policy != BasisPolicy::FixedHermite {
            if worst <= self.cfg.kl_tolerance {
                self.anchor = Snapshot {
                    time: t,
                    expansion: Arc::new(link.expansion.clone()),
                    states: self.train_states.clone(),
                };
                reanchored = true;
            } else {
                self.flags.push(Flag::ReanchorFailed { time: t, kl: worst });
            }
        }
        let expansion = link.expansion;
        Ok(PropagationStep {
            time: t,
            expansion,
            kl,
            reanchored,
            noise_var: link.noise_var,
        })
    }
}
