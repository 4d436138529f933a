//! Dynamical systems and an adaptive Dormand–Prince 4(5) integrator.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{try_map_range, Execution};

pub type StateVector = DVector<f64>;

/// Right-hand side of an autonomous or non-autonomous ODE `ẋ = f(t, x)`.
pub trait DynamicalSystem: Send + Sync {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, x: &[f64], dx: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemParams {
    pub a: f64,
    pub b: f64,
    #[serde(rename = "F1")]
    pub f1: f64,
    #[serde(rename = "F2")]
    pub f2: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            a: 0.25,
            b: 4.0,
            f1: 8.0,
            f2: 1.0,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        if [self.a, self.b, self.f1, self.f2]
            .iter()
            .all(|v| v.is_finite())
        {
            Ok(())
        } else {
            Err(Error::InvalidArgument(
                "system parameters must be finite".into(),
            ))
        }
    }
}

#[inline]
fn lorenz84_raw(x: &[f64], p: &SystemParams, dx: &mut [f64]) {
    let (u, v, w) = (x[0], x[1], x[2]);
    dx[0] = -p.a * u - v * v - w * w + p.a * p.f1;
    dx[1] = -v + u * v - p.b * u * w + p.f2;
    dx[2] = -w + u * w + p.b * u * v;
}

/// Lorenz-84 tendencies in model time units.
pub fn lorenz84_rhs(state: &StateVector, params: &SystemParams) -> Result<StateVector> {
    if state.len() != 3 {
        return Err(Error::dim("Lorenz-84 state", 3, state.len()));
    }
    let mut dx = [0.0; 3];
    lorenz84_raw(state.as_slice(), params, &mut dx);
    Ok(StateVector::from_column_slice(&dx))
}

/// Lorenz-84 with time measured in hours; one model time unit spans `hours_per_unit` hours.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lorenz84 {
    pub params: SystemParams,
    pub hours_per_unit: f64,
}

impl Lorenz84 {
    pub const DEFAULT_HOURS_PER_UNIT: f64 = 120.0;

    pub fn new(params: SystemParams) -> Self {
        Self {
            params,
            hours_per_unit: Self::DEFAULT_HOURS_PER_UNIT,
        }
    }

    pub fn with_hours_per_unit(mut self, hours: f64) -> Self {
        self.hours_per_unit = hours;
        self
    }
}

impl DynamicalSystem for Lorenz84 {
    fn dim(&self) -> usize {
        3
    }

    fn rhs(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
        lorenz84_raw(x, &self.params, dx);
        let s = 1.0 / self.hours_per_unit;
        dx.iter_mut().for_each(|v| *v *= s);
    }
}

/// Linear time-invariant system `ẋ = A x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::dim("square system matrix", a.nrows(), a.ncols()));
        }
        Ok(Self { a })
    }

    /// Exact flow `exp(A Δt)` via scaling and squaring of a Taylor series.
    pub fn flow_matrix(&self, dt: f64) -> DMatrix<f64> {
        let n = self.a.nrows();
        let m = &self.a * dt;
        let norm = m.norm();
        let squarings = if norm > 0.5 {
            (norm / 0.5).log2().ceil() as u32
        } else {
            0
        };
        let scaled = &m / 2f64.powi(squarings as i32);
        let mut term = DMatrix::<f64>::identity(n, n);
        let mut sum = DMatrix::<f64>::identity(n, n);
        for k in 1..30 {
            term = &term * &scaled / k as f64;
            sum += &term;
        }
        for _ in 0..squarings {
            sum = &sum * &sum;
        }
        sum
    }
}

impl DynamicalSystem for LinearSystem {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn rhs(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
        for (i, d) in dx.iter_mut().enumerate().take(self.a.nrows()) {
            *d = self.a.row(i).iter().zip(x).map(|(a, v)| a * v).sum();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub initial_step: f64,
    pub max_step: f64,
    pub min_step: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-8,
            rel_tol: 1e-8,
            initial_step: 1e-2,
            max_step: 1e6,
            min_step: 1e-12,
            max_steps: 1_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn with_tolerance(tol: f64) -> Self {
        Self {
            abs_tol: tol,
            rel_tol: tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.abs_tol > 0.0
            && self.rel_tol > 0.0
            && self.min_step > 0.0
            && self.min_step <= self.initial_step
            && self.initial_step <= self.max_step
            && self.max_steps > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "invalid integrator configuration {self:?}"
            )))
        }
    }
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrate `sys` from `t0` to `t1` with adaptive Dormand–Prince steps.
pub fn integrate<S: DynamicalSystem + ?Sized>(
    sys: &S,
    x0: &[f64],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<f64>> {
    let n = sys.dim();
    if x0.len() != n {
        return Err(Error::dim("initial state", n, x0.len()));
    }
    if !(t1 >= t0) {
        return Err(Error::InvalidArgument(format!(
            "integration interval reversed: t0 = {t0}, t1 = {t1}"
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(t0));
    }
    let mut y = x0.to_vec();
    if t1 == t0 {
        return Ok(y);
    }

    let mut k = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut y5 = vec![0.0; n];
    let mut t = t0;
    let mut h = cfg.initial_step.min(cfg.max_step).min(t1 - t0);
    sys.rhs(t, &y, &mut k[0]);
    let mut steps = 0usize;

    while t < t1 {
        steps += 1;
        if steps > cfg.max_steps {
            return Err(Error::TooManySteps(cfg.max_steps));
        }
        let last = t + h >= t1 || (t1 - t - h) < 1e-12 * (t1 - t0);
        if last {
            h = t1 - t;
        }

        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k[0][i];
        }
        sys.rhs(t + C2 * h, &tmp, &mut k[1]);
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k[0][i] + A32 * k[1][i]);
        }
        sys.rhs(t + C3 * h, &tmp, &mut k[2]);
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k[0][i] + A42 * k[1][i] + A43 * k[2][i]);
        }
        sys.rhs(t + C4 * h, &tmp, &mut k[3]);
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k[0][i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i]);
        }
        sys.rhs(t + C5 * h, &tmp, &mut k[4]);
        for i in 0..n {
            tmp[i] = y[i]
                + h * (A61 * k[0][i]
                    + A62 * k[1][i]
                    + A63 * k[2][i]
                    + A64 * k[3][i]
                    + A65 * k[4][i]);
        }
        sys.rhs(t + h, &tmp, &mut k[5]);
        for i in 0..n {
            y5[i] = y[i]
                + h * (B1 * k[0][i] + B3 * k[2][i] + B4 * k[3][i] + B5 * k[4][i] + B6 * k[5][i]);
        }
        sys.rhs(t + h, &y5, &mut k[6]);

        let mut err = 0.0f64;
        for i in 0..n {
            let e = h
                * (E1 * k[0][i]
                    + E3 * k[2][i]
                    + E4 * k[3][i]
                    + E5 * k[4][i]
                    + E6 * k[5][i]
                    + E7 * k[6][i]);
            let sc = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(y5[i].abs());
            err = err.max((e / sc).abs());
        }
        if !err.is_finite() {
            err = f64::INFINITY;
        }

        if err <= 1.0 {
            t = if last { t1 } else { t + h };
            y.copy_from_slice(&y5);
            k.swap(0, 6);
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h = (h * factor).min(cfg.max_step);
        } else {
            let factor = if err.is_finite() {
                (0.9 * err.powf(-0.2)).max(0.2)
            } else {
                0.2
            };
            h *= factor;
            if h < cfg.min_step {
                if y5.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(t));
                }
                return Err(Error::StepUnderflow { t, step: h });
            }
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(t1));
    }
    Ok(y)
}

/// Integrate through a sorted list of output times, starting at `t0`.
pub fn integrate_through<S: DynamicalSystem + ?Sized>(
    sys: &S,
    x0: &[f64],
    t0: f64,
    times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(times.len());
    let mut x = x0.to_vec();
    let mut t = t0;
    for &tk in times {
        x = integrate(sys, &x, t, tk, cfg)?;
        t = tk;
        out.push(x.clone());
    }
    Ok(out)
}

/// Propagate every sample independently; output order matches input order.
pub fn propagate_ensemble<S: DynamicalSystem + ?Sized>(
    sys: &S,
    samples: &[Vec<f64>],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<Vec<f64>>> {
    propagate_ensemble_with(Execution::default(), sys, samples, t0, t1, cfg)
}

pub fn propagate_ensemble_with<S: DynamicalSystem + ?Sized>(
    exec: Execution,
    sys: &S,
    samples: &[Vec<f64>],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<Vec<f64>>> {
    try_map_range(exec, samples.len(), |i| {
        integrate(sys, &samples[i], t0, t1, cfg).map_err(|e| Error::Sample {
            index: i,
            source: Box::new(e),
        })
    })
}

/// Row-wise propagation of a sample matrix (one sample per row).
pub fn propagate_rows<S: DynamicalSystem + ?Sized>(
    exec: Execution,
    sys: &S,
    samples: &DMatrix<f64>,
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<DMatrix<f64>> {
    let n = samples.nrows();
    let d = samples.ncols();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| samples.row(i).iter().cloned().collect())
        .collect();
    let out = propagate_ensemble_with(exec, sys, &rows, t0, t1, cfg)?;
    let dim_out = out.first().map_or(d, |r| r.len());
    Ok(DMatrix::from_fn(n, dim_out, |i, j| out[i][j]))
}

/// Central finite-difference Jacobian of the flow map `x ↦ φ(t1; t0, x)`.
pub fn flow_jacobian_fd<S: DynamicalSystem + ?Sized>(
    sys: &S,
    x: &[f64],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    step: f64,
) -> Result<DMatrix<f64>> {
    let n = x.len();
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += step;
        xm[j] -= step;
        let fp = integrate(sys, &xp, t0, t1, cfg)?;
        let fm = integrate(sys, &xm, t0, t1, cfg)?;
        for i in 0..n {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * step);
        }
    }
    Ok(jac)
}
