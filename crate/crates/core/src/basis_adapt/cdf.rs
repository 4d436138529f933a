//! Kernel-smoothed marginal CDFs with monotone cubic interpolation.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

const MIN_SAMPLES: usize = 30;
const GRID_QUANTILES: usize = 1024;
const KERNEL_REACH: f64 = 8.0;

pub(crate) fn std_normal() -> Normal {
    Normal::standard()
}

/// Silverman's rule-of-thumb bandwidth for a sorted sample.
pub fn silverman_bandwidth(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    let spread = if iqr > 0.0 {
        var.sqrt().min(iqr / 1.34)
    } else {
        var.sqrt()
    };
    0.9 * spread * n.powf(-0.2)
}

/// Unnormalized DCT-II, `X_k = 2 Σ_j x_j cos(πk(2j+1)/(2n))`.
fn dct2(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut v: Vec<Complex<f64>> = (0..n)
        .map(|j| {
            let src = if j < n.div_ceil(2) {
                2 * j
            } else {
                2 * (n - j) - 1
            };
            Complex::new(x[src], 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut v);
    v.iter()
        .enumerate()
        .map(|(k, c)| {
            let w = Complex::from_polar(1.0, -std::f64::consts::PI * k as f64 / (2 * n) as f64);
            2.0 * (w * c).re
        })
        .collect()
}

/// Improved Sheather–Jones bandwidth from the linear diffusion density estimator.
///
/// Returns `None` when the fixed-point equation has no root in the search range.
pub fn isj_bandwidth(sorted: &[f64]) -> Option<f64> {
    const BINS: usize = 1 << 14;
    let n = sorted.len() as f64;
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    let range = max - min;
    if !(range > 0.0) {
        return None;
    }
    let lo = min - range / 10.0;
    let width = range * 1.2;
    let mut hist = vec![0.0; BINS];
    for &x in sorted {
        let b = (((x - lo) / width) * BINS as f64) as usize;
        hist[b.min(BINS - 1)] += 1.0 / n;
    }
    let a = dct2(&hist);
    let sq: Vec<f64> = (1..BINS).map(|k| (k * k) as f64).collect();
    let a2: Vec<f64> = a[1..].iter().map(|v| (v / 2.0).powi(2)).collect();
    let pi2 = std::f64::consts::PI.powi(2);
    let functional = |s: i32, t: f64| {
        2.0 * std::f64::consts::PI.powi(2 * s)
            * sq.iter()
                .zip(&a2)
                .map(|(&i, &c)| i.powi(s) * c * (-i * pi2 * t).exp())
                .sum::<f64>()
    };
    let fixed_point = |t: f64| {
        let l = 7;
        let mut f = functional(l, t);
        for s in (2..l).rev() {
            let k0 = (1..2 * s).step_by(2).map(f64::from).product::<f64>()
                / (2.0 * std::f64::consts::PI).sqrt();
            let c = (1.0 + 0.5f64.powf(s as f64 + 0.5)) / 3.0;
            let time = (2.0 * c * k0 / n / f).powf(2.0 / (3.0 + 2.0 * s as f64));
            f = functional(s, time);
        }
        t - (2.0 * n * std::f64::consts::PI.sqrt() * f).powf(-0.4)
    };
    let n_eff = n.clamp(50.0, 1050.0);
    let mut hi = 1e-12 + 0.01 * (n_eff - 50.0) / 1000.0;
    while fixed_point(hi) <= 0.0 || !fixed_point(hi).is_finite() {
        hi *= 2.0;
        if hi > 0.1 {
            return None;
        }
    }
    let mut lo_t = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo_t + hi);
        let v = fixed_point(mid);
        if v.is_nan() || v < 0.0 {
            lo_t = mid;
        } else {
            hi = mid;
        }
        if hi - lo_t <= 1e-14 * hi {
            break;
        }
    }
    let h = (0.5 * (lo_t + hi)).sqrt() * width;
    (h.is_finite() && h > 0.0).then_some(h)
}

/// Linear-interpolated sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

/// Gaussian-kernel CDF `(1/N) Σ Φ((x - x_i)/h)` using the sorted sample.
fn kernel_cdf(sorted: &[f64], h: f64, x: f64, normal: &Normal) -> f64 {
    let lo = sorted.partition_point(|&s| s < x - KERNEL_REACH * h);
    let hi = sorted.partition_point(|&s| s <= x + KERNEL_REACH * h);
    let inner: f64 = sorted[lo..hi]
        .iter()
        .map(|&s| normal.cdf((x - s) / h))
        .sum();
    (lo as f64 + inner) / sorted.len() as f64
}

/// Gaussian-kernel density estimate at `x`.
pub(crate) fn kernel_pdf(sorted: &[f64], h: f64, x: f64) -> f64 {
    let lo = sorted.partition_point(|&s| s < x - KERNEL_REACH * h);
    let hi = sorted.partition_point(|&s| s <= x + KERNEL_REACH * h);
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * h * sorted.len() as f64);
    sorted[lo..hi]
        .iter()
        .map(|&s| {
            let z = (x - s) / h;
            (-0.5 * z * z).exp()
        })
        .sum::<f64>()
        * norm
}

/// Fritsch–Carlson derivative estimates for a monotone piecewise cubic Hermite interpolant.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    let mut d = vec![0.0; n];
    if n == 2 {
        d[0] = delta[0];
        d[1] = delta[0];
        return d;
    }
    for k in 1..n - 1 {
        if delta[k - 1] * delta[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s.signum() != d0.signum() {
            0.0
        } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    d[0] = end(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

/// Smooth, monotone estimate of a scalar marginal CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    grid: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    eps: f64,
    bandwidth: f64,
}

impl EmpiricalCdf {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Clamping level `1/(2N)`.
    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.grid.len();
        let raw = if x <= self.grid[0] {
            self.values[0]
        } else if x >= self.grid[n - 1] {
            self.values[n - 1]
        } else {
            let k = self.grid.partition_point(|&g| g <= x) - 1;
            let h = self.grid[k + 1] - self.grid[k];
            let t = (x - self.grid[k]) / h;
            let (t2, t3) = (t * t, t * t * t);
            let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
            let h10 = t3 - 2.0 * t2 + t;
            let h01 = -2.0 * t3 + 3.0 * t2;
            let h11 = t3 - t2;
            h00 * self.values[k]
                + h10 * h * self.slopes[k]
                + h01 * self.values[k + 1]
                + h11 * h * self.slopes[k + 1]
        };
        raw.clamp(self.eps, 1.0 - self.eps)
    }

    /// `Φ⁻¹(F(x))`.
    pub fn gaussianize(&self, x: f64) -> f64 {
        std_normal().inverse_cdf(self.eval(x))
    }
}

/// Kernel CDF estimate of a scalar sample, tabulated on sample quantiles.
pub fn fit_cdf(samples: &[f64]) -> Result<EmpiricalCdf> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            need: MIN_SAMPLES,
            got: samples.len(),
        });
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "non-finite sample in CDF fit".into(),
        ));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    if max - min <= 1e-14 * (1.0 + min.abs().max(max.abs())) {
        return Err(Error::Degenerate("all samples identical".into()));
    }
    let rule = silverman_bandwidth(&sorted);
    let mut h = match isj_bandwidth(&sorted) {
        Some(b) if rule > 0.0 => b.max(0.01 * rule),
        Some(b) => b,
        None => rule,
    };
    if !(h > 0.0) {
        h = (max - min) * 1e-3;
    }
    let normal = std_normal();

    let mut grid: Vec<f64> = Vec::with_capacity(GRID_QUANTILES + 16);
    for k in 1..=6 {
        grid.push(min - (7 - k) as f64 * h);
    }
    let levels = GRID_QUANTILES.min(sorted.len());
    for k in 0..levels {
        grid.push(quantile_sorted(&sorted, k as f64 / (levels - 1) as f64));
    }
    for k in 1..=6 {
        grid.push(max + k as f64 * h);
    }
    grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * h);
    let values: Vec<f64> = grid
        .iter()
        .map(|&g| kernel_cdf(&sorted, h, g, &normal))
        .collect();
    let slopes = pchip_slopes(&grid, &values);
    Ok(EmpiricalCdf {
        grid,
        values,
        slopes,
        eps: 0.5 / samples.len() as f64,
        bandwidth: h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pce::sample_germ;

    #[test]
    fn normal_cdf_recovered() {
        let s: Vec<f64> = sample_germ(100_000, 1, 3).iter().cloned().collect();
        let f = fit_cdf(&s).unwrap();
        let normal = std_normal();
        let worst = (-400..=400)
            .map(|k| k as f64 * 0.01)
            .map(|x| (f.eval(x) - normal.cdf(x)).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 0.01, "max deviation {worst}");
        let mut sorted = s.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((f.eval(quantile_sorted(&sorted, 0.5)) - 0.5).abs() < 0.02);
    }

    #[test]
    fn dct_matches_direct_sum() {
        let x: Vec<f64> = (0..16).map(|k| ((k * 7 % 5) as f64).sin()).collect();
        let fast = dct2(&x);
        for (k, v) in fast.iter().enumerate() {
            let direct: f64 = x
                .iter()
                .enumerate()
                .map(|(j, &xj)| {
                    2.0 * xj * (std::f64::consts::PI * k as f64 * (2 * j + 1) as f64 / 32.0).cos()
                })
                .sum();
            assert!((v - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn isj_close_to_rule_of_thumb_for_gaussian_data() {
        let mut s: Vec<f64> = sample_germ(100_000, 1, 8).iter().cloned().collect();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let h = isj_bandwidth(&s).unwrap();
        let rule = silverman_bandwidth(&s);
        assert!(h > 0.8 * rule && h < 1.5 * rule, "isj {h} rule {rule}");
    }

    #[test]
    fn clamped_below_minimum() {
        let s: Vec<f64> = sample_germ(200, 1, 4).iter().cloned().collect();
        let f = fit_cdf(&s).unwrap();
        let v = f.eval(-100.0);
        assert!(v > 0.0 && v <= f.eps());
        assert!(f.eval(100.0) < 1.0);
    }

    #[test]
    fn monotone_on_skewed_data() {
        let s: Vec<f64> = sample_germ(5_000, 1, 5).iter().map(|x| x.exp()).collect();
        let f = fit_cdf(&s).unwrap();
        let mut prev = 0.0;
        for k in 0..4000 {
            let v = f.eval(-1.0 + k as f64 * 0.01);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn degenerate_and_small_inputs_rejected() {
        assert!(matches!(fit_cdf(&[1.0; 50]), Err(Error::Degenerate(_))));
        assert!(matches!(
            fit_cdf(&[1.0, 2.0]),
            Err(Error::TooFewSamples { .. })
        ));
    }
}
