//! Characterization pipeline: turns raw traces (simulated or ingested) into
//! fitted noise parameters.
//!
//! All fits are closed-form least squares. The power law is fitted in log-log
//! space; adjusted R^2 uses `1 - (1 - R^2)(N - 1)/(N - p - 1)` with `p` the
//! number of fitted parameters.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::trace::{SampledTrace, TimeGrid, Unit};

pub use crate::spectral::{psd_slope, spectrogram, welch_psd, SpectrumEstimate};

/// Result of a Gaussian profile fit: sample mean and unbiased variance.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianFit {
    pub variance: f64,
    pub mean: f64,
    pub n_samples: usize,
}

impl GaussianFit {
    /// Standard error of the variance estimate under Gaussian sampling.
    pub fn variance_std_error(&self) -> f64 {
        self.variance * (2.0 / (self.n_samples as f64 - 1.0)).sqrt()
    }
}

/// Power-law fit `y = kappa * x^n` performed in log-log space.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerLawFit {
    pub kappa: f64,
    pub n_exponent: f64,
    pub kappa_std_error: f64,
    pub n_std_error: f64,
    pub adj_r_squared: f64,
    pub n_used: usize,
    /// Points dropped because x or y was non-positive.
    pub n_excluded: usize,
}

/// Ordinary least-squares line fit.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_error: f64,
    pub intercept_std_error: f64,
    pub adj_r_squared: f64,
    pub n_samples: usize,
}

/// Per-span variance and covariance recovered from the differential and
/// round-trip measurements.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpanNoiseDecomposition {
    pub variance: f64,
    pub covariance: f64,
}

impl SpanNoiseDecomposition {
    /// False when the implied cross-correlation exceeds one. Callers should
    /// warn rather than fail; the algebra itself stays exact.
    pub fn is_physical(&self) -> bool {
        self.covariance.abs() <= self.variance
    }
}

/// Finite difference of a phase trace into frequency deviation:
/// `f[k] = (phi[k+1] - phi[k]) / (2 pi dt)`. One sample shorter than input.
pub fn differentiate_phase(phase: &SampledTrace) -> Result<SampledTrace> {
    phase.expect_unit(Unit::Radians)?;
    let p = phase.scalar_values()?;
    if p.len() < 2 {
        return Err(Error::TooShort(format!("{} phase samples, need 2", p.len())));
    }
    let dt = phase.dt();
    let values = p.windows(2).map(|w| (w[1] - w[0]) / (2.0 * PI * dt)).collect();
    SampledTrace::scalar(phase.t0(), dt, Unit::Hertz, values)
}

/// Block-mean decimation to a lower sample rate.
///
/// The decimation factor is the rounded rate ratio; complete blocks are
/// averaged and a trailing partial block is dropped. Output timestamps sit at
/// block centres.
pub fn downsample(trace: &SampledTrace, target_rate_hz: f64) -> Result<SampledTrace> {
    if !target_rate_hz.is_finite() || target_rate_hz <= 0.0 {
        return Err(Error::InvalidRate(format!("target rate {target_rate_hz} Hz")));
    }
    let native = trace.rate();
    if target_rate_hz > native * (1.0 + 1e-12) {
        return Err(Error::RateTooHigh {
            target: target_rate_hz,
            native,
        });
    }
    let v = trace.scalar_values()?;
    let factor = (native / target_rate_hz).round().max(1.0) as usize;
    if factor == 1 {
        return Ok(trace.clone());
    }
    let n_blocks = v.len() / factor;
    if n_blocks == 0 {
        return Err(Error::TooShort(format!(
            "{} samples cannot fill one block of {factor}",
            v.len()
        )));
    }
    let values = (0..n_blocks)
        .map(|b| v[b * factor..(b + 1) * factor].iter().sum::<f64>() / factor as f64)
        .collect();
    let dt = trace.dt() * factor as f64;
    let t0 = trace.t0() + trace.dt() * (factor as f64 - 1.0) / 2.0;
    SampledTrace::scalar(t0, dt, trace.unit(), values)
}

/// Sample mean and unbiased sample variance.
pub fn fit_gaussian_variance(samples: &[f64]) -> Result<GaussianFit> {
    if samples.len() < 2 {
        return Err(Error::TooShort(format!(
            "{} samples, need 2 for a variance",
            samples.len()
        )));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let ss = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    Ok(GaussianFit {
        variance: ss / (n - 1.0),
        mean,
        n_samples: samples.len(),
    })
}

/// Per-span variance and covariance from the differential and round-trip
/// variances: `V = (V_R + V_D) / 4`, `C = (V_R - V_D) / 4`.
pub fn span_variance_covariance(v_d: f64, v_r: f64) -> SpanNoiseDecomposition {
    assert!(v_d >= 0.0 && v_r >= 0.0, "variances must be non-negative");
    SpanNoiseDecomposition {
        variance: (v_r + v_d) / 4.0,
        covariance: (v_r - v_d) / 4.0,
    }
}

/// Great-circle angular speed between successive polarization samples.
pub fn polarization_drift_rate(stokes: &SampledTrace) -> Result<SampledTrace> {
    let p = stokes.stokes_values()?;
    if p.len() < 2 {
        return Err(Error::TooShort(format!(
            "{} polarization samples, need 2",
            p.len()
        )));
    }
    let dt = stokes.dt();
    let values = p.windows(2).map(|w| w[0].angle_to(&w[1]) / dt).collect();
    SampledTrace::scalar(stokes.t0(), dt, Unit::RadiansPerSecond, values)
}

/// Centred moving average with edges truncated to the available samples.
pub fn rolling_mean(trace: &SampledTrace, window_s: f64) -> Result<SampledTrace> {
    let v = trace.scalar_values()?;
    assert!(
        window_s >= trace.dt(),
        "window {window_s} s below one sample interval"
    );
    let half = (window_s / (2.0 * trace.dt())).floor() as usize;
    if half == 0 {
        return Ok(trace.clone());
    }
    // Prefix sums keep this linear in the trace length.
    let mut prefix = Vec::with_capacity(v.len() + 1);
    prefix.push(0.0);
    for &x in v {
        prefix.push(prefix.last().unwrap() + x);
    }
    let values = (0..v.len())
        .map(|k| {
            let lo = k.saturating_sub(half);
            let hi = (k + half + 1).min(v.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect();
    SampledTrace::scalar(trace.t0(), trace.dt(), trace.unit(), values)
}

/// Least-squares power-law fit of `y = kappa * x^n` over points with positive
/// x and y, done as a line fit in log space.
pub fn fit_power_law(y: &SampledTrace, x: &SampledTrace) -> Result<PowerLawFit> {
    let ys = y.scalar_values()?;
    let xs = x.scalar_values()?;
    if ys.len() != xs.len() {
        return Err(Error::Misaligned(format!(
            "y has {} samples, x has {}; resample onto a common grid first",
            ys.len(),
            xs.len()
        )));
    }
    let mut lx = Vec::with_capacity(xs.len());
    let mut ly = Vec::with_capacity(ys.len());
    for (&xi, &yi) in xs.iter().zip(ys) {
        if xi > 0.0 && yi > 0.0 && xi.is_finite() && yi.is_finite() {
            lx.push(xi.ln());
            ly.push(yi.ln());
        }
    }
    let n_excluded = xs.len() - lx.len();
    if lx.len() < 3 {
        return Err(Error::DegenerateInput(format!(
            "{} usable points after excluding non-positive samples, need 3",
            lx.len()
        )));
    }
    let line = least_squares_line(&lx, &ly)?;
    Ok(PowerLawFit {
        kappa: line.intercept.exp(),
        n_exponent: line.slope,
        // Delta method: se(kappa) = kappa * se(log kappa).
        kappa_std_error: line.intercept.exp() * line.intercept_std_error,
        n_std_error: line.slope_std_error,
        adj_r_squared: line.adj_r_squared,
        n_used: lx.len(),
        n_excluded,
    })
}

/// Ordinary least-squares line fit of aligned traces.
pub fn fit_linear(y: &SampledTrace, x: &SampledTrace) -> Result<LinearFit> {
    let ys = y.scalar_values()?;
    let xs = x.scalar_values()?;
    if ys.len() != xs.len() {
        return Err(Error::Misaligned(format!(
            "y has {} samples, x has {}; resample onto a common grid first",
            ys.len(),
            xs.len()
        )));
    }
    least_squares_line(xs, ys)
}

fn least_squares_line(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    let n = xs.len();
    if n < 2 {
        return Err(Error::DegenerateInput(format!("{n} points, need 2")));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx = xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
    if sxx == 0.0 {
        return Err(Error::DegenerateInput("x is constant, no leverage".into()));
    }
    let sxy = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>();
    let syy = ys.iter().map(|y| (y - my) * (y - my)).sum::<f64>();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse = (syy - slope * sxy).max(0.0);
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    // p = 2 fitted parameters; fall back to plain R^2 when the residual has
    // no degrees of freedom.
    let p = 2.0;
    let adj_r_squared = if nf > p + 1.0 {
        1.0 - (1.0 - r_squared) * (nf - 1.0) / (nf - p - 1.0)
    } else {
        r_squared
    };
    let residual_var = if nf > 2.0 { sse / (nf - 2.0) } else { 0.0 };
    Ok(LinearFit {
        slope,
        intercept,
        slope_std_error: (residual_var / sxx).sqrt(),
        intercept_std_error: (residual_var * (1.0 / nf + mx * mx / sxx)).sqrt(),
        adj_r_squared,
        n_samples: n,
    })
}

/// Piecewise-linear resampling of a scalar trace onto a new uniform grid.
/// Exact at original sample points; never extrapolates.
pub fn resample_linear(trace: &SampledTrace, grid: &TimeGrid) -> Result<SampledTrace> {
    let v = trace.scalar_values()?;
    let t_first = trace.t0();
    let t_last = trace.timestamp(v.len() - 1);
    let tol = 1e-9 * trace.dt();
    let mut values = Vec::with_capacity(grid.len);
    for t in grid.timestamps() {
        if t < t_first - tol || t > t_last + tol {
            return Err(Error::OutOfRange(format!(
                "target {t} s outside source span [{t_first}, {t_last}] s"
            )));
        }
        let x = ((t - t_first) / trace.dt()).clamp(0.0, (v.len() - 1) as f64);
        let i = (x.floor() as usize).min(v.len() - 2);
        let frac = x - i as f64;
        values.push(v[i] * (1.0 - frac) + v[i + 1] * frac);
    }
    SampledTrace::scalar(grid.t0, grid.dt, trace.unit(), values)
}
