//! Welch power spectral density estimation and spectrograms.

use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};
use crate::trace::SampledTrace;

/// One-sided power spectral density estimate with its window metadata.
#[derive(Clone, Debug)]
pub struct SpectrumEstimate {
    /// Strictly increasing bin frequencies in Hz, DC excluded.
    pub frequencies: Vec<f64>,
    /// Power density per bin, unit^2/Hz.
    pub power: Vec<f64>,
    pub sample_rate_hz: f64,
    pub segment_length: usize,
    pub n_segments: usize,
    pub window: &'static str,
    pub overlap: f64,
}

impl SpectrumEstimate {
    /// Integrated power, for Parseval checks against time-domain variance.
    pub fn total_power(&self) -> f64 {
        let df = self.sample_rate_hz / self.segment_length as f64;
        self.power.iter().sum::<f64>() * df
    }
}

/// Averaged-periodogram spectral estimate: Hann window, 50% overlap,
/// per-segment mean removal, density normalization.
pub fn welch_psd(trace: &SampledTrace, segment_length: usize) -> Result<SpectrumEstimate> {
    let x = trace.scalar_values()?;
    if segment_length < 2 {
        return Err(Error::TooShort(format!(
            "segment length {segment_length}, need 2"
        )));
    }
    if segment_length > x.len() {
        return Err(Error::TooShort(format!(
            "segment length {segment_length} exceeds trace length {}",
            x.len()
        )));
    }
    let fs = trace.rate();
    let n = segment_length;
    let hop = (n / 2).max(1);
    let window: Vec<f64> = (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect();
    let window_power: f64 = window.iter().map(|w| w * w).sum();

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let n_bins = n / 2 + 1;
    let mut acc = vec![0.0f64; n_bins];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut n_segments = 0usize;
    let mut start = 0usize;
    while start + n <= x.len() {
        let seg = &x[start..start + n];
        let mean = seg.iter().sum::<f64>() / n as f64;
        for (i, (&s, &w)) in seg.iter().zip(&window).enumerate() {
            buf[i] = Complex::new((s - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        n_segments += 1;
        start += hop;
    }
    let scale = 1.0 / (fs * window_power * n_segments as f64);
    let mut frequencies = Vec::with_capacity(n_bins - 1);
    let mut power = Vec::with_capacity(n_bins - 1);
    for (k, &a) in acc.iter().enumerate().take(n_bins).skip(1) {
        // One-sided density: interior bins carry both halves of the spectrum.
        let one_sided = if 2 * k == n { 1.0 } else { 2.0 };
        frequencies.push(k as f64 * fs / n as f64);
        power.push(a * scale * one_sided);
    }
    Ok(SpectrumEstimate {
        frequencies,
        power,
        sample_rate_hz: fs,
        segment_length: n,
        n_segments,
        window: "hann",
        overlap: 0.5,
    })
}

/// Least-squares slope of log power versus log frequency over a band,
/// expressed in dB per decade.
pub fn psd_slope(spec: &SpectrumEstimate, f_lo_hz: f64, f_hi_hz: f64) -> Result<f64> {
    if !f_lo_hz.is_finite() || !f_hi_hz.is_finite() || f_lo_hz >= f_hi_hz {
        return Err(Error::RangeEmpty(format!(
            "f_lo {f_lo_hz} Hz not below f_hi {f_hi_hz} Hz"
        )));
    }
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    for (&f, &p) in spec.frequencies.iter().zip(&spec.power) {
        if f >= f_lo_hz && f <= f_hi_hz && p > 0.0 {
            lx.push(f.log10());
            ly.push(10.0 * p.log10());
        }
    }
    if lx.len() < 2 {
        return Err(Error::RangeEmpty(format!(
            "{} usable bins in [{f_lo_hz}, {f_hi_hz}] Hz",
            lx.len()
        )));
    }
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx = lx.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
    if sxx == 0.0 {
        return Err(Error::RangeEmpty("all bins at one frequency".into()));
    }
    let sxy = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>();
    Ok(sxy / sxx)
}

/// Per-window spectra over non-overlapping windows of `window_s` seconds.
/// Each window is analyzed with a single full-length segment, so the lowest
/// resolvable bin sits at `1 / window_s`.
pub fn spectrogram(trace: &SampledTrace, window_s: f64) -> Result<Vec<SpectrumEstimate>> {
    let x = trace.scalar_values()?;
    let dt = trace.dt();
    if window_s < 2.0 * dt {
        return Err(Error::TooShort(format!(
            "window {window_s} s below two sample intervals"
        )));
    }
    let w = (window_s / dt).round() as usize;
    let n_windows = x.len() / w;
    if n_windows == 0 {
        return Err(Error::TooShort(format!(
            "trace of {} samples cannot fill one {w}-sample window",
            x.len()
        )));
    }
    let mut out = Vec::with_capacity(n_windows);
    for i in 0..n_windows {
        let chunk = SampledTrace::scalar(
            trace.t0() + (i * w) as f64 * dt,
            dt,
            trace.unit(),
            x[i * w..(i + 1) * w].to_vec(),
        )?;
        out.push(welch_psd(&chunk, w)?);
    }
    Ok(out)
}
