//! Time-bin qubits: Lorentzian pulse carving and trigger timing jitter.

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::{streams, RandomSeed};
use crate::trace::{SampledTrace, Unit};

/// Spacing between the early and late bins.
pub const BIN_SPACING_S: f64 = 144.5e-9;
/// Full width at half maximum of each Lorentzian pulse.
pub const PULSE_FWHM_S: f64 = 45e-9;
/// Amplitude normalization tolerance.
const NORM_TOLERANCE: f64 = 1e-9;

/// A photonic qubit encoded in early/late pulse occupation with a relative
/// phase on the late bin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeBinQubit {
    pub amp_early: f64,
    pub amp_late: f64,
    /// Phase of the late bin relative to the early bin, radians.
    pub relative_phase: f64,
    pub bin_spacing_s: f64,
    pub pulse_fwhm_s: f64,
}

impl TimeBinQubit {
    pub fn new(amp_early: f64, amp_late: f64, relative_phase: f64) -> Result<Self> {
        let norm = amp_early * amp_early + amp_late * amp_late;
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::InvalidQubit(format!(
                "amplitude norm {norm} differs from 1"
            )));
        }
        Ok(TimeBinQubit {
            amp_early,
            amp_late,
            relative_phase,
            bin_spacing_s: BIN_SPACING_S,
            pulse_fwhm_s: PULSE_FWHM_S,
        })
    }

    /// Equal superposition with zero relative phase.
    pub fn plus() -> Self {
        TimeBinQubit::new(std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2, 0.0)
            .expect("normalized")
    }

    /// Equal superposition with a pi phase on the late bin.
    pub fn minus() -> Self {
        TimeBinQubit::new(
            std::f64::consts::FRAC_1_SQRT_2,
            std::f64::consts::FRAC_1_SQRT_2,
            std::f64::consts::PI,
        )
        .expect("normalized")
    }

    /// All population in the early bin.
    pub fn early() -> Self {
        TimeBinQubit::new(1.0, 0.0, 0.0).expect("normalized")
    }

    /// All population in the late bin.
    pub fn late() -> Self {
        TimeBinQubit::new(0.0, 1.0, 0.0).expect("normalized")
    }
}

/// A carved transmitter waveform: intensity envelope plus the phase metadata
/// that the amplitude modulator cannot carry.
#[derive(Clone, Debug)]
pub struct TimeBinWaveform {
    /// Peak-normalized optical intensity.
    pub intensity: SampledTrace,
    pub late_bin_phase: f64,
    pub early_center_s: f64,
    pub late_center_s: f64,
}

/// Peak-normalized Lorentzian intensity envelope.
fn lorentzian(t: f64, center: f64, fwhm: f64) -> f64 {
    let half = fwhm / 2.0;
    half * half / ((t - center) * (t - center) + half * half)
}

/// Carves the two Lorentzian intensity envelopes of a qubit starting at `t0`.
///
/// Pulse areas are proportional to the squared amplitudes and the relative
/// phase rides on the late bin as metadata. The sample rate must resolve the
/// 45 ns pulse width; 1 GHz is the minimum accepted.
pub fn carve_time_bins(
    qubit: &TimeBinQubit,
    t0_s: f64,
    sample_rate_hz: f64,
) -> Result<TimeBinWaveform> {
    if sample_rate_hz < 1e9 {
        return Err(Error::RateTooLow(format!(
            "{sample_rate_hz} Hz cannot resolve a {} ns pulse; need 1 GHz",
            qubit.pulse_fwhm_s * 1e9
        )));
    }
    let dt = 1.0 / sample_rate_hz;
    let margin = 5.0 * qubit.pulse_fwhm_s;
    let start = t0_s - margin;
    let stop = t0_s + qubit.bin_spacing_s + margin;
    let n = ((stop - start) / dt).ceil() as usize + 1;
    let early_center = t0_s;
    let late_center = t0_s + qubit.bin_spacing_s;
    let w_early = qubit.amp_early * qubit.amp_early;
    let w_late = qubit.amp_late * qubit.amp_late;
    let values = (0..n)
        .map(|k| {
            let t = start + k as f64 * dt;
            w_early * lorentzian(t, early_center, qubit.pulse_fwhm_s)
                + w_late * lorentzian(t, late_center, qubit.pulse_fwhm_s)
        })
        .collect();
    Ok(TimeBinWaveform {
        intensity: SampledTrace::scalar(start, dt, Unit::Dimensionless, values)?,
        late_bin_phase: qubit.relative_phase,
        early_center_s: early_center,
        late_center_s: late_center,
    })
}

/// Shifts a waveform by one Gaussian trigger-jitter draw.
///
/// Over many trigger events the measured arrival-time standard deviation
/// reproduces `jitter_std_s`.
pub fn apply_timing_jitter(
    waveform: &TimeBinWaveform,
    jitter_std_s: f64,
    seed: RandomSeed,
) -> TimeBinWaveform {
    assert!(jitter_std_s >= 0.0, "jitter must be non-negative");
    if jitter_std_s == 0.0 {
        return waveform.clone();
    }
    let mut sampler = TimingJitter::new(jitter_std_s, seed);
    let offset = sampler.sample();
    let shifted = SampledTrace::scalar(
        waveform.intensity.t0() + offset,
        waveform.intensity.dt(),
        waveform.intensity.unit(),
        waveform.intensity.scalar_values().expect("scalar waveform").to_vec(),
    )
    .expect("shifted copy of a valid trace");
    TimeBinWaveform {
        intensity: shifted,
        late_bin_phase: waveform.late_bin_phase,
        early_center_s: waveform.early_center_s + offset,
        late_center_s: waveform.late_center_s + offset,
    }
}

/// Sequential Gaussian arrival-offset sampler for long trigger streams.
pub struct TimingJitter {
    normal: Normal<f64>,
    rng: rand_chacha::ChaCha8Rng,
}

impl TimingJitter {
    pub fn new(jitter_std_s: f64, seed: RandomSeed) -> Self {
        TimingJitter {
            normal: Normal::new(0.0, jitter_std_s.max(0.0)).expect("finite std"),
            rng: seed.stream(streams::TIMING_JITTER),
        }
    }

    pub fn sample(&mut self) -> f64 {
        self.normal.sample(&mut self.rng)
    }
}

/// Index of the nearest slot centre to an arrival time, slots at
/// `first_center + k * spacing` for `k < n_slots`.
pub fn nearest_slot(arrival_s: f64, first_center_s: f64, spacing_s: f64, n_slots: usize) -> usize {
    let k = ((arrival_s - first_center_s) / spacing_s).round();
    (k.max(0.0) as usize).min(n_slots - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_constructors_are_normalized() {
        for q in [
            TimeBinQubit::plus(),
            TimeBinQubit::minus(),
            TimeBinQubit::early(),
            TimeBinQubit::late(),
        ] {
            let norm = q.amp_early * q.amp_early + q.amp_late * q.amp_late;
            assert!((norm - 1.0).abs() < 1e-12);
        }
        assert_eq!(TimeBinQubit::minus().relative_phase, std::f64::consts::PI);
        assert!(TimeBinQubit::new(1.0, 1.0, 0.0).is_err());
    }

    fn lobe_peaks(w: &TimeBinWaveform) -> (f64, f64) {
        let v = w.intensity.scalar_values().unwrap();
        let dt = w.intensity.dt();
        let t0 = w.intensity.t0();
        let boundary = (w.early_center_s + w.late_center_s) / 2.0;
        let split = ((boundary - t0) / dt).round() as usize;
        let early = v[..split].iter().cloned().fold(0.0f64, f64::max);
        let late = v[split..].iter().cloned().fold(0.0f64, f64::max);
        (early, late)
    }

    #[test]
    fn plus_state_carves_equal_bins() {
        let w = carve_time_bins(&TimeBinQubit::plus(), 1e-6, 1e9).unwrap();
        let (early, late) = lobe_peaks(&w);
        assert!((early - late).abs() / early < 1e-3, "peaks {early} vs {late}");
        assert_eq!(w.late_bin_phase, 0.0);
    }

    #[test]
    fn lobe_weights_follow_squared_amplitudes() {
        // 80/20 population split carves 4:1 lobes, corrected for the tail of
        // the opposite Lorentzian at one bin spacing.
        let q = TimeBinQubit::new(0.8f64.sqrt(), 0.2f64.sqrt(), 0.3).unwrap();
        let w = carve_time_bins(&q, 0.0, 1e9).unwrap();
        let (early, late) = lobe_peaks(&w);
        let tail = lorentzian(q.bin_spacing_s, 0.0, q.pulse_fwhm_s);
        let expected = (0.8 + 0.2 * tail) / (0.2 + 0.8 * tail);
        assert!(
            (early / late - expected).abs() < 0.01,
            "ratio {} vs {expected}",
            early / late
        );
        assert_eq!(w.late_bin_phase, 0.3);
    }

    #[test]
    fn early_only_state_has_one_pulse() {
        let w = carve_time_bins(&TimeBinQubit::early(), 0.0, 1e9).unwrap();
        let v = w.intensity.scalar_values().unwrap();
        let dt = w.intensity.dt();
        let t0 = w.intensity.t0();
        let idx = |t: f64| ((t - t0) / dt).round() as usize;
        assert!(v[idx(w.early_center_s)] > 0.999);
        assert!(v[idx(w.late_center_s)] < 0.05);
    }

    #[test]
    fn lorentzian_half_maximum_at_half_width() {
        // Intensity at +-22.5 ns from the centre is half the peak.
        let q = TimeBinQubit::early();
        let half = q.pulse_fwhm_s / 2.0;
        let peak = lorentzian(0.0, 0.0, q.pulse_fwhm_s);
        for t in [-half, half] {
            let v = lorentzian(t, 0.0, q.pulse_fwhm_s);
            assert!((v - peak / 2.0).abs() < 1e-6 * peak);
        }
    }

    #[test]
    fn carve_rejects_low_sample_rate() {
        assert!(matches!(
            carve_time_bins(&TimeBinQubit::plus(), 0.0, 1e8),
            Err(Error::RateTooLow(_))
        ));
    }

    #[test]
    fn zero_jitter_is_identity() {
        let w = carve_time_bins(&TimeBinQubit::plus(), 0.0, 1e9).unwrap();
        let j = apply_timing_jitter(&w, 0.0, RandomSeed(1));
        assert_eq!(j.early_center_s, w.early_center_s);
        assert_eq!(
            j.intensity.scalar_values().unwrap(),
            w.intensity.scalar_values().unwrap()
        );
    }

    #[test]
    fn jitter_offsets_reproduce_std() {
        let std = 520e-12;
        let mut sampler = TimingJitter::new(std, RandomSeed(13));
        let n = 10_000;
        let offsets: Vec<f64> = (0..n).map(|_| sampler.sample()).collect();
        let mean = offsets.iter().sum::<f64>() / n as f64;
        let var = offsets.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
        let measured = var.sqrt();
        assert!((measured - std).abs() / std < 0.05, "std {measured}");
    }

    #[test]
    fn slot_assignment_is_nearest_center() {
        let spacing = BIN_SPACING_S;
        assert_eq!(nearest_slot(0.0, 0.0, spacing, 3), 0);
        assert_eq!(nearest_slot(spacing * 1.4, 0.0, spacing, 3), 1);
        assert_eq!(nearest_slot(spacing * 1.6, 0.0, spacing, 3), 2);
        assert_eq!(nearest_slot(-spacing, 0.0, spacing, 3), 0);
        assert_eq!(nearest_slot(spacing * 9.0, 0.0, spacing, 3), 2);
    }
}
