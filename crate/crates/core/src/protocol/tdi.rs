//! Time-delay interferometer: qubit measurement and quadrature lock.
//!
//! The interferometer delay matches the bin spacing, folding the late bin of
//! one pass onto the early bin of the other. The middle time slot then
//! interferes with port probabilities `(1 +- v cos(theta - phi)) / 4`, while
//! the outer slots carry the non-interfering halves. The lock servo drives
//! the reference fringe to its quadrature point; the qubit light is shifted
//! by a quarter of the free spectral range, so at lock it sits at a fringe
//! maximum.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{streams, RandomSeed};

use super::timebin::{TimeBinQubit, BIN_SPACING_S};

/// Wavelength at which path-imbalance drift converts to fringe phase.
pub const LOCK_WAVELENGTH_M: f64 = 1350e-9;

/// Fringe-phase offset between the lock reference and the qubit light: the
/// acousto-optic shift defaults to a quarter of the free spectral range.
pub const QUBIT_FRINGE_OFFSET_RAD: f64 = FRAC_PI_2;

/// State of the time-delay interferometer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TdiState {
    /// Deviation of the arm-length imbalance from the exact bin-spacing
    /// match, in metres. Sets the fringe phase modulo the wavelength.
    pub path_imbalance_m: f64,
    /// Free spectral range implied by the arm delay.
    pub fsr_hz: f64,
    /// Arm delay; must equal the qubit bin spacing.
    pub delay_s: f64,
    /// Accumulated integral term of the lock servo.
    pub lock_integrator: f64,
    /// Interference visibility in [0, 1].
    pub visibility: f64,
    pub wavelength_m: f64,
    /// Consecutive lock steps spent outside the capture range.
    pub out_of_range_steps: u32,
}

impl TdiState {
    pub fn new(visibility: f64) -> Result<Self> {
        Self::with_delay(BIN_SPACING_S, visibility)
    }

    pub fn with_delay(delay_s: f64, visibility: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&visibility) {
            return Err(Error::InvalidParameter(format!(
                "visibility {visibility} outside [0, 1]"
            )));
        }
        if !delay_s.is_finite() || delay_s <= 0.0 {
            return Err(Error::InvalidParameter(format!("delay {delay_s} s")));
        }
        Ok(TdiState {
            path_imbalance_m: 0.0,
            fsr_hz: 1.0 / delay_s,
            delay_s,
            lock_integrator: 0.0,
            visibility,
            wavelength_m: LOCK_WAVELENGTH_M,
            out_of_range_steps: 0,
        })
    }

    /// Fringe phase of the lock reference light.
    pub fn reference_phase(&self) -> f64 {
        2.0 * PI * self.path_imbalance_m / self.wavelength_m
    }

    /// Fringe transmission of the reference light in [0, 1]; the lock drives
    /// this to 0.5.
    pub fn reference_fringe_signal(&self) -> f64 {
        0.5 * (1.0 + self.reference_phase().cos())
    }

    /// Fringe phase seen by the frequency-shifted qubit light. Zero at lock.
    pub fn qubit_fringe_phase(&self) -> f64 {
        self.reference_phase() - QUBIT_FRINGE_OFFSET_RAD
    }
}

/// Detected photon counts per output time slot over a measurement run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TdiCounts {
    pub early: u64,
    pub middle_port0: u64,
    pub middle_port1: u64,
    pub late: u64,
}

impl TdiCounts {
    pub fn total(&self) -> u64 {
        self.early + self.middle_port0 + self.middle_port1 + self.late
    }
}

/// Per-photon slot probabilities of a qubit on the interferometer.
///
/// Returned as `[early, middle port 0, middle port 1, late]`; they sum to 1.
pub fn slot_probabilities(qubit: &TimeBinQubit, tdi: &TdiState) -> [f64; 4] {
    slot_probabilities_with_phase(qubit, tdi.visibility, tdi.qubit_fringe_phase())
}

/// [`slot_probabilities`] with the fringe phase supplied directly.
pub fn slot_probabilities_with_phase(
    qubit: &TimeBinQubit,
    visibility: f64,
    fringe_phase: f64,
) -> [f64; 4] {
    let fringe = visibility
        * 2.0
        * qubit.amp_early
        * qubit.amp_late
        * (qubit.relative_phase - fringe_phase).cos();
    let p_early = 0.5 * qubit.amp_early * qubit.amp_early;
    let p_late = 0.5 * qubit.amp_late * qubit.amp_late;
    let p_mid0 = 0.25 * (1.0 + fringe);
    let p_mid1 = 0.25 * (1.0 - fringe);
    [p_early, p_mid0, p_mid1, p_late]
}

/// Measures a qubit over `n_trials` pulses with Poisson photon statistics at
/// the stated mean photon number per pulse.
pub fn tdi_measure(
    qubit: &TimeBinQubit,
    tdi: &TdiState,
    n_trials: usize,
    mean_photon_number: f64,
    seed: RandomSeed,
) -> Result<TdiCounts> {
    if (tdi.delay_s - qubit.bin_spacing_s).abs() > 1e-15 {
        return Err(Error::DelayMismatch(format!(
            "arm delay {} s vs bin spacing {} s",
            tdi.delay_s, qubit.bin_spacing_s
        )));
    }
    assert!(mean_photon_number >= 0.0, "mean photon number must be non-negative");
    let probs = slot_probabilities(qubit, tdi);
    let mut counts = TdiCounts::default();
    if mean_photon_number == 0.0 {
        return Ok(counts);
    }
    let mut rng = seed.stream(streams::PHOTON_COUNTS);
    let poisson = Poisson::new(mean_photon_number).expect("positive finite mean");
    let cum = [
        probs[0],
        probs[0] + probs[1],
        probs[0] + probs[1] + probs[2],
    ];
    for _ in 0..n_trials {
        let photons = poisson.sample(&mut rng) as u64;
        for _ in 0..photons {
            let u: f64 = rng.random();
            if u < cum[0] {
                counts.early += 1;
            } else if u < cum[1] {
                counts.middle_port0 += 1;
            } else if u < cum[2] {
                counts.middle_port1 += 1;
            } else {
                counts.late += 1;
            }
        }
    }
    Ok(counts)
}

/// Proportional-integral lock configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LockGains {
    /// Proportional gain per step, in fringe phase per unit fringe error.
    pub kp: f64,
    /// Integral gain per step.
    pub ki: f64,
    /// Fringe-error magnitude treated as out of capture range.
    pub loss_threshold: f64,
    /// Consecutive out-of-range steps before the lock is declared lost.
    pub loss_dwell: u32,
}

impl Default for LockGains {
    fn default() -> Self {
        LockGains {
            kp: 0.6,
            ki: 0.08,
            loss_threshold: 0.45,
            loss_dwell: 200,
        }
    }
}

/// One servo step toward the quadrature point.
///
/// The error is the measured reference fringe signal minus one half; the
/// update moves the path imbalance so the reference sits at quadrature and
/// the frequency-offset qubit at a fringe maximum. The error signal's slope
/// makes one of the two quadratures per fringe attracting, so the same
/// update law also captures from arbitrary starting phase.
pub fn tdi_lock_step(
    reference_power: f64,
    tdi: &TdiState,
    gains: &LockGains,
) -> Result<TdiState> {
    let error = reference_power - 0.5;
    let mut next = tdi.clone();
    if error.abs() > gains.loss_threshold {
        next.out_of_range_steps = tdi.out_of_range_steps + 1;
        if next.out_of_range_steps >= gains.loss_dwell {
            return Err(Error::LockLost(format!(
                "fringe error {error:.3} outside +-{} for {} steps",
                gains.loss_threshold, next.out_of_range_steps
            )));
        }
    } else {
        next.out_of_range_steps = 0;
    }
    next.lock_integrator = tdi.lock_integrator + gains.ki * error;
    let phase_correction = gains.kp * error + next.lock_integrator;
    next.path_imbalance_m += phase_correction * tdi.wavelength_m / (2.0 * PI);
    Ok(next)
}

/// Runs the lock for a full reference window at the given update rate,
/// reading the fringe signal from the state itself.
pub fn run_lock_window(
    tdi: &TdiState,
    gains: &LockGains,
    window_s: f64,
    update_rate_hz: f64,
) -> Result<TdiState> {
    let steps = (window_s * update_rate_hz).round() as usize;
    let mut state = tdi.clone();
    for _ in 0..steps {
        let power = state.reference_fringe_signal();
        state = tdi_lock_step(power, &state, gains)?;
    }
    Ok(state)
}
