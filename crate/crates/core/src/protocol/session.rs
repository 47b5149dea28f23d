//! Send-and-measure protocol session.
//!
//! The transmitter and receiver are independent sequential state machines
//! exchanging timestamped events through an in-order channel queue. Each
//! cycle the transmitter announces a phase with a clock command word, then
//! runs its body:
//!
//! - `TdiReference` (1 s): continuous reference light; the receiver servos
//!   the interferometer to quadrature and then freezes the lock.
//! - `PolarizationReference` (10 s, periodic): strong pilot light; the
//!   receiver iteratively rotates its correction optics onto the target
//!   polarization once per second.
//! - `DataTransmission`: a train of time-bin qubits alternating between the
//!   two equal-superposition states; the receiver gates its measurement on
//!   the decoded command and accumulates per-state error counts.
//!
//! Polarization drift between corrections attenuates the detected photon
//! rate but never flips bits: time-bin encoding turns drift into efficiency
//! loss.

use std::collections::VecDeque;
use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{PhaseNoiseParams, PolarizationDriftParams};
use crate::rng::{streams, RandomSeed};
use crate::trace::StokesVector;

use super::codec::{Codebook, CommandMeaning, Decoded};
use super::tdi::{slot_probabilities_with_phase, LockGains, TdiState};
use super::timebin::{nearest_slot, TimeBinQubit, BIN_SPACING_S};

/// Default polarization tolerance: twenty degrees.
pub const POLARIZATION_TOLERANCE_RAD: f64 = 20.0 * std::f64::consts::PI / 180.0;

/// State of the automated polarization correction stage.
#[derive(Clone, Debug, PartialEq)]
pub struct PolarizationControllerState {
    pub current: StokesVector,
    pub target: StokesVector,
    pub tolerance_rad: f64,
}

/// Great-circle rotation command for the correction optics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationCommand {
    pub axis: [f64; 3],
    pub angle_rad: f64,
}

impl RotationCommand {
    pub fn is_identity(&self) -> bool {
        self.angle_rad == 0.0
    }
}

/// Computes the great-circle rotation taking `measured` onto the target and
/// the controller state after applying it.
pub fn polarization_correct(
    state: &PolarizationControllerState,
    measured: StokesVector,
) -> (RotationCommand, PolarizationControllerState) {
    let angle = measured.angle_to(&state.target);
    let command = if angle < 1e-12 {
        RotationCommand {
            axis: [0.0, 0.0, 1.0],
            angle_rad: 0.0,
        }
    } else {
        let cross = measured.cross(&state.target);
        let norm = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
        let axis = if norm > 1e-12 {
            [cross[0] / norm, cross[1] / norm, cross[2] / norm]
        } else {
            // Antipodal states: rotate about any perpendicular axis.
            let (e1, _) = measured.tangent_basis();
            e1
        };
        RotationCommand {
            axis,
            angle_rad: angle,
        }
    };
    let next = PolarizationControllerState {
        current: state.target,
        target: state.target,
        tolerance_rad: state.tolerance_rad,
    };
    (command, next)
}

/// Transmitted qubit state in the equal-superposition basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SentState {
    Plus,
    Minus,
}

impl SentState {
    pub fn qubit(self) -> TimeBinQubit {
        match self {
            SentState::Plus => TimeBinQubit::plus(),
            SentState::Minus => TimeBinQubit::minus(),
        }
    }

    fn flipped(self) -> SentState {
        match self {
            SentState::Plus => SentState::Minus,
            SentState::Minus => SentState::Plus,
        }
    }
}

/// Per-pulse measurement outcome at the receiver.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeasuredOutcome {
    /// No photon detected; a loss, not an error.
    Undetected,
    Plus,
    Minus,
    /// Detected but non-discriminating (outer slots only, or a port tie).
    Ambiguous,
}

/// Bit-error rates with binomial standard errors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BerEstimate {
    pub ber_plus: f64,
    pub ber_minus: f64,
    pub ber_mean: f64,
    pub ber_plus_std_error: f64,
    pub ber_minus_std_error: f64,
    pub ber_mean_std_error: f64,
    pub n_plus: u64,
    pub n_minus: u64,
}

fn binomial_rate(errors: u64, total: u64) -> (f64, f64) {
    if total == 0 {
        return (0.0, 0.0);
    }
    let p = errors as f64 / total as f64;
    (p, (p * (1.0 - p) / total as f64).sqrt())
}

fn ber_from_counts(err_plus: u64, n_plus: u64, err_minus: u64, n_minus: u64) -> BerEstimate {
    let (bp, sp) = binomial_rate(err_plus, n_plus);
    let (bm, sm) = binomial_rate(err_minus, n_minus);
    let (bd, sd) = binomial_rate(err_plus + err_minus, n_plus + n_minus);
    BerEstimate {
        ber_plus: bp,
        ber_minus: bm,
        ber_mean: bd,
        ber_plus_std_error: sp,
        ber_minus_std_error: sm,
        ber_mean_std_error: sd,
        n_plus,
        n_minus,
    }
}

/// Per-state and pooled wrong-bit fractions over detected, discriminating
/// trials. Undetected and ambiguous outcomes are losses, not errors.
pub fn compute_ber(sent: &[SentState], measured: &[MeasuredOutcome]) -> Result<BerEstimate> {
    if sent.len() != measured.len() {
        return Err(Error::Misaligned(format!(
            "{} sent states vs {} outcomes",
            sent.len(),
            measured.len()
        )));
    }
    let mut err_plus = 0u64;
    let mut n_plus = 0u64;
    let mut err_minus = 0u64;
    let mut n_minus = 0u64;
    for (&s, &m) in sent.iter().zip(measured) {
        let bit = match m {
            MeasuredOutcome::Plus => SentState::Plus,
            MeasuredOutcome::Minus => SentState::Minus,
            MeasuredOutcome::Undetected | MeasuredOutcome::Ambiguous => continue,
        };
        match s {
            SentState::Plus => {
                n_plus += 1;
                if bit != s {
                    err_plus += 1;
                }
            }
            SentState::Minus => {
                n_minus += 1;
                if bit != s {
                    err_minus += 1;
                }
            }
        }
    }
    Ok(ber_from_counts(err_plus, n_plus, err_minus, n_minus))
}

/// Transmitter sequencing configuration.
#[derive(Clone, Debug)]
pub struct TransmitterConfig {
    pub codebook: Codebook,
    /// Interval between qubit pulses in a data train.
    pub qubit_period_s: f64,
    pub data_phase_s: f64,
    pub tdi_reference_s: f64,
    pub polarization_reference_s: f64,
    /// Send the polarization reference every this many cycles.
    pub polarization_every_cycles: u32,
    /// Alternate plus/minus deterministically; false draws random bits.
    pub alternate_states: bool,
}

impl Default for TransmitterConfig {
    fn default() -> Self {
        TransmitterConfig {
            codebook: Codebook::default_session(),
            qubit_period_s: 2e-6,
            data_phase_s: 20.0,
            tdi_reference_s: 1.0,
            polarization_reference_s: 10.0,
            polarization_every_cycles: 1,
            alternate_states: true,
        }
    }
}

/// Receiver configuration.
#[derive(Clone, Debug)]
pub struct ReceiverConfig {
    /// Interference visibility of the interferometer.
    pub visibility: f64,
    /// Mean photon number per pulse at the detector with ideal polarization.
    pub detected_mean_photon_number: f64,
    /// Additional attenuation applied on top of the calibrated channel.
    pub extra_loss_db: f64,
    /// Trigger time-of-arrival jitter.
    pub timing_jitter_std_s: f64,
    pub lock_gains: LockGains,
    pub lock_rate_hz: f64,
    /// Initial interferometer imbalance; `None` draws one at random within
    /// half a wavelength.
    pub initial_imbalance_m: Option<f64>,
    pub polarization_tolerance_rad: f64,
    /// Fraction of undecodable words tolerated before declaring desync.
    pub desync_erasure_fraction: f64,
    /// Optional linear visibility decay per second, off by default.
    pub visibility_ramp_per_s: f64,
    /// Path-imbalance drift injected between locks, per data phase.
    pub tdi_drift_per_data_phase_m: f64,
}

impl Default for ReceiverConfig {
    fn default() -> Self {
        ReceiverConfig {
            visibility: 0.954,
            detected_mean_photon_number: 0.0202,
            extra_loss_db: 0.0,
            timing_jitter_std_s: 520e-12,
            lock_gains: LockGains::default(),
            lock_rate_hz: 1000.0,
            initial_imbalance_m: None,
            polarization_tolerance_rad: POLARIZATION_TOLERANCE_RAD,
            desync_erasure_fraction: 0.25,
            visibility_ramp_per_s: 0.0,
            tdi_drift_per_data_phase_m: 0.0,
        }
    }
}

/// Channel noise processes composed for a session.
#[derive(Clone, Debug)]
pub struct SessionChannel {
    /// Fiber length of the transmit route, metres.
    pub length_m: f64,
    /// One-way transit delay applied to every event.
    pub transit_delay_s: f64,
    pub phase_params: PhaseNoiseParams,
    pub pol_params: PolarizationDriftParams,
    /// Constant wind driving the polarization walk.
    pub wind_mph: f64,
    /// Drop every n-th optical clock pulse; `None` disables loss.
    pub clock_pulse_drop_every: Option<u64>,
    pub target_polarization: StokesVector,
}

impl Default for SessionChannel {
    fn default() -> Self {
        SessionChannel {
            length_m: 50_400.0,
            transit_delay_s: 246e-6,
            phase_params: PhaseNoiseParams::default(),
            pol_params: PolarizationDriftParams::one_way_default(),
            wind_mph: 8.0,
            clock_pulse_drop_every: None,
            target_polarization: StokesVector::horizontal(),
        }
    }
}

/// Interferometer telemetry captured at phase boundaries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TdiSnapshot {
    pub time_s: f64,
    pub label: SnapshotLabel,
    pub path_imbalance_m: f64,
    pub reference_fringe_error: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SnapshotLabel {
    LockStart,
    LockEnd,
    DataStart,
    DataEnd,
}

impl SnapshotLabel {
    pub fn label(self) -> &'static str {
        match self {
            SnapshotLabel::LockStart => "lock-start",
            SnapshotLabel::LockEnd => "lock-end",
            SnapshotLabel::DataStart => "data-start",
            SnapshotLabel::DataEnd => "data-end",
        }
    }
}

/// Error statistics of one data phase, for error-rate timelines.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DataPhaseStats {
    pub t_start_s: f64,
    pub sent_plus: u64,
    pub sent_minus: u64,
    pub detected_plus: u64,
    pub detected_minus: u64,
    pub errors_plus: u64,
    pub errors_minus: u64,
}

/// End-to-end statistics of one session.
#[derive(Clone, Debug)]
pub struct SessionReport {
    pub duration_s: f64,
    pub n_pulses_sent: u64,
    pub n_detected: u64,
    /// Detected pulses with a discriminating middle-slot outcome.
    pub n_discriminating: u64,
    /// Configured mean photon number at the detector.
    pub mean_photon_number: f64,
    pub ber: BerEstimate,
    /// Sample standard deviation of measured trigger arrival offsets.
    pub timing_jitter_std_s: f64,
    pub words_sent: u64,
    pub decode_failures: u64,
    /// Words decoded to a different meaning than sent. The codebook
    /// guarantees zero under single pulse loss.
    pub silent_decode_errors: u64,
    pub tdi_snapshots: Vec<TdiSnapshot>,
    pub data_phases: Vec<DataPhaseStats>,
    /// Worst polarization error observed at correction instants.
    pub max_polarization_error_rad: f64,
}

impl SessionReport {
    pub fn ber_plus(&self) -> f64 {
        self.ber.ber_plus
    }

    pub fn ber_minus(&self) -> f64 {
        self.ber.ber_minus
    }

    pub fn ber_mean(&self) -> f64 {
        self.ber.ber_mean
    }
}

/// Timestamped event crossing the channel from transmitter to receiver.
#[derive(Clone, Debug)]
enum ChannelEvent {
    /// A clock command word; `symbols` is what survives the channel and
    /// `trigger_received` tells whether the framing pulse arrived.
    Word {
        t: f64,
        sent: CommandMeaning,
        trigger_received: bool,
        symbols: Vec<bool>,
    },
    /// Continuous reference light for locking, one window.
    TdiReferenceLight { t: f64, window_s: f64 },
    /// Continuous pilot light for polarization correction, one window.
    PolarizationLight { t: f64, window_s: f64 },
    /// A train of qubit pulses starting at `t`.
    QubitTrain {
        t: f64,
        n_pulses: u64,
        period_s: f64,
        first_state: SentState,
    },
}

impl ChannelEvent {
    fn time(&self) -> f64 {
        match self {
            ChannelEvent::Word { t, .. }
            | ChannelEvent::TdiReferenceLight { t, .. }
            | ChannelEvent::PolarizationLight { t, .. }
            | ChannelEvent::QubitTrain { t, .. } => *t,
        }
    }
}

/// Transmitter state machine: expands the cyclic sequence into channel
/// events, applying the channel's clock-pulse loss model on emission.
struct Transmitter<'a> {
    config: &'a TransmitterConfig,
    channel: &'a SessionChannel,
    clock_pulse_counter: u64,
    next_first_state: SentState,
}

impl<'a> Transmitter<'a> {
    fn new(config: &'a TransmitterConfig, channel: &'a SessionChannel) -> Self {
        Transmitter {
            config,
            channel,
            clock_pulse_counter: 0,
            next_first_state: SentState::Plus,
        }
    }

    /// True when this optical pulse survives the channel.
    fn pulse_survives(&mut self) -> bool {
        self.clock_pulse_counter += 1;
        match self.channel.clock_pulse_drop_every {
            Some(n) if n > 0 => self.clock_pulse_counter % n != 0,
            _ => true,
        }
    }

    fn word_duration_s(&self) -> f64 {
        (self.config.codebook.word_length() as f64 + 1.0) * super::codec::CLOCK_SLOT_PERIOD_S
    }

    /// Emits the command word for a phase, folding in pulse loss.
    fn emit_word(&mut self, t: f64, meaning: CommandMeaning, queue: &mut VecDeque<ChannelEvent>) {
        let word = self
            .config
            .codebook
            .word_for(meaning)
            .expect("codebook covers all session meanings");
        let trigger_received = self.pulse_survives();
        let symbols = word
            .symbols()
            .into_iter()
            .map(|s| if s { self.pulse_survives() } else { false })
            .collect();
        queue.push_back(ChannelEvent::Word {
            t: t + self.channel.transit_delay_s,
            sent: meaning,
            trigger_received,
            symbols,
        });
    }

    /// Expands one full cycle starting at `t`, truncated to `t_end`.
    /// Returns the time after the cycle.
    fn emit_cycle(
        &mut self,
        t: f64,
        t_end: f64,
        cycle: u32,
        queue: &mut VecDeque<ChannelEvent>,
    ) -> f64 {
        let mut t = t;
        let word_len = self.word_duration_s();

        // Interferometer lock window.
        self.emit_word(t, CommandMeaning::TdiReference, queue);
        t += word_len;
        let lock_window = self.config.tdi_reference_s.min((t_end - t).max(0.0));
        if lock_window > 0.0 {
            queue.push_back(ChannelEvent::TdiReferenceLight {
                t: t + self.channel.transit_delay_s,
                window_s: lock_window,
            });
        }
        t += lock_window;
        if t >= t_end {
            return t;
        }

        // Periodic polarization reference window.
        if cycle % self.config.polarization_every_cycles.max(1) == 0 {
            self.emit_word(t, CommandMeaning::PolarizationReference, queue);
            t += word_len;
            let pol_window = self.config.polarization_reference_s.min((t_end - t).max(0.0));
            if pol_window > 0.0 {
                queue.push_back(ChannelEvent::PolarizationLight {
                    t: t + self.channel.transit_delay_s,
                    window_s: pol_window,
                });
            }
            t += pol_window;
            if t >= t_end {
                return t;
            }
        }

        // Qubit train.
        self.emit_word(t, CommandMeaning::DataTransmission, queue);
        t += word_len;
        let data_window = self.config.data_phase_s.min((t_end - t).max(0.0));
        let n_pulses = (data_window / self.config.qubit_period_s).floor() as u64;
        if n_pulses > 0 {
            queue.push_back(ChannelEvent::QubitTrain {
                t: t + self.channel.transit_delay_s,
                n_pulses,
                period_s: self.config.qubit_period_s,
                first_state: self.next_first_state,
            });
            if self.config.alternate_states && n_pulses % 2 == 1 {
                self.next_first_state = self.next_first_state.flipped();
            }
        }
        t += data_window;
        t
    }
}

/// Receiver state machine.
struct Receiver<'a> {
    config: &'a ReceiverConfig,
    tx: &'a TransmitterConfig,
    mode: CommandMeaning,
    tdi: TdiState,
    controller: PolarizationControllerState,
    /// Rotation currently applied by the correction optics, as the direct
    /// great-circle map from the walk state at the last correction onto the
    /// target.
    correction: Option<(StokesVector, RotationCommand)>,
    walk: PolarizationWalk,
    // Statistics.
    n_pulses_sent: u64,
    n_detected: u64,
    n_discriminating: u64,
    err_plus: u64,
    n_plus: u64,
    err_minus: u64,
    n_minus: u64,
    words_sent: u64,
    decode_failures: u64,
    silent_decode_errors: u64,
    jitter_stats: Welford,
    snapshots: Vec<TdiSnapshot>,
    data_phases: Vec<DataPhaseStats>,
    max_pol_error: f64,
    detect_rng: rand_chacha::ChaCha8Rng,
    bit_rng: rand_chacha::ChaCha8Rng,
    bin_phase_sigma: f64,
    session_t0: f64,
}

/// Second-resolution polarization walk of the fiber, generated lazily.
struct PolarizationWalk {
    states: Vec<StokesVector>,
    sigma_step: f64,
    rng: rand_chacha::ChaCha8Rng,
}

impl PolarizationWalk {
    fn new(channel: &SessionChannel, seed: RandomSeed) -> Self {
        let rate_scale = 1.0 / (std::f64::consts::PI / 2.0).sqrt();
        PolarizationWalk {
            states: vec![StokesVector::horizontal()],
            sigma_step: channel.pol_params.mean_rate_rad_per_s(channel.wind_mph) * rate_scale,
            rng: seed.stream(streams::SESSION_WALK),
        }
    }

    /// Walk state at integer second `s`.
    fn at(&mut self, s: usize) -> StokesVector {
        while self.states.len() <= s {
            let p = *self.states.last().unwrap();
            let theta = if self.sigma_step > 0.0 {
                let u: f64 = self.rng.random();
                self.sigma_step * (-2.0 * (1.0 - u).ln()).sqrt()
            } else {
                let _: f64 = self.rng.random();
                0.0
            };
            let psi: f64 = self.rng.random::<f64>() * 2.0 * std::f64::consts::PI;
            let (e1, e2) = p.tangent_basis();
            let (sp, cp) = psi.sin_cos();
            let axis = [
                cp * e2[0] - sp * e1[0],
                cp * e2[1] - sp * e1[1],
                cp * e2[2] - sp * e1[2],
            ];
            self.states.push(p.rotated_about(axis, theta));
        }
        self.states[s]
    }
}

struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn new() -> Self {
        Welford {
            n: 0,
            mean: 0.0,
            m2: 0.0,
        }
    }

    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn std(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n as f64 - 1.0)).sqrt()
        }
    }
}

impl<'a> Receiver<'a> {
    fn new(
        config: &'a ReceiverConfig,
        channel: &'a SessionChannel,
        tx: &'a TransmitterConfig,
        seed: RandomSeed,
        session_t0: f64,
    ) -> Self {
        let mut tdi = TdiState::new(config.visibility).expect("valid visibility");
        tdi.path_imbalance_m = match config.initial_imbalance_m {
            Some(m) => m,
            None => {
                let mut rng = seed.stream(streams::SESSION_LOCK_INIT);
                (rng.random::<f64>() - 0.5) * tdi.wavelength_m
            }
        };
        // Phase diffusion across one bin spacing of the transmit route.
        let diffusion = (2.0 * std::f64::consts::PI).powi(2)
            * channel.phase_params.span_variance_hz2(channel.length_m)
            / crate::noise::CALIBRATION_RATE_HZ;
        let bin_phase_sigma = (diffusion * BIN_SPACING_S).sqrt();
        Receiver {
            config,
            tx,
            mode: CommandMeaning::Idle,
            tdi,
            controller: PolarizationControllerState {
                current: channel.target_polarization,
                target: channel.target_polarization,
                tolerance_rad: config.polarization_tolerance_rad,
            },
            correction: None,
            walk: PolarizationWalk::new(channel, seed),
            n_pulses_sent: 0,
            n_detected: 0,
            n_discriminating: 0,
            err_plus: 0,
            n_plus: 0,
            err_minus: 0,
            n_minus: 0,
            words_sent: 0,
            decode_failures: 0,
            silent_decode_errors: 0,
            jitter_stats: Welford::new(),
            snapshots: Vec::new(),
            data_phases: Vec::new(),
            max_pol_error: 0.0,
            detect_rng: seed.stream(streams::SESSION_DETECTION),
            bit_rng: seed.stream(streams::SESSION_BITS),
            bin_phase_sigma,
            session_t0,
        }
    }

    /// Effective polarization transmission through the corrected optics.
    fn polarization_efficiency(&mut self, second: usize) -> f64 {
        let q = self.walk.at(second);
        let error = match &self.correction {
            Some((reference, _)) => q.angle_to(reference),
            None => q.angle_to(&self.controller.target),
        };
        0.5 * (1.0 + error.cos())
    }

    fn handle_word(
        &mut self,
        sent: CommandMeaning,
        trigger_received: bool,
        symbols: &[bool],
        t: f64,
        log: &mut Option<&mut dyn Write>,
    ) -> Result<()> {
        self.words_sent += 1;
        let outcome = if trigger_received {
            self.tx.codebook.decode(symbols)?
        } else {
            // Without the framing trigger the word never registers.
            Decoded::Erasure
        };
        match outcome.meaning() {
            Some(meaning) => {
                if meaning != sent {
                    self.silent_decode_errors += 1;
                }
                self.mode = meaning;
            }
            None => {
                self.decode_failures += 1;
                self.mode = CommandMeaning::Idle;
            }
        }
        if let Some(w) = log {
            let decoded = match outcome {
                Decoded::Exact(m) => format!("exact:{}", m.label()),
                Decoded::Recovered(m) => format!("recovered:{}", m.label()),
                Decoded::Erasure => "erasure".to_string(),
            };
            writeln!(w, "{t:.9}\tword\tsent={} decoded={decoded}", sent.label())?;
        }
        Ok(())
    }

    fn handle_lock_window(
        &mut self,
        t: f64,
        window_s: f64,
        log: &mut Option<&mut dyn Write>,
    ) -> Result<()> {
        if self.mode != CommandMeaning::TdiReference {
            return Ok(());
        }
        self.snapshot(t, SnapshotLabel::LockStart);
        let steps = (window_s * self.config.lock_rate_hz).round() as usize;
        for _ in 0..steps {
            let power = self.tdi.reference_fringe_signal();
            self.tdi = super::tdi::tdi_lock_step(power, &self.tdi, &self.config.lock_gains)?;
        }
        self.snapshot(t + window_s, SnapshotLabel::LockEnd);
        if let Some(w) = log {
            writeln!(
                w,
                "{:.9}\tlock\tfringe_error={:.3e}",
                t + window_s,
                (self.tdi.reference_fringe_signal() - 0.5).abs()
            )?;
        }
        Ok(())
    }

    fn handle_polarization_window(
        &mut self,
        t: f64,
        window_s: f64,
        log: &mut Option<&mut dyn Write>,
    ) -> Result<()> {
        if self.mode != CommandMeaning::PolarizationReference {
            // The fiber still drifts; nothing to correct against.
            return Ok(());
        }
        let start_second = (t - self.session_t0).floor() as usize;
        let n = window_s.floor().max(1.0) as usize;
        for k in 0..n {
            let second = start_second + k;
            let q = self.walk.at(second);
            // Measured polarization after the currently applied correction.
            let measured = match &self.correction {
                Some((_, cmd)) => q.rotated_about(cmd.axis, cmd.angle_rad),
                None => q,
            };
            let error_before = measured.angle_to(&self.controller.target);
            self.max_pol_error = self.max_pol_error.max(error_before);
            let (command, next) = polarization_correct(&self.controller, measured);
            self.controller = next;
            // Store the direct map walk-state -> target that the optics now
            // implement.
            let (direct_cmd, _) = polarization_correct(&self.controller, q);
            self.correction = Some((q, direct_cmd));
            if let Some(w) = log {
                writeln!(
                    w,
                    "{:.9}\tpolarization\terror_before={:.4} command_angle={:.4}",
                    t + k as f64,
                    error_before,
                    command.angle_rad
                )?;
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_lines)]
    fn handle_qubit_train(
        &mut self,
        t: f64,
        n_pulses: u64,
        period_s: f64,
        first_state: SentState,
        log: &mut Option<&mut dyn Write>,
    ) -> Result<()> {
        self.n_pulses_sent += n_pulses;
        if self.mode != CommandMeaning::DataTransmission {
            // Measurement gated off; the train is pure loss.
            if let Some(w) = log {
                writeln!(w, "{t:.9}\tdata\tgated_off pulses={n_pulses}")?;
            }
            return Ok(());
        }

        // Inter-lock drift lands while the servo is frozen.
        self.tdi.path_imbalance_m += self.config.tdi_drift_per_data_phase_m;
        self.snapshot(t, SnapshotLabel::DataStart);
        let imbalance_at_start = self.tdi.path_imbalance_m.to_bits();

        let mut stats = DataPhaseStats {
            t_start_s: t,
            sent_plus: 0,
            sent_minus: 0,
            detected_plus: 0,
            detected_minus: 0,
            errors_plus: 0,
            errors_minus: 0,
        };
        let extra_attenuation = 10f64.powf(-self.config.extra_loss_db / 10.0);
        let spacing = BIN_SPACING_S;
        let pulses_per_second = (1.0 / period_s).round().max(1.0) as u64;

        let mut state = first_state;
        let mut pulse_index = 0u64;
        while pulse_index < n_pulses {
            // Second-resolution environment: polarization efficiency and the
            // optional visibility ramp change slowly.
            let t_second = t + pulse_index as f64 * period_s;
            let second = (t_second - self.session_t0).floor() as usize;
            let pol_eff = self.polarization_efficiency(second);
            let mean_photon = self.config.detected_mean_photon_number * pol_eff * extra_attenuation;
            let p_any = 1.0 - (-mean_photon).exp();
            let visibility = (self.config.visibility
                - self.config.visibility_ramp_per_s * (t_second - self.session_t0))
                .clamp(0.0, 1.0);
            let qubit_phase = self.tdi.qubit_fringe_phase();

            let block_end = (pulse_index + pulses_per_second).min(n_pulses);
            for _ in pulse_index..block_end {
                let sent = state;
                if self.tx.alternate_states {
                    state = state.flipped();
                } else {
                    state = if self.bit_rng.random::<bool>() {
                        SentState::Plus
                    } else {
                        SentState::Minus
                    };
                }
                match sent {
                    SentState::Plus => stats.sent_plus += 1,
                    SentState::Minus => stats.sent_minus += 1,
                }

                let u: f64 = self.detect_rng.random();
                if u >= p_any {
                    continue;
                }
                // Detected pulse: expand the event in full.
                self.n_detected += 1;
                let jitter = if self.config.timing_jitter_std_s > 0.0 {
                    let g: f64 = self.detect_rng.sample(StandardNormal);
                    g * self.config.timing_jitter_std_s
                } else {
                    0.0
                };
                self.jitter_stats.push(jitter);
                let photons = sample_truncated_poisson(mean_photon, &mut self.detect_rng);
                let bin_phase = if self.bin_phase_sigma > 0.0 {
                    let g: f64 = self.detect_rng.sample(StandardNormal);
                    g * self.bin_phase_sigma
                } else {
                    0.0
                };
                let mut qubit = sent.qubit();
                qubit.relative_phase += bin_phase;
                let probs = slot_probabilities_with_phase(&qubit, visibility, qubit_phase);
                let cum = [probs[0], probs[0] + probs[1], probs[0] + probs[1] + probs[2]];

                let mut mid0 = 0u32;
                let mut mid1 = 0u32;
                for _ in 0..photons {
                    let u: f64 = self.detect_rng.random();
                    // Slots: 0 early, 1 middle (both ports), 2 late.
                    let nominal_slot = if u < cum[0] {
                        0
                    } else if u < cum[2] {
                        1
                    } else {
                        2
                    };
                    let port1 = u >= cum[1] && u < cum[2];
                    // Trigger jitter can reassign the arrival slot; at the
                    // calibrated 520 ps it never does.
                    let arrival = nominal_slot as f64 * spacing + jitter;
                    let assigned = nearest_slot(arrival, 0.0, spacing, 3);
                    if assigned == 1 {
                        if nominal_slot == 1 {
                            if port1 {
                                mid1 += 1;
                            } else {
                                mid0 += 1;
                            }
                        } else {
                            // An outer-slot photon wandering into the middle
                            // window carries no interference information.
                            if self.detect_rng.random::<bool>() {
                                mid1 += 1;
                            } else {
                                mid0 += 1;
                            }
                        }
                    }
                }
                if mid0 != mid1 {
                    self.n_discriminating += 1;
                    let measured_plus = mid0 > mid1;
                    match sent {
                        SentState::Plus => {
                            stats.detected_plus += 1;
                            self.n_plus += 1;
                            if !measured_plus {
                                stats.errors_plus += 1;
                                self.err_plus += 1;
                            }
                        }
                        SentState::Minus => {
                            stats.detected_minus += 1;
                            self.n_minus += 1;
                            if measured_plus {
                                stats.errors_minus += 1;
                                self.err_minus += 1;
                            }
                        }
                    }
                }
            }
            pulse_index = block_end;
        }

        // The lock integrator is frozen during data: nothing may have moved.
        assert_eq!(self.tdi.path_imbalance_m.to_bits(), imbalance_at_start);
        self.snapshot(t + n_pulses as f64 * period_s, SnapshotLabel::DataEnd);
        self.data_phases.push(stats);
        if let Some(w) = log {
            writeln!(
                w,
                "{t:.9}\tdata\tpulses={n_pulses} detected={} errors={}",
                stats.detected_plus + stats.detected_minus,
                stats.errors_plus + stats.errors_minus
            )?;
        }
        Ok(())
    }

    fn snapshot(&mut self, t: f64, label: SnapshotLabel) {
        self.snapshots.push(TdiSnapshot {
            time_s: t,
            label,
            path_imbalance_m: self.tdi.path_imbalance_m,
            reference_fringe_error: (self.tdi.reference_fringe_signal() - 0.5).abs(),
        });
    }
}

fn sample_truncated_poisson(lambda: f64, rng: &mut rand_chacha::ChaCha8Rng) -> u32 {
    // Conditional distribution of a Poisson count given at least one photon.
    let p0 = (-lambda).exp();
    let norm = 1.0 - p0;
    let u: f64 = rng.random();
    let mut k = 1u32;
    let mut pk = lambda * p0;
    let mut cum = pk / norm;
    while u > cum && k < 50 {
        k += 1;
        pk *= lambda / k as f64;
        cum += pk / norm;
    }
    k
}

/// Runs a full send-and-measure session.
///
/// Deterministic for a fixed `(configs, duration, seed)` tuple. Fails with
/// `DesyncError` when the undecodable-word fraction exceeds the receiver's
/// tolerance.
pub fn run_session(
    tx: &TransmitterConfig,
    rx: &ReceiverConfig,
    channel: &SessionChannel,
    duration_s: f64,
    seed: RandomSeed,
) -> Result<SessionReport> {
    run_session_impl(tx, rx, channel, duration_s, seed, &mut None)
}

/// [`run_session`] with a per-event log written as tab-delimited text:
/// timestamp, event kind, outcome.
pub fn run_session_with_log(
    tx: &TransmitterConfig,
    rx: &ReceiverConfig,
    channel: &SessionChannel,
    duration_s: f64,
    seed: RandomSeed,
    log: &mut dyn Write,
) -> Result<SessionReport> {
    run_session_impl(tx, rx, channel, duration_s, seed, &mut Some(log))
}

fn run_session_impl(
    tx: &TransmitterConfig,
    rx: &ReceiverConfig,
    channel: &SessionChannel,
    duration_s: f64,
    seed: RandomSeed,
    log: &mut Option<&mut dyn Write>,
) -> Result<SessionReport> {
    if !duration_s.is_finite() || duration_s <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "session duration {duration_s} s"
        )));
    }
    let mut transmitter = Transmitter::new(tx, channel);
    let mut queue: VecDeque<ChannelEvent> = VecDeque::new();

    // The transmitter expands its whole schedule; the scheduler then delivers
    // events to the receiver in global-time order.
    let mut t = 0.0f64;
    let mut cycle = 0u32;
    while t < duration_s {
        let t_next = transmitter.emit_cycle(t, duration_s, cycle, &mut queue);
        assert!(t_next > t, "cycle must advance time");
        t = t_next;
        cycle += 1;
    }

    let rx_t0 = channel.transit_delay_s;
    let mut receiver = Receiver::new(rx, channel, tx, seed, rx_t0);
    while let Some(event) = queue.pop_front() {
        debug_assert!(queue.front().map_or(true, |n| n.time() >= event.time()));
        match event {
            ChannelEvent::Word {
                t,
                sent,
                trigger_received,
                symbols,
            } => receiver.handle_word(sent, trigger_received, &symbols, t, log)?,
            ChannelEvent::TdiReferenceLight { t, window_s } => {
                receiver.handle_lock_window(t, window_s, log)?
            }
            ChannelEvent::PolarizationLight { t, window_s } => {
                receiver.handle_polarization_window(t, window_s, log)?
            }
            ChannelEvent::QubitTrain {
                t,
                n_pulses,
                period_s,
                first_state,
            } => receiver.handle_qubit_train(t, n_pulses, period_s, first_state, log)?,
        }
    }

    if receiver.words_sent > 0 {
        let erasure_fraction = receiver.decode_failures as f64 / receiver.words_sent as f64;
        if erasure_fraction > rx.desync_erasure_fraction {
            return Err(Error::DesyncError(format!(
                "{} of {} words undecodable ({erasure_fraction:.2} > {})",
                receiver.decode_failures, receiver.words_sent, rx.desync_erasure_fraction
            )));
        }
    }

    Ok(SessionReport {
        duration_s,
        n_pulses_sent: receiver.n_pulses_sent,
        n_detected: receiver.n_detected,
        n_discriminating: receiver.n_discriminating,
        mean_photon_number: rx.detected_mean_photon_number,
        ber: ber_from_counts(
            receiver.err_plus,
            receiver.n_plus,
            receiver.err_minus,
            receiver.n_minus,
        ),
        timing_jitter_std_s: receiver.jitter_stats.std(),
        words_sent: receiver.words_sent,
        decode_failures: receiver.decode_failures,
        silent_decode_errors: receiver.silent_decode_errors,
        tdi_snapshots: receiver.snapshots,
        data_phases: receiver.data_phases,
        max_polarization_error_rad: receiver.max_pol_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ideal_rx() -> ReceiverConfig {
        ReceiverConfig {
            visibility: 1.0,
            detected_mean_photon_number: 0.05,
            timing_jitter_std_s: 0.0,
            initial_imbalance_m: Some(0.0),
            ..ReceiverConfig::default()
        }
    }

    fn quiet_channel() -> SessionChannel {
        SessionChannel {
            wind_mph: 0.0,
            phase_params: PhaseNoiseParams {
                variance_per_meter_hz2: 0.0,
                covariance_fraction: 0.0,
            },
            ..SessionChannel::default()
        }
    }

    fn short_tx() -> TransmitterConfig {
        TransmitterConfig {
            data_phase_s: 2.0,
            polarization_reference_s: 1.0,
            qubit_period_s: 10e-6,
            ..TransmitterConfig::default()
        }
    }

    #[test]
    fn polarization_correct_identity_and_orthogonal() {
        let target = StokesVector::horizontal();
        let state = PolarizationControllerState {
            current: target,
            target,
            tolerance_rad: POLARIZATION_TOLERANCE_RAD,
        };
        let (cmd, next) = polarization_correct(&state, target);
        assert!(cmd.is_identity());
        assert_eq!(next.current, target);

        let orthogonal = StokesVector::new(0.0, 1.0, 0.0).unwrap();
        let (cmd, next) = polarization_correct(&state, orthogonal);
        assert!((cmd.angle_rad - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        // The command really maps measured onto target.
        let rotated = orthogonal.rotated_about(cmd.axis, cmd.angle_rad);
        assert!(rotated.angle_to(&target) < 1e-9);
        assert_eq!(next.current, target);
    }

    #[test]
    fn compute_ber_reference_cases() {
        let sent = vec![SentState::Plus, SentState::Minus, SentState::Plus];
        let all_right = vec![
            MeasuredOutcome::Plus,
            MeasuredOutcome::Minus,
            MeasuredOutcome::Plus,
        ];
        let ber = compute_ber(&sent, &all_right).unwrap();
        assert_eq!(ber.ber_mean, 0.0);

        let all_wrong = vec![
            MeasuredOutcome::Minus,
            MeasuredOutcome::Plus,
            MeasuredOutcome::Minus,
        ];
        let ber = compute_ber(&sent, &all_wrong).unwrap();
        assert_eq!(ber.ber_mean, 1.0);

        assert!(matches!(
            compute_ber(&sent, &all_wrong[..2]),
            Err(Error::Misaligned(_))
        ));
    }

    #[test]
    fn compute_ber_excludes_losses_and_reports_binomial_error() {
        // 23 errors in 1000 detections plus some losses.
        let mut sent = Vec::new();
        let mut measured = Vec::new();
        for i in 0..1000 {
            sent.push(SentState::Plus);
            measured.push(if i < 23 {
                MeasuredOutcome::Minus
            } else {
                MeasuredOutcome::Plus
            });
        }
        for i in 0..500 {
            sent.push(SentState::Plus);
            measured.push(if i % 2 == 0 {
                MeasuredOutcome::Undetected
            } else {
                MeasuredOutcome::Ambiguous
            });
        }
        let ber = compute_ber(&sent, &measured).unwrap();
        assert!((ber.ber_mean - 0.023).abs() < 1e-12);
        let expected_se = (0.023f64 * (1.0 - 0.023) / 1000.0).sqrt();
        assert!((ber.ber_mean_std_error - expected_se).abs() < 1e-9);
    }

    #[test]
    fn ideal_channel_has_zero_ber() {
        let report = run_session(&short_tx(), &ideal_rx(), &quiet_channel(), 10.0, RandomSeed(1))
            .unwrap();
        assert!(report.n_detected > 0);
        assert_eq!(report.ber.ber_mean, 0.0);
        assert_eq!(report.decode_failures, 0);
        assert_eq!(report.silent_decode_errors, 0);
        assert!(report.n_detected <= report.n_pulses_sent);
    }

    #[test]
    fn sessions_are_deterministic() {
        let run = || {
            run_session(
                &short_tx(),
                &ReceiverConfig::default(),
                &SessionChannel::default(),
                12.0,
                RandomSeed(9),
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.n_detected, b.n_detected);
        assert_eq!(a.ber.ber_mean.to_bits(), b.ber.ber_mean.to_bits());
        assert_eq!(a.n_pulses_sent, b.n_pulses_sent);
        assert_eq!(
            a.timing_jitter_std_s.to_bits(),
            b.timing_jitter_std_s.to_bits()
        );
    }

    #[test]
    fn visibility_sets_the_error_rate() {
        // Low mean photon number keeps per-pulse multi-photon majority
        // voting from biasing the single-photon error rate.
        let rx = ReceiverConfig {
            visibility: 0.9,
            detected_mean_photon_number: 0.02,
            timing_jitter_std_s: 0.0,
            initial_imbalance_m: Some(0.0),
            ..ReceiverConfig::default()
        };
        let tx = TransmitterConfig {
            data_phase_s: 8.0,
            polarization_reference_s: 1.0,
            qubit_period_s: 2e-6,
            ..TransmitterConfig::default()
        };
        let report = run_session(&tx, &rx, &quiet_channel(), 30.0, RandomSeed(3)).unwrap();
        let expected = (1.0 - 0.9) / 2.0;
        let tolerance = (4.0 * report.ber.ber_mean_std_error).max(1.5e-3);
        assert!(
            (report.ber.ber_mean - expected).abs() < tolerance,
            "ber {} vs expected {expected}",
            report.ber.ber_mean
        );
    }

    #[test]
    fn dropped_clock_pulses_recover_or_erase_without_slips() {
        let channel = SessionChannel {
            clock_pulse_drop_every: Some(10),
            ..quiet_channel()
        };
        let report = run_session(&short_tx(), &ideal_rx(), &channel, 60.0, RandomSeed(5)).unwrap();
        assert_eq!(report.silent_decode_errors, 0);
        assert_eq!(report.ber.ber_mean, 0.0);
        assert!(report.words_sent > 0);
    }

    #[test]
    fn heavy_clock_loss_desyncs() {
        let channel = SessionChannel {
            clock_pulse_drop_every: Some(2),
            ..quiet_channel()
        };
        let err = run_session(&short_tx(), &ideal_rx(), &channel, 60.0, RandomSeed(5)).unwrap_err();
        assert!(matches!(err, Error::DesyncError(_)));
    }

    #[test]
    fn extra_loss_reduces_detections_not_ber() {
        let tx = TransmitterConfig {
            data_phase_s: 8.0,
            polarization_reference_s: 1.0,
            qubit_period_s: 2e-6,
            ..TransmitterConfig::default()
        };
        let rx0 = ReceiverConfig {
            initial_imbalance_m: Some(0.0),
            ..ReceiverConfig::default()
        };
        let rx3 = ReceiverConfig {
            extra_loss_db: 10.0 * 2.0f64.log10(),
            ..rx0.clone()
        };
        let channel = quiet_channel();
        let a = run_session(&tx, &rx0, &channel, 30.0, RandomSeed(7)).unwrap();
        let b = run_session(&tx, &rx3, &channel, 30.0, RandomSeed(7)).unwrap();
        let ratio = b.n_detected as f64 / a.n_detected as f64;
        assert!((ratio - 0.5).abs() < 0.02, "detection ratio {ratio}");
        let se = (a.ber.ber_mean_std_error.powi(2) + b.ber.ber_mean_std_error.powi(2)).sqrt();
        assert!(
            (a.ber.ber_mean - b.ber.ber_mean).abs() < 2.0 * se.max(1e-4),
            "ber moved from {} to {}",
            a.ber.ber_mean,
            b.ber.ber_mean
        );
    }

    #[test]
    fn lock_holds_bit_identical_through_data_phases() {
        let report = run_session(
            &short_tx(),
            &ReceiverConfig::default(),
            &SessionChannel::default(),
            25.0,
            RandomSeed(11),
        )
        .unwrap();
        let mut last_data_start: Option<f64> = None;
        for snap in &report.tdi_snapshots {
            match snap.label {
                SnapshotLabel::DataStart => last_data_start = Some(snap.path_imbalance_m),
                SnapshotLabel::DataEnd => {
                    let start = last_data_start.expect("start before end");
                    assert_eq!(start.to_bits(), snap.path_imbalance_m.to_bits());
                }
                _ => {}
            }
        }
    }

    #[test]
    fn random_bit_streams_behave_like_alternation() {
        let tx = TransmitterConfig {
            alternate_states: false,
            data_phase_s: 8.0,
            polarization_reference_s: 1.0,
            ..TransmitterConfig::default()
        };
        let rx = ReceiverConfig {
            visibility: 0.9,
            detected_mean_photon_number: 0.02,
            timing_jitter_std_s: 0.0,
            initial_imbalance_m: Some(0.0),
            ..ReceiverConfig::default()
        };
        let report = run_session(&tx, &rx, &quiet_channel(), 30.0, RandomSeed(17)).unwrap();
        // Both states are exercised and the error rate still tracks the
        // visibility.
        assert!(report.ber.n_plus > 0 && report.ber.n_minus > 0);
        let expected = (1.0 - 0.9) / 2.0;
        let tolerance = (4.0 * report.ber.ber_mean_std_error).max(1.5e-3);
        assert!((report.ber.ber_mean - expected).abs() < tolerance);
    }

    #[test]
    fn truncated_poisson_matches_conditional_mean() {
        let mut rng = RandomSeed(2).stream(77);
        let lambda = 0.02f64;
        let n = 200_000;
        let mean = (0..n)
            .map(|_| sample_truncated_poisson(lambda, &mut rng) as f64)
            .sum::<f64>()
            / n as f64;
        let expected = lambda / (1.0 - (-lambda).exp());
        assert!((mean - expected).abs() < 2e-3, "mean {mean} vs {expected}");
    }
}
