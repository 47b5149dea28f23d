//! Time-bin qubit distribution protocol: clock-command codec, pulse carving,
//! interferometer measurement and lock, polarization correction, and session
//! orchestration with bit-error-rate accounting.

pub mod codec;
pub mod session;
pub mod tdi;
pub mod timebin;

pub use codec::{
    build_codebook, decode_command, hamming_distance, ClockCommandWord, Codebook, CommandMeaning,
    Decoded, CLOCK_PULSE_DURATION_S, CLOCK_SLOT_PERIOD_S,
};
pub use session::{
    compute_ber, polarization_correct, run_session, run_session_with_log, BerEstimate,
    DataPhaseStats, MeasuredOutcome, PolarizationControllerState, ReceiverConfig, RotationCommand,
    SentState, SessionChannel, SessionReport, SnapshotLabel, TdiSnapshot, TransmitterConfig,
    POLARIZATION_TOLERANCE_RAD,
};
pub use tdi::{
    run_lock_window, slot_probabilities, slot_probabilities_with_phase, tdi_lock_step,
    tdi_measure, LockGains, TdiCounts, TdiState, LOCK_WAVELENGTH_M, QUBIT_FRINGE_OFFSET_RAD,
};
pub use timebin::{
    apply_timing_jitter, carve_time_bins, nearest_slot, TimeBinQubit, TimeBinWaveform,
    TimingJitter, BIN_SPACING_S, PULSE_FWHM_S,
};
