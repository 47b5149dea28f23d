//! Scenario configuration file.
//!
//! Values resolve in three layers: built-in defaults, then the scenario TOML
//! file, then command-line flags.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{CliError, ErrorClass};

#[derive(Clone, Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub phase: PhaseSection,
    #[serde(default)]
    pub polarization: PolarizationSection,
    #[serde(default)]
    pub delay: DelaySection,
    #[serde(default)]
    pub protocol: ProtocolSection,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Span calibration file; empty means the built-in defaults.
    pub spans_file: String,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            seed: 7,
            out_dir: PathBuf::from("out"),
            spans_file: String::new(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseSection {
    pub duration_s: f64,
    pub span_pair: [String; 2],
    pub psd_segment: usize,
    pub psd_fit_lo_hz: f64,
    pub psd_fit_hi_hz: f64,
}

impl Default for PhaseSection {
    fn default() -> Self {
        PhaseSection {
            duration_s: 60.0,
            span_pair: ["A".into(), "B".into()],
            psd_segment: 32_768,
            psd_fit_lo_hz: 10.0,
            psd_fit_hi_hz: 1000.0,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolarizationSection {
    pub duration_s: f64,
    /// Wind CSV path; empty generates a synthetic diurnal series.
    pub wind_file: String,
    pub wind_min_mph: f64,
    pub wind_max_mph: f64,
    pub rolling_window_s: f64,
    pub spectrogram_window_s: f64,
}

impl Default for PolarizationSection {
    fn default() -> Self {
        PolarizationSection {
            duration_s: 86_400.0,
            wind_file: String::new(),
            wind_min_mph: 2.0,
            wind_max_mph: 20.0,
            rolling_window_s: 600.0,
            spectrogram_window_s: 600.0,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DelaySection {
    pub duration_s: f64,
    /// Temperature CSV path; empty generates a synthetic diurnal series.
    pub temperature_file: String,
    pub mean_temperature_c: f64,
    pub temperature_swing_c: f64,
    pub reference_temperature_c: f64,
    /// Measured round-trip transit used as the nominal time of flight.
    pub tau0_round_trip_s: f64,
    /// Alternative convention: straight sum of the one-way transits.
    pub tau0_one_way_sum_s: f64,
    /// Residual transit mismatch of the copropagating pair as a fraction of
    /// the round-trip transit.
    pub span_mismatch_fraction: f64,
}

impl Default for DelaySection {
    fn default() -> Self {
        DelaySection {
            duration_s: 86_400.0,
            temperature_file: String::new(),
            mean_temperature_c: 10.0,
            temperature_swing_c: 8.0,
            reference_temperature_c: 10.0,
            tau0_round_trip_s: 415.045e-6,
            tau0_one_way_sum_s: 425.45e-6,
            span_mismatch_fraction: 0.01,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSection {
    pub duration_s: f64,
    pub visibility: f64,
    pub detected_mean_photon_number: f64,
    pub timing_jitter_std_s: f64,
    pub qubit_period_s: f64,
    pub data_phase_s: f64,
    pub tdi_reference_s: f64,
    pub polarization_reference_s: f64,
    pub polarization_every_cycles: u32,
    pub wind_mph: f64,
    pub extra_loss_db: f64,
    /// Drop every n-th optical clock pulse; 0 disables loss.
    pub clock_pulse_drop_every: u64,
    pub tdi_drift_per_data_phase_m: f64,
    pub visibility_ramp_per_s: f64,
    pub event_log: bool,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        ProtocolSection {
            duration_s: 336.0,
            visibility: 0.954,
            detected_mean_photon_number: 0.0202,
            timing_jitter_std_s: 520e-12,
            qubit_period_s: 2e-6,
            data_phase_s: 20.0,
            tdi_reference_s: 1.0,
            polarization_reference_s: 10.0,
            polarization_every_cycles: 1,
            wind_mph: 8.0,
            extra_loss_db: 0.0,
            clock_pulse_drop_every: 0,
            tdi_drift_per_data_phase_m: 0.0,
            visibility_ramp_per_s: 0.0,
            event_log: false,
        }
    }
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::new(
                ErrorClass::Config,
                format!("cannot read scenario file {}: {e}", path.display()),
            )
        })?;
        toml::from_str(&text).map_err(|e| {
            CliError::new(
                ErrorClass::Config,
                format!("invalid scenario file {}: {e}", path.display()),
            )
        })
    }
}
