//! Scenario runner: configures a topology plus noise plus protocol scenario,
//! runs the selected pipeline, and emits fit reports and plot-ready data
//! files. Outputs are deterministic for a fixed seed.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use fiberq::environment::{
    align_to_grid, parse_weather_csv, series_to_trace, synthetic_temperature, synthetic_wind,
    ColumnMapping, EnvironmentSeries,
};
use fiberq::estimation::{
    differentiate_phase, downsample, fit_gaussian_variance, fit_linear, fit_power_law,
    polarization_drift_rate, psd_slope, rolling_mean, span_variance_covariance, spectrogram,
    welch_psd,
};
use fiberq::model::{
    compose_configuration, Band, Calibration, ChannelPath, ConfigurationKind, SpanId,
};
use fiberq::noise::{
    integrate_phase, simulate_frequency_pair, simulate_polarization_walk, simulate_thermal_delay,
    CALIBRATION_RATE_HZ,
};
use fiberq::protocol::{
    run_session, run_session_with_log, ReceiverConfig, SessionChannel, SessionReport,
    TransmitterConfig,
};
use fiberq::report::{write_records, Record, ToRecord};
use fiberq::trace::{SampledTrace, StokesVector, Unit};
use fiberq::RandomSeed;

use crate::config::ScenarioConfig;
use crate::error::{CliError, ErrorClass};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pipeline {
    CharacterizePhase,
    CharacterizePolarization,
    CharacterizeDelay,
    RunProtocol,
}

impl Pipeline {
    pub fn dir_name(self) -> &'static str {
        match self {
            Pipeline::CharacterizePhase => "characterize-phase",
            Pipeline::CharacterizePolarization => "characterize-polarization",
            Pipeline::CharacterizeDelay => "characterize-delay",
            Pipeline::RunProtocol => "run-protocol",
        }
    }
}

/// A fully resolved scenario: config plus the flag overrides already applied.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub pipeline: Pipeline,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub duration_override_s: Option<f64>,
    pub event_log: bool,
}

impl Scenario {
    fn calibration(&self) -> Result<Calibration, CliError> {
        if self.config.scenario.spans_file.is_empty() {
            Ok(Calibration::builtin())
        } else {
            Ok(Calibration::load(&self.config.scenario.spans_file)?)
        }
    }

    fn seed(&self) -> RandomSeed {
        RandomSeed(self.seed)
    }
}

/// Runs one scenario, returning the paths written.
pub fn run_scenario(scenario: &Scenario) -> Result<Vec<PathBuf>, CliError> {
    if let Some(d) = scenario.duration_override_s {
        if !d.is_finite() || d <= 0.0 {
            return Err(CliError::new(
                ErrorClass::Config,
                format!("duration {d} s must be positive"),
            ));
        }
    }
    let dir = scenario.out_dir.join(scenario.pipeline.dir_name());
    fs::create_dir_all(&dir)?;
    match scenario.pipeline {
        Pipeline::CharacterizePhase => characterize_phase(scenario, &dir),
        Pipeline::CharacterizePolarization => characterize_polarization(scenario, &dir),
        Pipeline::CharacterizeDelay => characterize_delay(scenario, &dir),
        Pipeline::RunProtocol => run_protocol(scenario, &dir),
    }
}

/// Writes the report records of a run: stable order, one record per line.
pub fn emit_report(records: &[Record], path: &Path) -> Result<(), CliError> {
    if records.is_empty() {
        return Err(CliError::new(
            ErrorClass::Numeric,
            "no records produced".to_string(),
        ));
    }
    let file = fs::File::create(path)?;
    let mut writer = BufWriter::new(file);
    write_records(&mut writer, records)?;
    writer.flush()?;
    Ok(())
}

/// Writes a columnar plot-data file: `# header` then space-separated rows.
fn write_columns(
    path: &Path,
    header: &[&str],
    rows: impl Iterator<Item = Vec<f64>>,
) -> Result<(), CliError> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "# {}", header.join(" "))?;
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                write!(w, " ")?;
            }
            write!(w, "{v:e}")?;
            first = false;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Keeps every n-th sample so plot files stay around `cap` rows.
fn plot_stride(len: usize, cap: usize) -> usize {
    len.div_ceil(cap).max(1)
}

// ---------------------------------------------------------------------------
// characterize-phase
// ---------------------------------------------------------------------------

fn characterize_phase(scenario: &Scenario, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let cfg = &scenario.config.phase;
    let cal = scenario.calibration()?;
    let pair: Vec<SpanId> = cfg
        .span_pair
        .iter()
        .map(|s| s.parse::<SpanId>().map_err(CliError::from))
        .collect::<Result<_, _>>()?;
    let spans = cal.spans_by_id(&pair)?;
    let duration = scenario.duration_override_s.unwrap_or(cfg.duration_s);
    let dt = 1.0 / CALIBRATION_RATE_HZ;
    let length_m = spans[0].length_km * 1000.0;

    let (a, b) = simulate_frequency_pair(
        &spans[0].phase_params,
        length_m,
        duration,
        dt,
        scenario.seed(),
    )?;
    let diff_phase = integrate_phase(&a.sub(&b)?)?;
    let sum_phase = integrate_phase(&a.add(&b)?)?;

    // Measurement chain: decimate to the analysis rate, differentiate, fit.
    let measure = |phase: &SampledTrace| -> Result<(SampledTrace, fiberq::estimation::GaussianFit), CliError> {
        let at_rate = downsample(phase, CALIBRATION_RATE_HZ)?;
        let freq = differentiate_phase(&at_rate)?;
        let fit = fit_gaussian_variance(freq.scalar_values()?)?;
        Ok((freq, fit))
    };
    let (freq_diff, fit_diff) = measure(&diff_phase)?;
    let (freq_sum, fit_sum) = measure(&sum_phase)?;
    let decomposition = span_variance_covariance(fit_diff.variance, fit_sum.variance);
    if !decomposition.is_physical() {
        eprintln!(
            "warning: implied cross-span correlation exceeds one (V={:e}, C={:e})",
            decomposition.variance, decomposition.covariance
        );
    }

    let segment = cfg.psd_segment.min(diff_phase.len());
    let spec_diff = welch_psd(&diff_phase, segment)?;
    let spec_sum = welch_psd(&sum_phase, segment)?;
    let slope_diff = psd_slope(&spec_diff, cfg.psd_fit_lo_hz, cfg.psd_fit_hi_hz)?;
    let slope_sum = psd_slope(&spec_sum, cfg.psd_fit_lo_hz, cfg.psd_fit_hi_hz)?;

    let records = vec![
        fit_diff.to_record("differential_frequency_hz2"),
        fit_sum.to_record("round_trip_frequency_hz2"),
        decomposition.to_record("per_span_hz2"),
        Record::new("psd_slope")
            .text("name", "differential_phase")
            .float("db_per_decade", slope_diff)
            .float("f_lo_hz", cfg.psd_fit_lo_hz)
            .float("f_hi_hz", cfg.psd_fit_hi_hz),
        Record::new("psd_slope")
            .text("name", "round_trip_phase")
            .float("db_per_decade", slope_sum)
            .float("f_lo_hz", cfg.psd_fit_lo_hz)
            .float("f_hi_hz", cfg.psd_fit_hi_hz),
    ];

    let report_path = dir.join("report.txt");
    emit_report(&records, &report_path)?;

    // Phase traces, decimated for plotting.
    let phase_path = dir.join("phase.dat");
    let dv = diff_phase.scalar_values()?;
    let sv = sum_phase.scalar_values()?;
    let stride = plot_stride(dv.len(), 6000);
    write_columns(
        &phase_path,
        &["time_s", "differential_phase_rad", "round_trip_phase_rad"],
        (0..dv.len()).step_by(stride).map(|k| {
            vec![diff_phase.timestamp(k), dv[k], sv[k]]
        }),
    )?;

    // Frequency-deviation histograms.
    let hist_path = dir.join("frequency_histogram.dat");
    let sigma = fit_sum.variance.sqrt();
    let n_bins = 101usize;
    let lo = -4.0 * sigma;
    let width = 8.0 * sigma / n_bins as f64;
    let bin_of = |x: f64| -> Option<usize> {
        let bin = ((x - lo) / width).floor();
        (0.0..n_bins as f64).contains(&bin).then_some(bin as usize)
    };
    let mut counts_diff = vec![0u64; n_bins];
    let mut counts_sum = vec![0u64; n_bins];
    for &x in freq_diff.scalar_values()? {
        if let Some(bin) = bin_of(x) {
            counts_diff[bin] += 1;
        }
    }
    for &x in freq_sum.scalar_values()? {
        if let Some(bin) = bin_of(x) {
            counts_sum[bin] += 1;
        }
    }
    write_columns(
        &hist_path,
        &["frequency_hz", "count_differential", "count_round_trip"],
        (0..n_bins).map(|k| {
            vec![
                lo + (k as f64 + 0.5) * width,
                counts_diff[k] as f64,
                counts_sum[k] as f64,
            ]
        }),
    )?;

    let psd_path = dir.join("psd.dat");
    write_columns(
        &psd_path,
        &["frequency_hz", "differential_rad2_per_hz", "round_trip_rad2_per_hz"],
        spec_diff
            .frequencies
            .iter()
            .zip(&spec_diff.power)
            .zip(&spec_sum.power)
            .map(|((&f, &pd), &ps)| vec![f, pd, ps]),
    )?;

    Ok(vec![report_path, phase_path, hist_path, psd_path])
}

// ---------------------------------------------------------------------------
// characterize-polarization
// ---------------------------------------------------------------------------

fn load_series_or(
    path: &str,
    synth: impl FnOnce() -> EnvironmentSeries,
) -> Result<EnvironmentSeries, CliError> {
    if path.is_empty() {
        Ok(synth())
    } else {
        Ok(parse_weather_csv(path, &ColumnMapping::default())?)
    }
}

fn characterize_polarization(scenario: &Scenario, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let cfg = &scenario.config.polarization;
    let cal = scenario.calibration()?;
    let duration = scenario.duration_override_s.unwrap_or(cfg.duration_s);
    let wind_series = load_series_or(&cfg.wind_file, || {
        synthetic_wind(
            0.0,
            duration,
            60.0,
            cfg.wind_min_mph,
            cfg.wind_max_mph,
            scenario.seed(),
        )
    })?;
    let wind = series_to_trace(&wind_series, 1.0)?;

    let one_way_params = &cal.span(SpanId::A)?.pol_params;
    let round_trip_params = &cal.round_trip_polarization;
    let walk_one_way = simulate_polarization_walk(
        one_way_params,
        &wind,
        1.0,
        StokesVector::horizontal(),
        scenario.seed(),
    )?;
    // Independent draw for the composed route.
    let walk_round_trip = simulate_polarization_walk(
        round_trip_params,
        &wind,
        1.0,
        StokesVector::horizontal(),
        RandomSeed(scenario.seed.wrapping_add(1)),
    )?;

    let mut records = Vec::new();
    let mut analyzed = Vec::new();
    for (name, walk, params) in [
        ("one_way", &walk_one_way, one_way_params),
        ("round_trip", &walk_round_trip, round_trip_params),
    ] {
        let rate = polarization_drift_rate(walk)?;
        let smoothed = rolling_mean(&rate, cfg.rolling_window_s)?;
        let rate_mrad = smoothed.scaled(1e3, Unit::Dimensionless)?;
        let wind_aligned = align_to_grid(&wind_series, &rate_mrad.grid())?;
        let fit = fit_power_law(&rate_mrad, &wind_aligned)?;
        let mut record = fit.to_record(name);
        record = record
            .float("generator_kappa_mrad_per_s", params.kappa_mrad_per_s)
            .float("generator_n_exponent", params.n_exponent);
        records.push(record);
        analyzed.push((name, rate, rate_mrad, wind_aligned));
    }

    // Spectral view of the one-way drift rate.
    let one_way_rate = &analyzed[0].1;
    let segment = 4096usize.min(one_way_rate.len());
    let spec = welch_psd(one_way_rate, segment)?;
    let windows = spectrogram(one_way_rate, cfg.spectrogram_window_s)?;
    records.push(
        Record::new("spectrogram")
            .text("name", "one_way_drift_rate")
            .float("window_s", cfg.spectrogram_window_s)
            .int("n_windows", windows.len() as i64)
            .float("lowest_bin_hz", windows.first().map_or(0.0, |w| w.frequencies[0])),
    );

    let report_path = dir.join("report.txt");
    emit_report(&records, &report_path)?;

    // Stokes trace of the one-way walk.
    let stokes_path = dir.join("stokes.dat");
    let pol = walk_one_way.stokes_values()?;
    let stride = plot_stride(pol.len(), 6000);
    write_columns(
        &stokes_path,
        &["time_s", "s1", "s2", "s3"],
        (0..pol.len()).step_by(stride).map(|k| {
            vec![walk_one_way.timestamp(k), pol[k].s1, pol[k].s2, pol[k].s3]
        }),
    )?;

    // Rolling drift rate against wind.
    let rate_path = dir.join("drift_rate.dat");
    let (_, _, one_mrad, one_wind) = &analyzed[0];
    let (_, _, two_mrad, _) = &analyzed[1];
    let ov = one_mrad.scalar_values()?;
    let tv = two_mrad.scalar_values()?;
    let wv = one_wind.scalar_values()?;
    let stride = plot_stride(ov.len(), 6000);
    write_columns(
        &rate_path,
        &[
            "time_s",
            "one_way_mrad_per_s",
            "round_trip_mrad_per_s",
            "wind_mph",
        ],
        (0..ov.len()).step_by(stride).map(|k| {
            vec![one_mrad.timestamp(k), ov[k], tv[k], wv[k]]
        }),
    )?;

    let scatter_path = dir.join("drift_vs_wind.dat");
    let stride = plot_stride(ov.len(), 6000);
    write_columns(
        &scatter_path,
        &["wind_mph", "one_way_mrad_per_s", "round_trip_mrad_per_s"],
        (0..ov.len()).step_by(stride).map(|k| vec![wv[k], ov[k], tv[k]]),
    )?;

    let psd_path = dir.join("psd.dat");
    write_columns(
        &psd_path,
        &["frequency_hz", "one_way_rate_rad2_per_s2_per_hz"],
        spec.frequencies
            .iter()
            .zip(&spec.power)
            .map(|(&f, &p)| vec![f, p]),
    )?;

    // Long-format spectrogram: window start, frequency, power.
    let sgram_path = dir.join("spectrogram.dat");
    write_columns(
        &sgram_path,
        &["window_start_s", "frequency_hz", "power"],
        windows.iter().enumerate().flat_map(|(i, w)| {
            let t0 = i as f64 * cfg.spectrogram_window_s;
            w.frequencies
                .iter()
                .zip(&w.power)
                .map(move |(&f, &p)| vec![t0, f, p])
                .collect::<Vec<_>>()
        }),
    )?;

    Ok(vec![
        report_path,
        stokes_path,
        rate_path,
        scatter_path,
        psd_path,
        sgram_path,
    ])
}

// ---------------------------------------------------------------------------
// characterize-delay
// ---------------------------------------------------------------------------

fn characterize_delay(scenario: &Scenario, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let cfg = &scenario.config.delay;
    let cal = scenario.calibration()?;
    let duration = scenario.duration_override_s.unwrap_or(cfg.duration_s);
    let series = load_series_or(&cfg.temperature_file, || {
        synthetic_temperature(
            0.0,
            duration,
            60.0,
            cfg.mean_temperature_c,
            cfg.temperature_swing_c,
            scenario.seed(),
        )
    })?;
    let temperature = series_to_trace(&series, 60.0)?;
    let thermal = &cal.span(SpanId::A)?.thermal_params;

    let mut records = Vec::new();
    let mut traces = Vec::new();
    let cases = [
        ("round_trip", cfg.tau0_round_trip_s),
        ("one_way_sum", cfg.tau0_one_way_sum_s),
        (
            "differential_mismatch",
            cfg.span_mismatch_fraction * cfg.tau0_round_trip_s,
        ),
    ];
    for (name, tau0) in cases {
        let delay = simulate_thermal_delay(thermal, &temperature, tau0, cfg.reference_temperature_c)?;
        let fit = fit_linear(&delay, &temperature)?;
        records.push(
            fit.to_record(name)
                .float("tau0_s", tau0)
                .float("analytic_slope_s_per_c", thermal.slope_s_per_c(tau0)),
        );
        traces.push((name, delay));
    }

    let segment = 512usize.min(traces[0].1.len());
    let spec = welch_psd(&traces[0].1, segment)?;

    let report_path = dir.join("report.txt");
    emit_report(&records, &report_path)?;

    let series_path = dir.join("timeseries.dat");
    let tv = temperature.scalar_values()?;
    let rt = traces[0].1.scalar_values()?;
    let dm = traces[2].1.scalar_values()?;
    write_columns(
        &series_path,
        &[
            "time_s",
            "temperature_c",
            "round_trip_delay_s",
            "differential_delay_s",
        ],
        (0..tv.len()).map(|k| vec![temperature.timestamp(k), tv[k], rt[k], dm[k]]),
    )?;

    let scatter_path = dir.join("delay_vs_temperature.dat");
    write_columns(
        &scatter_path,
        &["temperature_c", "round_trip_delay_s", "differential_delay_s"],
        (0..tv.len()).map(|k| vec![tv[k], rt[k], dm[k]]),
    )?;

    let psd_path = dir.join("psd.dat");
    write_columns(
        &psd_path,
        &["frequency_hz", "round_trip_delay_s2_per_hz"],
        spec.frequencies
            .iter()
            .zip(&spec.power)
            .map(|(&f, &p)| vec![f, p]),
    )?;

    Ok(vec![report_path, series_path, scatter_path, psd_path])
}

// ---------------------------------------------------------------------------
// run-protocol
// ---------------------------------------------------------------------------

fn protocol_channel(scenario: &Scenario, cal: &Calibration) -> Result<(SessionChannel, f64), CliError> {
    let cfg = &scenario.config.protocol;
    let spans = cal.spans_by_id(&[SpanId::A, SpanId::C, SpanId::D])?;
    let config = compose_configuration(&spans, ConfigurationKind::ThreeNode)?;
    let path = ChannelPath::with_group_index(config, Band::Nm1350, cal.group_index);
    let loss = path.total_loss(Band::Nm1350)?;
    let span_a = cal.span(SpanId::A)?;
    Ok((
        SessionChannel {
            length_m: path.measured_length_m(),
            transit_delay_s: path.nominal_delay_s[0],
            phase_params: span_a.phase_params.clone(),
            pol_params: span_a.pol_params.clone(),
            wind_mph: cfg.wind_mph,
            clock_pulse_drop_every: (cfg.clock_pulse_drop_every > 0)
                .then_some(cfg.clock_pulse_drop_every),
            target_polarization: StokesVector::horizontal(),
        },
        loss,
    ))
}

fn run_protocol(scenario: &Scenario, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let cfg = &scenario.config.protocol;
    let cal = scenario.calibration()?;
    let duration = scenario.duration_override_s.unwrap_or(cfg.duration_s);
    let (channel, loss_db) = protocol_channel(scenario, &cal)?;

    let tx = TransmitterConfig {
        qubit_period_s: cfg.qubit_period_s,
        data_phase_s: cfg.data_phase_s,
        tdi_reference_s: cfg.tdi_reference_s,
        polarization_reference_s: cfg.polarization_reference_s,
        polarization_every_cycles: cfg.polarization_every_cycles,
        ..TransmitterConfig::default()
    };
    let rx = ReceiverConfig {
        visibility: cfg.visibility,
        detected_mean_photon_number: cfg.detected_mean_photon_number,
        extra_loss_db: cfg.extra_loss_db,
        timing_jitter_std_s: cfg.timing_jitter_std_s,
        tdi_drift_per_data_phase_m: cfg.tdi_drift_per_data_phase_m,
        visibility_ramp_per_s: cfg.visibility_ramp_per_s,
        ..ReceiverConfig::default()
    };

    let event_log = scenario.event_log || cfg.event_log;
    let mut written = Vec::new();
    let report: SessionReport = if event_log {
        let log_path = dir.join("events.tsv");
        let file = fs::File::create(&log_path)?;
        let mut writer = BufWriter::new(file);
        let report =
            run_session_with_log(&tx, &rx, &channel, duration, scenario.seed(), &mut writer)?;
        writer.flush()?;
        written.push(log_path);
        report
    } else {
        run_session(&tx, &rx, &channel, duration, scenario.seed())?
    };

    let records = vec![
        Record::new("channel")
            .text("name", "transmit_route")
            .float("length_m", channel.length_m)
            .float("transit_delay_s", channel.transit_delay_s)
            .float("loss_1350_db", loss_db),
        report.to_record("session"),
    ];
    let report_path = dir.join("report.txt");
    emit_report(&records, &report_path)?;
    written.insert(0, report_path);

    // Error-rate timeline, one row per data phase.
    let timeline_path = dir.join("ber_timeline.dat");
    write_columns(
        &timeline_path,
        &[
            "time_s",
            "ber_plus",
            "ber_minus",
            "detected_plus",
            "detected_minus",
        ],
        report.data_phases.iter().map(|p| {
            let bp = if p.detected_plus > 0 {
                p.errors_plus as f64 / p.detected_plus as f64
            } else {
                0.0
            };
            let bm = if p.detected_minus > 0 {
                p.errors_minus as f64 / p.detected_minus as f64
            } else {
                0.0
            };
            vec![
                p.t_start_s,
                bp,
                bm,
                p.detected_plus as f64,
                p.detected_minus as f64,
            ]
        }),
    )?;
    written.push(timeline_path);

    // Interferometer telemetry at phase boundaries.
    let tdi_path = dir.join("tdi.dat");
    {
        let file = fs::File::create(&tdi_path)?;
        let mut w = BufWriter::new(file);
        writeln!(w, "# time_s label path_imbalance_m fringe_error")?;
        for snap in &report.tdi_snapshots {
            writeln!(
                w,
                "{:e} {} {:e} {:e}",
                snap.time_s,
                snap.label.label(),
                snap.path_imbalance_m,
                snap.reference_fringe_error
            )?;
        }
        w.flush()?;
    }
    written.push(tdi_path);

    Ok(written)
}
