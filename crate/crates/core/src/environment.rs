//! Ingestion and alignment of external environment series (wind speed,
//! temperature) that drive the polarization and thermal models.
//!
//! The canonical file format is CSV with a header row and columns
//! `timestamp,value,unit`, ISO-8601 timestamps in UTC. A synthetic generator
//! (diurnal sinusoid plus seeded noise) ships for tests and for scenarios
//! without recorded weather.

use std::path::Path;

use chrono::{DateTime, TimeZone, Utc};
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::estimation::resample_linear;
use crate::rng::{streams, RandomSeed};
use crate::trace::{SampledTrace, TimeGrid, Unit};

/// An irregularly sampled wall-clock environment series.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvironmentSeries {
    /// Strictly increasing timestamps, seconds since the Unix epoch.
    pub timestamps: Vec<f64>,
    pub values: Vec<f64>,
    pub unit: Unit,
    pub source: String,
    /// Input rows dropped because a field failed to parse.
    pub skipped_rows: usize,
}

impl EnvironmentSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn span(&self) -> (f64, f64) {
        (self.timestamps[0], *self.timestamps.last().unwrap())
    }
}

/// Maps series roles onto CSV header names.
#[derive(Clone, Debug)]
pub struct ColumnMapping {
    pub timestamp: String,
    pub value: String,
    pub unit: Option<String>,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            timestamp: "timestamp".into(),
            value: "value".into(),
            unit: Some("unit".into()),
        }
    }
}

fn parse_unit(text: &str) -> Option<Unit> {
    match text.trim() {
        "mph" => Some(Unit::MilesPerHour),
        "degC" | "C" | "celsius" => Some(Unit::Celsius),
        "Hz" => Some(Unit::Hertz),
        "rad" => Some(Unit::Radians),
        "rad/s" => Some(Unit::RadiansPerSecond),
        "s" => Some(Unit::Seconds),
        "1" | "" => Some(Unit::Dimensionless),
        _ => None,
    }
}

fn unit_label(unit: Unit) -> &'static str {
    match unit {
        Unit::MilesPerHour => "mph",
        Unit::Celsius => "degC",
        Unit::Hertz => "Hz",
        Unit::Radians => "rad",
        Unit::RadiansPerSecond => "rad/s",
        Unit::Seconds => "s",
        _ => "1",
    }
}

fn parse_timestamp(text: &str) -> Option<f64> {
    if let Ok(t) = DateTime::parse_from_rfc3339(text.trim()) {
        return Some(t.timestamp() as f64 + f64::from(t.timestamp_subsec_nanos()) * 1e-9);
    }
    // Plain epoch seconds are accepted for generated fixtures.
    text.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Parses a weather CSV into a series.
///
/// Rows with unparsable timestamps or values are skipped and counted;
/// duplicate timestamps are collapsed by mean; output timestamps are strictly
/// increasing. The unit is taken from the unit column when mapped, and must
/// be consistent across rows.
pub fn parse_weather_csv(path: impl AsRef<Path>, mapping: &ColumnMapping) -> Result<EnvironmentSeries> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::ParseError {
        path: display.clone(),
        message: e.to_string(),
    })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::ParseError {
            path: display.clone(),
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::ParseError {
                path: display.clone(),
                message: format!("missing column {name:?}"),
            })
    };
    let t_col = col(&mapping.timestamp)?;
    let v_col = col(&mapping.value)?;
    let u_col = mapping.unit.as_deref().map(col).transpose()?;

    let mut rows: Vec<(f64, f64)> = Vec::new();
    let mut skipped = 0usize;
    let mut unit: Option<Unit> = None;
    for record in reader.records() {
        let record = record.map_err(|e| Error::ParseError {
            path: display.clone(),
            message: e.to_string(),
        })?;
        let t = record.get(t_col).and_then(parse_timestamp);
        let v = record
            .get(v_col)
            .and_then(|s| s.trim().parse::<f64>().ok())
            .filter(|v| v.is_finite());
        let (t, v) = match (t, v) {
            (Some(t), Some(v)) => (t, v),
            _ => {
                skipped += 1;
                continue;
            }
        };
        if let Some(idx) = u_col {
            let label = record.get(idx).unwrap_or("");
            match parse_unit(label) {
                Some(u) => {
                    if *unit.get_or_insert(u) != u {
                        return Err(Error::ParseError {
                            path: display.clone(),
                            message: format!("mixed units: {} and {label}", unit.unwrap()),
                        });
                    }
                }
                None => {
                    return Err(Error::ParseError {
                        path: display.clone(),
                        message: format!("unknown unit {label:?}"),
                    })
                }
            }
        }
        rows.push((t, v));
    }
    if rows.is_empty() {
        return Err(Error::EmptySeries(display));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Collapse duplicate timestamps by mean.
    let mut timestamps = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len());
    let mut i = 0;
    while i < rows.len() {
        let t = rows[i].0;
        let mut sum = 0.0;
        let mut count = 0usize;
        while i < rows.len() && rows[i].0 == t {
            sum += rows[i].1;
            count += 1;
            i += 1;
        }
        timestamps.push(t);
        values.push(sum / count as f64);
    }
    Ok(EnvironmentSeries {
        timestamps,
        values,
        unit: unit.unwrap_or(Unit::Dimensionless),
        source: display,
        skipped_rows: skipped,
    })
}

/// Writes a series in the canonical CSV schema.
pub fn write_weather_csv(path: impl AsRef<Path>, series: &EnvironmentSeries) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref()).map_err(io_like)?;
    writer
        .write_record(["timestamp", "value", "unit"])
        .map_err(io_like)?;
    for (&t, &v) in series.timestamps.iter().zip(&series.values) {
        let secs = t.floor();
        let nanos = ((t - secs) * 1e9).round() as u32;
        let stamp: DateTime<Utc> = Utc
            .timestamp_opt(secs as i64, nanos.min(999_999_999))
            .single()
            .ok_or_else(|| Error::InvalidParameter(format!("timestamp {t} out of range")))?;
        writer
            .write_record([
                stamp.to_rfc3339_opts(chrono::SecondsFormat::Nanos, true),
                format!("{v}"),
                unit_label(series.unit).to_string(),
            ])
            .map_err(io_like)?;
    }
    writer.flush()?;
    Ok(())
}

fn io_like(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Linear interpolation of a series onto a trace's sample grid. The unit of
/// the result is the series unit; the grid must lie inside the series span.
pub fn align_to(series: &EnvironmentSeries, trace: &SampledTrace) -> Result<SampledTrace> {
    align_to_grid(series, &trace.grid())
}

/// Grid-targeted variant of [`align_to`].
pub fn align_to_grid(series: &EnvironmentSeries, grid: &TimeGrid) -> Result<SampledTrace> {
    if series.is_empty() {
        return Err(Error::EmptySeries(series.source.clone()));
    }
    if series.len() == 1 {
        // A single sample can only align onto itself.
        let (t0, _) = series.span();
        if grid.len == 1 && (grid.t0 - t0).abs() < 1e-9 {
            return SampledTrace::scalar(grid.t0, grid.dt, series.unit, vec![series.values[0]]);
        }
        return Err(Error::OutOfRange(
            "single-sample series cannot cover a grid".into(),
        ));
    }
    // Reuse the uniform resampler over the piecewise-linear envelope by
    // interpolating segment by segment.
    let (t_first, t_last) = series.span();
    let mut values = Vec::with_capacity(grid.len);
    let ts = &series.timestamps;
    let vs = &series.values;
    let mut seg = 0usize;
    for t in grid.timestamps() {
        if t < t_first - 1e-9 || t > t_last + 1e-9 {
            return Err(Error::OutOfRange(format!(
                "target {t} s outside series span [{t_first}, {t_last}] s"
            )));
        }
        while seg + 2 < ts.len() && ts[seg + 1] < t {
            seg += 1;
        }
        // Grids iterate in increasing time, so the segment cursor only moves
        // forward; re-scan from the cursor for safety with equal stamps.
        while seg > 0 && ts[seg] > t {
            seg -= 1;
        }
        let t0 = ts[seg];
        let t1 = ts[seg + 1];
        let frac = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        values.push(vs[seg] * (1.0 - frac) + vs[seg + 1] * frac);
    }
    SampledTrace::scalar(grid.t0, grid.dt, series.unit, values)
}

/// Uniform resampling of a series into a [`SampledTrace`] directly.
pub fn series_to_trace(series: &EnvironmentSeries, dt_s: f64) -> Result<SampledTrace> {
    let (t0, t1) = series.span();
    let len = ((t1 - t0) / dt_s).floor() as usize + 1;
    align_to_grid(series, &TimeGrid { t0, dt: dt_s, len })
}

/// Synthetic wind: a diurnal sinusoid between `min_mph` and `max_mph` plus
/// seeded gust noise, clamped to the requested range.
pub fn synthetic_wind(
    t0_epoch_s: f64,
    duration_s: f64,
    dt_s: f64,
    min_mph: f64,
    max_mph: f64,
    seed: RandomSeed,
) -> EnvironmentSeries {
    let mid = 0.5 * (min_mph + max_mph);
    let amp = 0.5 * (max_mph - min_mph);
    let mut rng = seed.stream(streams::SYNTHETIC_WIND);
    let gust = Normal::new(0.0, 0.05 * amp.max(1e-9)).unwrap();
    let n = (duration_s / dt_s).floor() as usize + 1;
    let mut timestamps = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * dt_s;
        let w = mid - amp * (2.0 * std::f64::consts::PI * t / 86_400.0).cos()
            + gust.sample(&mut rng);
        timestamps.push(t0_epoch_s + t);
        values.push(w.clamp(min_mph, max_mph));
    }
    EnvironmentSeries {
        timestamps,
        values,
        unit: Unit::MilesPerHour,
        source: "synthetic-wind".into(),
        skipped_rows: 0,
    }
}

/// Synthetic outdoor temperature: diurnal sinusoid around `mean_c` with the
/// given swing amplitude plus small seeded fluctuations.
pub fn synthetic_temperature(
    t0_epoch_s: f64,
    duration_s: f64,
    dt_s: f64,
    mean_c: f64,
    amplitude_c: f64,
    seed: RandomSeed,
) -> EnvironmentSeries {
    let mut rng = seed.stream(streams::SYNTHETIC_TEMPERATURE);
    let jitter = Normal::new(0.0, 0.02 * amplitude_c.abs().max(1e-9)).unwrap();
    let n = (duration_s / dt_s).floor() as usize + 1;
    let mut timestamps = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * dt_s;
        let temp = mean_c - amplitude_c * (2.0 * std::f64::consts::PI * t / 86_400.0).cos()
            + jitter.sample(&mut rng);
        timestamps.push(t0_epoch_s + t);
        values.push(temp);
    }
    EnvironmentSeries {
        timestamps,
        values,
        unit: Unit::Celsius,
        source: "synthetic-temperature".into(),
        skipped_rows: 0,
    }
}

// Keep the public estimation-based path exercised from this module too.
#[allow(dead_code)]
fn resample_via_estimation(trace: &SampledTrace, grid: &TimeGrid) -> Result<SampledTrace> {
    resample_linear(trace, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_two_row_file() {
        let f = write_csv(
            "timestamp,value,unit\n2023-02-22T13:36:00Z,5,mph\n2023-02-22T13:37:00Z,7,mph\n",
        );
        let s = parse_weather_csv(f.path(), &ColumnMapping::default()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.unit, Unit::MilesPerHour);
        assert_eq!(s.values, vec![5.0, 7.0]);
        assert!((s.timestamps[1] - s.timestamps[0] - 60.0).abs() < 1e-9);
        assert_eq!(s.skipped_rows, 0);
    }

    #[test]
    fn duplicate_timestamps_collapse_by_mean() {
        let f = write_csv(
            "timestamp,value,unit\n2023-01-01T00:00:00Z,5,mph\n2023-01-01T00:00:00Z,7,mph\n",
        );
        let s = parse_weather_csv(f.path(), &ColumnMapping::default()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.values[0], 6.0);
    }

    #[test]
    fn unparsable_rows_are_skipped_and_counted() {
        let f = write_csv(
            "timestamp,value,unit\n2023-01-01T00:00:00Z,5,mph\nnot-a-time,6,mph\n2023-01-01T00:01:00Z,oops,mph\n2023-01-01T00:02:00Z,8,mph\n",
        );
        let s = parse_weather_csv(f.path(), &ColumnMapping::default()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.skipped_rows, 2);
    }

    #[test]
    fn empty_file_is_an_error() {
        let f = write_csv("timestamp,value,unit\n");
        assert!(matches!(
            parse_weather_csv(f.path(), &ColumnMapping::default()),
            Err(Error::EmptySeries(_))
        ));
        let broken = write_csv("time,speed\n1,2\n");
        assert!(matches!(
            parse_weather_csv(broken.path(), &ColumnMapping::default()),
            Err(Error::ParseError { .. })
        ));
    }

    #[test]
    fn write_then_parse_round_trips() {
        let series = synthetic_wind(1_700_000_000.0, 3600.0, 60.0, 2.0, 20.0, RandomSeed(5));
        let f = tempfile::NamedTempFile::new().unwrap();
        write_weather_csv(f.path(), &series).unwrap();
        let back = parse_weather_csv(f.path(), &ColumnMapping::default()).unwrap();
        assert_eq!(back.values, series.values);
        assert_eq!(back.unit, series.unit);
        for (a, b) in back.timestamps.iter().zip(&series.timestamps) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn align_identity_on_matching_grid() {
        let series = EnvironmentSeries {
            timestamps: vec![0.0, 1.0, 2.0, 3.0],
            values: vec![1.0, 2.0, 3.0, 4.0],
            unit: Unit::Celsius,
            source: "test".into(),
            skipped_rows: 0,
        };
        let target = SampledTrace::scalar(0.0, 1.0, Unit::Seconds, vec![0.0; 4]).unwrap();
        let aligned = align_to(&series, &target).unwrap();
        assert_eq!(aligned.scalar_values().unwrap(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(aligned.unit(), Unit::Celsius);
    }

    #[test]
    fn align_interpolates_hourly_onto_fast_grid() {
        let series = EnvironmentSeries {
            timestamps: vec![0.0, 3600.0],
            values: vec![10.0, 20.0],
            unit: Unit::Celsius,
            source: "test".into(),
            skipped_rows: 0,
        };
        let target = SampledTrace::scalar(0.0, 1.0, Unit::Seconds, vec![0.0; 3601]).unwrap();
        let aligned = align_to(&series, &target).unwrap();
        let v = aligned.scalar_values().unwrap();
        assert_eq!(v[0], 10.0);
        assert_eq!(v[3600], 20.0);
        assert!((v[1800] - 15.0).abs() < 1e-9);
    }

    #[test]
    fn align_refuses_extrapolation() {
        let series = EnvironmentSeries {
            timestamps: vec![0.0, 10.0],
            values: vec![1.0, 2.0],
            unit: Unit::MilesPerHour,
            source: "test".into(),
            skipped_rows: 0,
        };
        let target = SampledTrace::scalar(5.0, 1.0, Unit::Seconds, vec![0.0; 10]).unwrap();
        assert!(matches!(align_to(&series, &target), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn alignment_of_linear_ramp_is_exact() {
        let series = EnvironmentSeries {
            timestamps: (0..10).map(|k| 100.0 * k as f64).collect(),
            values: (0..10).map(|k| 3.0 * 100.0 * k as f64 + 2.0).collect(),
            unit: Unit::MilesPerHour,
            source: "ramp".into(),
            skipped_rows: 0,
        };
        let grid = TimeGrid { t0: 50.0, dt: 7.0, len: 100 };
        let aligned = align_to_grid(&series, &grid).unwrap();
        for (i, v) in aligned.scalar_values().unwrap().iter().enumerate() {
            let t = 50.0 + 7.0 * i as f64;
            assert!((v - (3.0 * t + 2.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn synthetic_wind_respects_bounds_and_seed() {
        let a = synthetic_wind(0.0, 86_400.0, 60.0, 2.0, 20.0, RandomSeed(1));
        let b = synthetic_wind(0.0, 86_400.0, 60.0, 2.0, 20.0, RandomSeed(1));
        assert_eq!(a, b);
        assert!(a.values.iter().all(|&w| (2.0..=20.0).contains(&w)));
        let lo = a.values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = a.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(lo < 4.0 && hi > 18.0, "range [{lo}, {hi}] too narrow");
    }
}
