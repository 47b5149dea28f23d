//! Line-oriented report records shared by all fit and session outputs.
//!
//! One record per line: a record name followed by `key=value` fields in a
//! stable order. Floats render in scientific notation with shortest
//! round-trip digits, so identical results serialize byte-identically.

use std::fmt;
use std::io::{self, BufRead, Write};

use crate::error::{Error, Result};
use crate::estimation::{GaussianFit, LinearFit, PowerLawFit, SpanNoiseDecomposition};
use crate::protocol::SessionReport;

#[derive(Clone, Debug, PartialEq)]
pub enum FieldValue {
    Float(f64),
    Int(i64),
    Text(String),
}

impl fmt::Display for FieldValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldValue::Float(v) => write!(f, "{v:e}"),
            FieldValue::Int(v) => write!(f, "{v}"),
            FieldValue::Text(v) => write!(f, "{v}"),
        }
    }
}

/// One report record: a name plus ordered fields.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub name: String,
    pub fields: Vec<(String, FieldValue)>,
}

impl Record {
    pub fn new(name: impl Into<String>) -> Self {
        Record {
            name: name.into(),
            fields: Vec::new(),
        }
    }

    pub fn float(mut self, key: &str, value: f64) -> Self {
        self.fields.push((key.into(), FieldValue::Float(value)));
        self
    }

    pub fn int(mut self, key: &str, value: i64) -> Self {
        self.fields.push((key.into(), FieldValue::Int(value)));
        self
    }

    pub fn text(mut self, key: &str, value: impl Into<String>) -> Self {
        self.fields.push((key.into(), FieldValue::Text(value.into())));
        self
    }

    pub fn get(&self, key: &str) -> Option<&FieldValue> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn get_float(&self, key: &str) -> Option<f64> {
        match self.get(key)? {
            FieldValue::Float(v) => Some(*v),
            FieldValue::Int(v) => Some(*v as f64),
            FieldValue::Text(_) => None,
        }
    }
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        for (k, v) in &self.fields {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

/// Writes records one per line.
pub fn write_records<W: Write>(mut writer: W, records: &[Record]) -> io::Result<()> {
    for r in records {
        writeln!(writer, "{r}")?;
    }
    Ok(())
}

/// Parses a record stream produced by [`write_records`].
pub fn parse_records<R: BufRead>(reader: R) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        let name = parts.next().ok_or_else(|| Error::ParseError {
            path: "<records>".into(),
            message: format!("line {}: empty record", lineno + 1),
        })?;
        let mut record = Record::new(name);
        for part in parts {
            let (k, v) = part.split_once('=').ok_or_else(|| Error::ParseError {
                path: "<records>".into(),
                message: format!("line {}: field {part:?} is not key=value", lineno + 1),
            })?;
            let value = if let Ok(i) = v.parse::<i64>() {
                FieldValue::Int(i)
            } else if let Ok(f) = v.parse::<f64>() {
                FieldValue::Float(f)
            } else {
                FieldValue::Text(v.to_string())
            };
            record.fields.push((k.to_string(), value));
        }
        out.push(record);
    }
    Ok(out)
}

/// Types that serialize themselves as a report record.
pub trait ToRecord {
    fn to_record(&self, name: &str) -> Record;
}

impl ToRecord for GaussianFit {
    fn to_record(&self, name: &str) -> Record {
        Record::new("gaussian_fit")
            .text("name", name)
            .float("variance", self.variance)
            .float("variance_std_error", self.variance_std_error())
            .float("mean", self.mean)
            .int("n", self.n_samples as i64)
    }
}

impl ToRecord for PowerLawFit {
    fn to_record(&self, name: &str) -> Record {
        Record::new("power_law_fit")
            .text("name", name)
            .float("kappa", self.kappa)
            .float("kappa_std_error", self.kappa_std_error)
            .float("n_exponent", self.n_exponent)
            .float("n_std_error", self.n_std_error)
            .float("adj_r_squared", self.adj_r_squared)
            .int("n_used", self.n_used as i64)
            .int("n_excluded", self.n_excluded as i64)
    }
}

impl ToRecord for LinearFit {
    fn to_record(&self, name: &str) -> Record {
        Record::new("linear_fit")
            .text("name", name)
            .float("slope", self.slope)
            .float("slope_std_error", self.slope_std_error)
            .float("intercept", self.intercept)
            .float("intercept_std_error", self.intercept_std_error)
            .float("adj_r_squared", self.adj_r_squared)
            .int("n", self.n_samples as i64)
    }
}

impl ToRecord for SpanNoiseDecomposition {
    fn to_record(&self, name: &str) -> Record {
        Record::new("span_noise")
            .text("name", name)
            .float("variance", self.variance)
            .float("covariance", self.covariance)
            .int("physical", i64::from(self.is_physical()))
    }
}

impl ToRecord for SessionReport {
    fn to_record(&self, name: &str) -> Record {
        Record::new("session")
            .text("name", name)
            .float("duration_s", self.duration_s)
            .int("n_pulses_sent", self.n_pulses_sent as i64)
            .int("n_detected", self.n_detected as i64)
            .int("n_discriminating", self.n_discriminating as i64)
            .float("mean_photon_number", self.mean_photon_number)
            .float("ber_plus", self.ber.ber_plus)
            .float("ber_plus_std_error", self.ber.ber_plus_std_error)
            .float("ber_minus", self.ber.ber_minus)
            .float("ber_minus_std_error", self.ber.ber_minus_std_error)
            .float("ber_mean", self.ber.ber_mean)
            .float("ber_mean_std_error", self.ber.ber_mean_std_error)
            .float("timing_jitter_std_s", self.timing_jitter_std_s)
            .int("words_sent", self.words_sent as i64)
            .int("decode_failures", self.decode_failures as i64)
            .int("silent_decode_errors", self.silent_decode_errors as i64)
            .float("max_polarization_error_rad", self.max_polarization_error_rad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_round_trips_through_text() {
        let records = vec![
            Record::new("gaussian_fit")
                .text("name", "diff")
                .float("variance", 1.72e6)
                .int("n", 3_000_000),
            Record::new("session").text("name", "run").float("ber_mean", 0.023),
        ];
        let mut buf = Vec::new();
        write_records(&mut buf, &records).unwrap();
        let parsed = parse_records(buf.as_slice()).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[0].name, "gaussian_fit");
        assert_eq!(parsed[0].get_float("variance"), Some(1.72e6));
        assert_eq!(parsed[1].get_float("ber_mean"), Some(0.023));
    }

    #[test]
    fn serialization_is_deterministic() {
        let r = Record::new("x").float("a", 1.0 / 3.0).float("b", 5.6525e6);
        let mut one = Vec::new();
        let mut two = Vec::new();
        write_records(&mut one, std::slice::from_ref(&r)).unwrap();
        write_records(&mut two, std::slice::from_ref(&r)).unwrap();
        assert_eq!(one, two);
    }

    #[test]
    fn malformed_field_is_rejected() {
        let text = "fit name value\n";
        assert!(matches!(
            parse_records(text.as_bytes()),
            Err(Error::ParseError { .. })
        ));
    }
}
