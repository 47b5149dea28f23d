//! Uniformly sampled time series with unit metadata, and Poincare-sphere
//! polarization vectors.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical unit carried by a trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    Radians,
    Hertz,
    Seconds,
    RadiansPerSecond,
    Celsius,
    MilesPerHour,
    /// Dimensionless Stokes triples on the Poincare sphere.
    Stokes,
    Dimensionless,
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Unit::Radians => "rad",
            Unit::Hertz => "Hz",
            Unit::Seconds => "s",
            Unit::RadiansPerSecond => "rad/s",
            Unit::Celsius => "degC",
            Unit::MilesPerHour => "mph",
            Unit::Stokes => "stokes",
            Unit::Dimensionless => "1",
        };
        f.write_str(s)
    }
}

/// Tolerance on the unit-norm invariant for externally supplied triples.
pub const STOKES_NORM_TOLERANCE: f64 = 1e-6;

/// Polarization state as Stokes parameters of a fully polarized field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StokesVector {
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

impl StokesVector {
    /// Builds a vector, requiring unit norm within [`STOKES_NORM_TOLERANCE`].
    pub fn new(s1: f64, s2: f64, s3: f64) -> Result<Self> {
        let v = StokesVector { s1, s2, s3 };
        let n = v.norm();
        if (n - 1.0).abs() > STOKES_NORM_TOLERANCE {
            return Err(Error::NotUnitNorm(n));
        }
        Ok(v)
    }

    /// Rescales an arbitrary non-zero triple onto the sphere.
    pub fn normalized(s1: f64, s2: f64, s3: f64) -> Result<Self> {
        let n = (s1 * s1 + s2 * s2 + s3 * s3).sqrt();
        if n < 1e-12 {
            return Err(Error::NotUnitNorm(n));
        }
        Ok(StokesVector {
            s1: s1 / n,
            s2: s2 / n,
            s3: s3 / n,
        })
    }

    /// Horizontal linear polarization, the conventional launch state.
    pub fn horizontal() -> Self {
        StokesVector {
            s1: 1.0,
            s2: 0.0,
            s3: 0.0,
        }
    }

    pub fn norm(&self) -> f64 {
        (self.s1 * self.s1 + self.s2 * self.s2 + self.s3 * self.s3).sqrt()
    }

    pub fn dot(&self, other: &StokesVector) -> f64 {
        self.s1 * other.s1 + self.s2 * other.s2 + self.s3 * other.s3
    }

    pub fn cross(&self, other: &StokesVector) -> [f64; 3] {
        [
            self.s2 * other.s3 - self.s3 * other.s2,
            self.s3 * other.s1 - self.s1 * other.s3,
            self.s1 * other.s2 - self.s2 * other.s1,
        ]
    }

    /// Great-circle angle to another state, clamped against rounding.
    pub fn angle_to(&self, other: &StokesVector) -> f64 {
        self.dot(other).clamp(-1.0, 1.0).acos()
    }

    /// Rodrigues rotation about a unit axis, renormalized afterwards.
    pub fn rotated_about(&self, axis: [f64; 3], angle: f64) -> StokesVector {
        let (s, c) = angle.sin_cos();
        let v = [self.s1, self.s2, self.s3];
        let k = axis;
        let kxv = [
            k[1] * v[2] - k[2] * v[1],
            k[2] * v[0] - k[0] * v[2],
            k[0] * v[1] - k[1] * v[0],
        ];
        let kdv = k[0] * v[0] + k[1] * v[1] + k[2] * v[2];
        let r = [
            v[0] * c + kxv[0] * s + k[0] * kdv * (1.0 - c),
            v[1] * c + kxv[1] * s + k[1] * kdv * (1.0 - c),
            v[2] * c + kxv[2] * s + k[2] * kdv * (1.0 - c),
        ];
        let n = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
        StokesVector {
            s1: r[0] / n,
            s2: r[1] / n,
            s3: r[2] / n,
        }
    }

    /// An orthonormal basis of the tangent plane at this point.
    pub fn tangent_basis(&self) -> ([f64; 3], [f64; 3]) {
        let p = [self.s1, self.s2, self.s3];
        // Any reference direction not parallel to p works.
        let r = if p[2].abs() < 0.9 {
            [0.0, 0.0, 1.0]
        } else {
            [1.0, 0.0, 0.0]
        };
        let mut e1 = [
            p[1] * r[2] - p[2] * r[1],
            p[2] * r[0] - p[0] * r[2],
            p[0] * r[1] - p[1] * r[0],
        ];
        let n1 = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
        e1 = [e1[0] / n1, e1[1] / n1, e1[2] / n1];
        let e2 = [
            p[1] * e1[2] - p[2] * e1[1],
            p[2] * e1[0] - p[0] * e1[2],
            p[0] * e1[1] - p[1] * e1[0],
        ];
        (e1, e2)
    }
}

/// Sample payload of a trace: plain reals or polarization triples.
#[derive(Clone, Debug, PartialEq)]
pub enum TraceValues {
    Scalar(Vec<f64>),
    Stokes(Vec<StokesVector>),
}

impl TraceValues {
    pub fn len(&self) -> usize {
        match self {
            TraceValues::Scalar(v) => v.len(),
            TraceValues::Stokes(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A uniform time grid, used as a resampling target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub len: usize,
}

impl TimeGrid {
    pub fn timestamps(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(move |k| self.t0 + k as f64 * self.dt)
    }
}

/// Uniformly sampled time series tagged with its unit.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledTrace {
    t0: f64,
    dt: f64,
    unit: Unit,
    values: TraceValues,
}

impl SampledTrace {
    /// Builds a scalar trace. The sample interval must be positive and the
    /// payload non-empty.
    pub fn scalar(t0: f64, dt: f64, unit: Unit, values: Vec<f64>) -> Result<Self> {
        if !dt.is_finite() || dt <= 0.0 {
            return Err(Error::InvalidRate(format!("dt = {dt} s")));
        }
        if values.is_empty() {
            return Err(Error::EmptyTrace);
        }
        if unit == Unit::Stokes {
            return Err(Error::UnitMismatch {
                expected: "a scalar unit".into(),
                got: unit.to_string(),
            });
        }
        Ok(SampledTrace {
            t0,
            dt,
            unit,
            values: TraceValues::Scalar(values),
        })
    }

    /// Builds a polarization trace; every triple must sit on the sphere.
    pub fn stokes(t0: f64, dt: f64, values: Vec<StokesVector>) -> Result<Self> {
        if !dt.is_finite() || dt <= 0.0 {
            return Err(Error::InvalidRate(format!("dt = {dt} s")));
        }
        if values.is_empty() {
            return Err(Error::EmptyTrace);
        }
        for v in &values {
            let n = v.norm();
            if (n - 1.0).abs() > STOKES_NORM_TOLERANCE {
                return Err(Error::NotUnitNorm(n));
            }
        }
        Ok(SampledTrace {
            t0,
            dt,
            unit: Unit::Stokes,
            values: TraceValues::Stokes(values),
        })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn rate(&self) -> f64 {
        1.0 / self.dt
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Time spanned from the first to the last sample.
    pub fn duration(&self) -> f64 {
        (self.len().saturating_sub(1)) as f64 * self.dt
    }

    pub fn timestamp(&self, index: usize) -> f64 {
        self.t0 + index as f64 * self.dt
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid {
            t0: self.t0,
            dt: self.dt,
            len: self.len(),
        }
    }

    pub fn values(&self) -> &TraceValues {
        &self.values
    }

    /// Scalar payload, rejecting polarization traces.
    pub fn scalar_values(&self) -> Result<&[f64]> {
        match &self.values {
            TraceValues::Scalar(v) => Ok(v),
            TraceValues::Stokes(_) => Err(Error::UnitMismatch {
                expected: "scalar samples".into(),
                got: "Stokes triples".into(),
            }),
        }
    }

    /// Polarization payload, rejecting scalar traces.
    pub fn stokes_values(&self) -> Result<&[StokesVector]> {
        match &self.values {
            TraceValues::Stokes(v) => Ok(v),
            TraceValues::Scalar(_) => Err(Error::UnitMismatch {
                expected: "Stokes triples".into(),
                got: format!("scalar samples in {}", self.unit),
            }),
        }
    }

    /// Enforces the unit contract of an operation.
    pub fn expect_unit(&self, unit: Unit) -> Result<&Self> {
        if self.unit == unit {
            Ok(self)
        } else {
            Err(Error::UnitMismatch {
                expected: unit.to_string(),
                got: self.unit.to_string(),
            })
        }
    }

    /// Element-wise combination of two traces on the same grid.
    pub fn zip_with(&self, other: &SampledTrace, f: impl Fn(f64, f64) -> f64) -> Result<SampledTrace> {
        if !same_grid(self, other) {
            return Err(Error::Misaligned(format!(
                "grids differ: ({}, {}, {}) vs ({}, {}, {})",
                self.t0,
                self.dt,
                self.len(),
                other.t0,
                other.dt,
                other.len()
            )));
        }
        if self.unit != other.unit {
            return Err(Error::UnitMismatch {
                expected: self.unit.to_string(),
                got: other.unit.to_string(),
            });
        }
        let a = self.scalar_values()?;
        let b = other.scalar_values()?;
        let values = a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect();
        SampledTrace::scalar(self.t0, self.dt, self.unit, values)
    }

    pub fn add(&self, other: &SampledTrace) -> Result<SampledTrace> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &SampledTrace) -> Result<SampledTrace> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Same payload scaled by a constant, with a new unit tag.
    pub fn scaled(&self, factor: f64, unit: Unit) -> Result<SampledTrace> {
        let v = self.scalar_values()?;
        SampledTrace::scalar(self.t0, self.dt, unit, v.iter().map(|&x| x * factor).collect())
    }
}

/// Grid equality with a small relative tolerance on dt and t0.
pub fn same_grid(a: &SampledTrace, b: &SampledTrace) -> bool {
    let dt_ok = (a.dt - b.dt).abs() <= 1e-12 * a.dt.max(b.dt);
    let t0_ok = (a.t0 - b.t0).abs() <= 1e-9 * a.dt.max(b.dt).max(1.0);
    dt_ok && t0_ok && a.len() == b.len()
}
