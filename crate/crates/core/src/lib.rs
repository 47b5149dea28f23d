//! Simulation and analysis toolkit for deployed-fiber quantum network links.
//!
//! The crate models a metropolitan three-node fiber testbed and everything
//! needed to exercise a time-bin qubit distribution protocol over it:
//!
//! - [`model`]: fiber spans, connectivity topologies, and channel paths with
//!   calibrated loss and delay defaults.
//! - [`noise`]: seeded generators for the three dominant channel noise
//!   processes (Brownian phase/frequency noise, wind-driven polarization
//!   drift, thermal path-length drift) plus Poisson photon detection and a
//!   first-order phase stabilization loop.
//! - [`estimation`]: the characterization pipeline that turns raw traces back
//!   into fitted noise parameters (Gaussian variances, power laws, linear
//!   slopes, Welch spectra).
//! - [`protocol`]: communicating transmitter/receiver state machines for
//!   time-bin qubit distribution: clock-command codec, Lorentzian pulse
//!   carving, time-delay interferometer lock and measurement, polarization
//!   correction, and bit-error-rate accounting.
//! - [`environment`]: ingestion and alignment of external weather series
//!   (wind, temperature) that drive the polarization and thermal models.
//! - [`report`]: the line-oriented record format shared by all fit and
//!   session outputs.
//!
//! All stochastic generators are pure functions of `(params, seed)`; the same
//! seed always reproduces bit-identical traces.

pub mod environment;
pub mod error;
pub mod estimation;
pub mod model;
pub mod noise;
pub mod protocol;
pub mod report;
pub mod rng;
pub mod spectral;
pub mod trace;

pub use error::{Error, Result};
pub use rng::RandomSeed;
pub use trace::{SampledTrace, StokesVector, TimeGrid, Unit};
