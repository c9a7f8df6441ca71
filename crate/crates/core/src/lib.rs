//! Simulation and coincidence analysis of heralded photon pairs from
//! write/read pulses on an atomic ensemble.
//!
//! - [`stats`]: exact photon-number statistics of the source and its noise.
//! - [`engine`]: seeded Monte Carlo of timestamped detector events.
//! - [`tia`]: time-interval analysis, `g~` estimators and the
//!   Cauchy-Schwarz test.
//! - [`calibrate`]: least-squares fit of source parameters to measured `g~`.
//! - [`io`]: scenario files, event files, presets and report export.
//! - [`pipeline`]: simulate/analyze runs and parameter sweeps.

pub mod calibrate;
pub mod engine;
pub mod io;
pub mod pipeline;
pub mod stats;
pub mod tia;
