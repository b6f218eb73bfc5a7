//! Polarization statistics of macroscopic Bell states.
//!
//! The four states are products of two two-mode squeezed vacua over the modes
//! `(a1, b1, a2, b2)` (polarization H/V at two frequencies). The crate offers
//!
//! * [`geometry`]: Poincaré-sphere directions, waveplate settings and sweep grids,
//! * [`gaussian`]: the exact moment engine (second moments + Wick pairing),
//! * [`fock`]: a truncated Fock-space oracle of the same states,
//! * [`pulse`]: a pulse-by-pulse Monte Carlo of the Stokes measurement,
//! * [`metrics`]: degrees of polarization of arbitrary order,
//! * [`fit`]: least-squares estimation of `(eta, N)` from NRF curves,
//! * [`io`] and [`validate`]: the file formats and self-check suites behind the CLI.

pub mod commands;
pub mod cumulant;
pub mod error;
pub mod fit;
pub mod fock;
pub mod gaussian;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod pulse;
pub mod validate;

pub use error::{Error, Result};
pub use gaussian::{BellState, BellStateSpec, Family, Sign};
pub use geometry::{StokesDirection, SweepGrid, WaveplateSetting};
