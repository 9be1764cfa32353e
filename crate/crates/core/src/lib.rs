//! Heat transport in a periodically modulated two-level system coupled to two
//! structured thermal reservoirs.
//!
//! The working medium is a two-level system whose transition frequency is
//! modulated as `omega(t) = omega0 + lambda cos(omega_s t)` while it stays
//! continuously coupled, via `sigma_x`, to a slow and a fast bosonic
//! reservoir with localized spectral densities. The crate provides
//!
//! * [`bath`]: spectral densities, Bose-weighted spectral functions, the
//!   correlation-function quadrature oracle, and certified exponential
//!   decompositions ([`fit`]);
//! * [`hierarchy`]: the numerically exact hierarchy of auxiliary density
//!   operators built on those decompositions, with rescaling and on-the-fly
//!   filtering;
//! * [`master`]: the time-nonlocal first-order truncation of the hierarchy
//!   and the time-local Markovian Redfield equation, for cross-validation;
//! * [`floquet`]: closed-form sideband analytics — Bessel weights,
//!   golden-rule rates, steady populations, heat currents, and resonance
//!   predictions;
//! * [`observables`]: heat currents, period averages, power by two routes,
//!   efficiency, reservoir-reservoir correlations, steady-state detection;
//! * [`runner`]: drives any solver to its periodic steady state;
//! * [`config`] / [`sweep`]: the config-file format and the parallel sweep
//!   harness behind the `qheat` binary.
//!
//! Units: `hbar = k_B = 1`, all frequencies in units of the bandgap width
//! scale (`xi = 1` by default).

pub mod bath;
pub mod config;
pub mod error;
pub mod fit;
pub mod floquet;
pub mod hierarchy;
pub mod master;
pub mod mat2;
pub mod observables;
pub mod quad;
pub mod runner;
pub mod sweep;
pub mod tls;

pub use bath::{BathDecomposition, BathLabel, BathSpec, ExponentialMode, SpectralDensity};
pub use mat2::Mat2;
pub use tls::DrivenTls;
