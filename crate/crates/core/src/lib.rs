//! Multiscale simulation and verification toolkit for one-dimensional
//! crystal surface evolution.
//!
//! The crate is organised by scale:
//!
//! * [`lattice`] – continuous-time kinetic Monte Carlo on integer height
//!   columns (hopping, evaporation, deposition) and coarse-graining.
//! * [`statmech`] – tilted Gibbs ensemble over integer slopes, surface
//!   tension by Legendre transform, discrete chemical potential.
//! * [`meso`] – the discrete exponential-mobility ODE system integrated by an
//!   embedded Runge–Kutta pair.
//! * [`continuum`] – the regularized degenerate fourth-order flow for
//!   `u = exp(-Δh)` and the height equation itself, both pseudo-spectral.
//! * [`functionals`] – energies and pointwise bounds audited along runs.
//! * [`spectral`] – Wiener-algebra type norms, the `f_s` series, critical
//!   thresholds and Lyapunov/decay audits on the torus.

// `!(x > 0.0)` style guards reject NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod continuum;
pub mod error;
pub mod fft;
pub mod functionals;
pub mod grid;
pub mod lattice;
pub mod meso;
pub mod ode;
pub mod rng;
pub mod spectral;
pub mod statmech;
mod sumtree;

pub use error::{Error, Result};
pub use grid::GridField;
