//! Pseudo-spectral simulation of the stochastic Navier-Stokes equations on the
//! 3-torus via a cascade of cutoff-truncated difference systems.
//!
//! The crate is organized bottom-up:
//!
//! - [`spectral`]: mode lattice, fields, Leray projection, Sobolev norms and
//!   the dealiased advective nonlinearity.
//! - [`noise`]: truncated cylindrical Wiener process and the Lipschitz
//!   multiplicative noise coefficient.
//! - [`heat`]: exponential-Euler stochastic heat solver and its energy ledger.
//! - [`cascade`]: dyadic data decomposition, level stepping, Picard mode and
//!   reassembly.
//! - [`stopping`]: stopping times and Monte Carlo probability checks.
//! - [`harness`]: configuration, seeding, ensembles and persistence.

pub mod spectral;
pub mod noise;
pub mod heat;
pub mod cascade;
pub mod stopping;
pub mod harness;
