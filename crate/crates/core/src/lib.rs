//! Exact ground-state energy of a harmonic oscillator coupled to the
//! electromagnetic field, in free space or near a perfectly conducting plane,
//! and the resulting Casimir-Polder potential and force.
//!
//! All quantities are dimensionless: hbar = c = 1 and the bare oscillator
//! wavenumber is the unit, so energies are in units of hbar c k0 and lengths
//! in units of 1/k0.

// Negated comparisons such as `!(x > 0.0)` are used on purpose to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod energies;
pub mod error;
pub mod factorization;
pub mod model;
pub mod modes;
pub mod oracle;
pub mod quadrature;
pub mod resolvent;
pub mod validation;

pub use error::{Error, Result};
