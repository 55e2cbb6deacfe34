//! Numerical toolkit for generalized Loewner theory on the unit disk.
//!
//! The crate works from Berkson–Porta data: a Herglotz function `p(z, t)` and a
//! Denjoy–Wolff function `τ(t)`. From those it integrates evolution families and
//! reverse evolution families, rebuilds range-normalized and decreasing Loewner
//! chains, pairs their boundary traces into the welded extension map, and
//! estimates the Beltrami coefficient of that map in two independent ways.
//!
//! Everything here is pure computation over `alloc`; file formats, configuration
//! and the command line live in the companion `loewner-cli` crate.
//!
//! Module map:
//! - [`herglotz`]: data model, vector-field assembly and pointwise criteria.
//! - [`evolution`]: forward/reverse ODE integration with variational derivatives.
//! - [`chains`]: Möbius normalization, chain limits, Loewner range, decreasing chains.
//! - [`extension`]: boundary traces, the welded atlas, Beltrami estimators.
//! - [`approx`]: step approximation of `τ`, convergence tables, Gronwall envelopes.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod approx;
pub mod chains;
pub mod error;
pub mod evolution;
pub mod extension;
pub mod geometry;
pub mod herglotz;
pub mod math;
pub mod ode;
pub mod quadrature;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
