//! Factoring by a logarithmic energy spectrum.
//!
//! A 1D potential is built whose levels follow `ln(k/L + 1)`, lifted to a
//! central 3D potential, and two contact-interacting bosons in it are driven
//! at `ln(N/K²)`. Only the pair `(p - K, q - K)` with `p q = N` is resonant,
//! so measuring one particle after about half a Rabi period reveals a factor.

// NaN must fail parameter checks, hence `!(x > 0.0)`; dense kernels index.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod classical;
pub mod cli;
pub mod dynamics;
pub mod eigensolver1d;
pub mod error;
pub mod interaction;
pub mod inverse_spectral;
pub mod io;
pub mod limits;
pub mod ode;
pub mod protocol;
pub mod radial;
pub mod spectrum;
pub mod spline;
pub mod tridiag;

pub use error::{Error, Result};
