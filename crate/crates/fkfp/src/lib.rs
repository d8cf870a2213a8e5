//! Fundamental solution of the fractional kinetic Fokker-Planck (Kolmogorov) equation
//! f_t + v . grad_x f + |D_v|^{2s} f = 0 in one space and one velocity dimension:
//! the symbol M, FFT and quadrature inversion, Littlewood-Paley blocks, envelope audits
//! and a spectral propagator.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dyadic;
pub mod envelope;
pub mod error;
pub mod evolve;
pub mod fft;
pub mod grid;
pub mod inversion;
pub mod oracle;
pub mod quad;
pub mod report;
pub mod symbol;
pub mod table;

pub use error::{Error, Result};
pub use symbol::FracParam;
