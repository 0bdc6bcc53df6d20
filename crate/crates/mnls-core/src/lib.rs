// index-based loops over axes and stencils read better than iterator chains
// in the numeric kernels
#![allow(clippy::needless_range_loop)]

//! Numerics for systems of M coupled semilinear Schrödinger equations with
//! power nonlinearities and symmetric couplings.
//!
//! The crate provides, on a periodic spectral grid:
//! - field storage and spectral calculus ([`field`], [`grid`], [`resample`]),
//! - the conserved functionals and derived scalar quantities ([`functionals`]),
//! - constrained ground-state solvers by normalized gradient flow
//!   ([`groundstate`]),
//! - split-step time evolution with conservation and blow-up monitoring
//!   ([`dynamics`]),
//! - orbital-distance and Virial diagnostics ([`diagnostics`]),
//! - scripted stability/instability experiments ([`experiments`]).

pub mod config;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod experiments;
mod fft;
pub mod field;
pub mod functionals;
pub mod grid;
pub mod groundstate;
pub mod model;
pub mod resample;
pub mod snapshot;

pub use error::{Error, Result};
pub use field::{ComponentField, FieldVec};
pub use grid::GridSpec;
pub use model::{Coupling, ModelParams, Regime};
