//! Simulation of energy-driven spontaneous state reduction for a particle in
//! a suddenly expanded infinite square well.
//!
//! The crate is organised by the route each quantity is computed along:
//!
//! - [`spectrum`]: closed-form eigenvalues, eigenfunctions and transition
//!   probabilities of the quench.
//! - [`filtering`]: the exact solution of the stochastic dynamics through the
//!   information process and its Bayes posterior.
//! - [`sde`]: direct Euler–Maruyama integration of the stochastic
//!   Schrödinger equation, used as an independent cross-check.
//! - [`relaxation`]: relaxation-time bounds and empirical relaxation times.
//! - [`ensemble`]: Monte Carlo aggregation and the statistical tests run on it.
//! - [`adiabatic`]: slowly varying wells and the occupation-probability process.
//! - [`config`], [`output`] and [`validate`]: the command-line surface.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adiabatic;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod filtering;
pub mod numeric;
pub mod output;
pub mod relaxation;
pub mod rng;
pub mod sde;
pub mod spectrum;
pub mod validate;

pub use error::{Error, Result};
pub use filtering::{FilteredTrajectory, OutcomeMode, Prior, SdeConfig, StateVector, TimeGrid};
pub use spectrum::{TransitionRow, UnitMode, WellModel};
