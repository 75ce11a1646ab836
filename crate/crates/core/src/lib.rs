//! Solver-and-simulator toolkit for jump Markov processes whose transition
//! intensities are time-dependent and only piecewise smooth.
//!
//! A model is a finite state space together with a rate function
//! `q(x, t, B)` assembled from sparse per-transition [`TimeProfile`]s.  The
//! crate computes the transition kernel `P(u, x; t, B)` of the associated
//! jump process by three independent routes and cross-checks them:
//!
//! * [`feller`] — the jump-count series: the kernel is the monotone limit of
//!   partial sums over "exactly n jumps" terms, built by the backward and the
//!   forward integral recursions.
//! * [`kolmogorov`] — the backward and forward differential equations solved
//!   as piecewise-smooth ODE systems with restarts at every rate breakpoint.
//! * [`simulator`] — Monte Carlo path sampling from the exact conditional
//!   laws (holding times by cumulative-hazard inversion, jump targets by
//!   normalized intensities), plus compensator evaluation along paths.
//!
//! [`verify`] turns the structural facts relating the routes (minimality of
//! the series limit, Chapman-Kolmogorov, boundary behaviour, uniqueness in
//! the regular case) into executable checks, and [`scenarios`] bundles the
//! reference models used by the test suite and the CLI.

pub mod config;
pub mod feller;
pub mod kernel;
pub mod kolmogorov;
pub mod profile;
pub mod qmodel;
mod rk;
pub mod scenarios;
pub mod simulator;
pub mod stats;
pub mod verify;

pub use kernel::Kernel;
pub use profile::{ProfileError, TimeProfile};
pub use qmodel::{CemeteryRole, QModel, QModelError, StateSpace};
pub use simulator::{PathSample, SimulationConfig, Termination};

