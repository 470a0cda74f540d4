//! Simulation and statistical verification toolkit for mean-field
//! interacting urns.
//!
//! `N` two-color urns evolve together: at each step every urn adds one ball,
//! red with probability `alpha * Zbar + (1 - alpha) * Z_j`, mixing its own
//! red fraction with the instantaneous system mean. The coupling `alpha`
//! drives synchronization — all urns share a common random limit fraction —
//! and sets the polynomial rate at which the gaps `D_t(j) = Z_t(j) - Zbar_t`
//! close.
//!
//! The crate provides, in layers:
//!
//! * [`model`] / [`trajectory`] — the dynamics, deterministic replicated
//!   simulation, and recorded trajectories ([`rng`] fixes the stream
//!   contract that makes archives replayable);
//! * [`oracle`] — exact moment tables for small systems by full enumeration
//!   of the outcome tree, used to cross-check the sampler;
//! * [`fluctuations`] — gap compensator, decay-exponent fits, standardized
//!   fluctuation statistics, weak-coupling limit diagnostics, and gap
//!   covariance;
//! * [`stats`] — the scalar statistics those checks need (normal CDF and
//!   quantile, KS test, log-log OLS, interval and coupling estimators);
//! * [`numerics`] — log-space attenuation products and the linear-recursion
//!   solver behind the second-moment analysis;
//! * [`io`] — CSV + JSON sidecar archives with exact float round-trips.

// `!(x > y)` rather than `x <= y` in validations: the negated form is true
// for NaN, so malformed numbers fail closed.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops are kept where the index itself participates (bit masks,
// paired arrays, matrix entries).
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod fluctuations;
pub mod io;
pub mod model;
pub mod numerics;
pub mod oracle;
pub mod rng;
pub mod stats;
pub mod trajectory;

pub use error::{Error, Result};
pub use model::{ModelParams, UrnSystemState};
pub use trajectory::{Ensemble, Trajectory};
