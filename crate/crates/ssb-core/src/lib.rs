//! Soft-constrained Schrödinger bridge (SSB) toolkit.
//!
//! The soft-constrained bridge replaces the hard terminal constraint of the
//! classical Schrödinger bridge with a KL penalty of strength `beta`. The
//! optimally controlled diffusion then steers a reference process toward a
//! *geometric mixture* of the target density and the uncontrolled terminal
//! law. This crate provides:
//!
//! * [`density`] — log-space density models (Gaussians, mixtures, Cauchy,
//!   tabulated grids, geometric mixtures) with analytic scores;
//! * [`drift`] — the optimal drift `u*(x,t) = sigma^2 ∇ log h(x,t)` in closed
//!   form for Gaussian targets and by (importance-sampled) Monte Carlo for
//!   general unnormalized targets;
//! * [`sde`] — a seeded, parallel Euler–Maruyama engine with per-path
//!   overflow accounting;
//! * [`system`] — a discrete-grid fixed-point solver for the beta-dependent
//!   Schrödinger system, instrumented with the Hilbert projective metric;
//! * [`time_series`] — the multi-marginal (time-series) bridge for Dirac
//!   initial laws;
//! * [`score`] — importance-weighted denoising score matching for geometric
//!   mixtures plus Langevin and reverse-bridge samplers;
//! * [`diagnostics`] — KL/KS statistics, empirical summaries and the exact
//!   rejection sampler used as test oracle.

pub mod beta;
pub mod density;
pub mod diagnostics;
pub mod drift;
pub mod error;
pub mod quadrature;
pub mod rng;
pub mod score;
pub mod sde;
pub mod special;
pub mod system;
pub mod time_series;

pub use beta::Beta;
pub use density::DensityModel;
pub use drift::{BridgeSpec, DriftField, OverflowFailure};
pub use error::SsbError;
pub use sde::{TimeGrid, TrajectoryBatch};

/// Result alias used across the crate.
pub type Result<T> = std::result::Result<T, SsbError>;
