//! Simulation and likelihood inference for mean-field systems of interacting
//! spiking neurons.
//!
//! A population of `n` neurons carries scalar membrane potentials. Each neuron
//! spikes at a state-dependent intensity drawn from a parametric rate family;
//! on a spike the spiker is reset and every other neuron receives a small
//! additive kick of size `mark / n`. The crate provides:
//!
//! - exact event-by-event simulation of the finite system by thinning
//!   ([`simulator`]),
//! - a solver for the large-population (mean-field) limit and its information
//!   matrix ([`limit`]),
//! - exact path log-likelihood ratios together with score, Hessian, observed
//!   information and the quadratic likelihood expansion ([`likelihood`]),
//! - a projected-Newton maximum-likelihood estimator ([`estimator`]),
//! - Monte Carlo experiments that check the asymptotic statistical behaviour
//!   of all of the above ([`analysis`]),
//! - a JSON-configured command line driver ([`cli`]).
//!
//! All randomness flows through named, seed-derived streams ([`rng`]), so
//! every simulation and every experiment is reproducible byte for byte,
//! independent of how many worker threads are used.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod estimator;
pub mod likelihood;
pub mod limit;
pub mod model;
pub mod rng;
pub mod simulator;

pub use error::{Error, Result};
