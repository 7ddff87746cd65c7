//! Redistricting ensembles under census noise.
//!
//! The crate samples contiguous, population-balanced district plans over
//! precinct graphs (a sequential Monte Carlo sampler and a merge-split
//! Markov chain), injects hierarchical integer noise into population
//! tables, re-evaluates plans across population scenarios, and scores
//! Bayesian surname-geography race predictions.

pub mod bisg;
pub mod ensemble;
pub mod experiments;
pub mod error;
pub mod fixtures;
pub mod graph;
pub mod io;
pub mod mergesplit;
pub mod metrics;
pub mod noise;
pub mod par;
pub mod report;
pub mod rng;
pub mod smc;
pub mod tree;

pub use error::{Error, ErrorKind, Result};
