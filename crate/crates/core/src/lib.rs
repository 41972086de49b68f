//! Runtime-distribution laboratory for the probSAT local search solver.
//!
//! The crate samples empirical runtime distributions of probSAT on random
//! 3-SAT, fits parametric families to them, derives fixed-cutoff restart
//! times, learns to predict those restart times from instance features and
//! benchmarks the resulting policies against Luby restarts and no restarts.

pub mod cnf;
pub mod dist;
pub mod eval;
pub mod features;
pub mod ml;
pub mod probsat;
pub mod restart;
pub mod rng;
pub mod rtd;
