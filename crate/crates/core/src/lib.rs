//! Simulator for take-it-or-leave-it survey purchasing under privacy costs.
//!
//! A surveyor approaches randomly drawn individuals and offers each a posted
//! price in exchange for using their (verifiable) private type in a
//! differentially private estimate. Individuals have private per-unit costs
//! for privacy loss and decide rationally whether to accept. The survey
//! mechanism raises its price geometrically across epochs until a noisy count
//! of acceptances clears a participation target, then releases a noisy
//! average of the final epoch's reported types.
//!
//! The crate provides:
//!
//! - [`dp`] — Laplace sampling, densities, tails, and pointwise privacy-ratio
//!   audits;
//! - [`population`] — generative population models and sampling oracles;
//! - [`agents`] — offer evaluation and utility accounting for sampled agents;
//! - [`mechanism`] — the epoch-based survey mechanism and the noisy estimator;
//! - [`benchmark`] — the omniscient envy-free cost benchmark and cost-ratio
//!   reports;
//! - [`harness`] — Monte Carlo experiment orchestration, verification suites,
//!   empirical privacy audits, config ingestion, and file outputs.
//!
//! All randomness flows through explicitly seeded [`rng::SimRng`] streams;
//! every artifact the crate produces is a pure function of (config, seed).

pub mod agents;
pub mod benchmark;
pub mod dp;
pub mod harness;
pub mod mechanism;
pub mod population;
pub mod rng;
