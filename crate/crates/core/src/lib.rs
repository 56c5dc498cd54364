//! Simulator and key-rate engine for multi-party quantum secret sharing built
//! from bipartite entangled-photon links.
//!
//! The dealer shares one entangled link with each player. Matching same-basis
//! detection events across links and XOR-ing the dealer's bits turns the
//! bipartite correlations into GHZ-type correlations, from which a secret key
//! is distilled.

pub mod cli;
pub mod config;
pub mod error;
pub mod keyrate;
pub mod math;
pub mod photonics;
pub mod sim;
pub mod sweep;
pub mod transcript;
pub mod verifier;

pub use error::{Error, Result};
