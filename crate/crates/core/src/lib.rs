//! Distributed space-time codes for amplify-and-forward relay networks.
//!
//! The crate builds linear dispersion designs (PCIOD, CIOD, Toeplitz, cyclic
//! division algebra codes), certifies their relay-level structure and group
//! ML decodability, simulates them over the GNAF two-hop channel and evaluates
//! closed-form diversity-multiplexing tradeoff bounds.

pub mod designs;
pub mod dmg;
pub mod error;
pub mod matkernel;
pub mod montecarlo;
pub mod pipeline;
pub mod precoding;
pub mod receivers;
pub mod rng;
pub mod sim;
pub mod verifier;

pub use error::{Error, Result};
