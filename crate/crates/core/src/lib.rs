//! Downlink wireless power transfer in cell-free massive MIMO.
//!
//! The crate is organised as a pipeline:
//!
//! * [`topology`] places access points and users and derives the large-scale
//!   channel statistics.
//! * [`channel`] assigns pilots, draws small-scale fading and forms MMSE
//!   estimates.
//! * [`wpt`] applies MRT energy beamforming and the logistic harvesting circuit.
//! * [`closedform`] holds the analytical moments of the received and harvested
//!   energy.
//! * [`markov`] fits a Gamma law to the harvested energy and evolves the
//!   battery state chain.
//! * [`montecarlo`] runs the per-interval simulation and the sampling oracles.
//! * [`experiment`] ties everything together for one sweep point.

pub mod channel;
pub mod closedform;
pub mod config;
pub mod error;
pub mod experiment;
pub mod markov;
pub mod mat;
pub mod montecarlo;
pub mod rng;
pub mod topology;
pub mod wpt;

pub use config::SystemConfig;
pub use error::{Error, Result};
pub use mat::Mat;

pub type C64 = num_complex::Complex64;
