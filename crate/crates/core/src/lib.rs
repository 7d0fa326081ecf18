//! Asymptotic key rates of twin-field QKD with sending-or-not-sending
//! encoding and phase postselection.

pub mod aopp;
pub mod config;
pub mod decoy;
pub mod error;
pub mod keyrate;
pub mod mcsim;
pub mod numeric;
pub mod optimize;
pub mod phase_error;
pub mod physics;
pub mod table;

pub use error::{Error, Result};
