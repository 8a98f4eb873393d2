//! Depth-gated multi-spectral face analysis.
//!
//! A random regression forest estimates head pose from depth; only frames
//! whose head faces the camera within a threshold are passed on to Haar
//! detection, face recognition and IR temperature readout.

pub mod detect;
pub mod error;
pub mod forest;
pub mod frame;
pub mod geometry;
pub mod io;
pub mod pgm;
pub mod pipeline;
pub mod protocol;
pub mod recognize;
pub mod synth;
pub mod thermal;
pub mod verify;

pub use error::{Error, Result};
