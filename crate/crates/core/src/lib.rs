//! EEG/EMG/EOG decoding for action observation, motor imagery and motor
//! execution of sit-to-stand and stand-to-sit transitions.

pub mod artifact;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod features;
pub mod linalg;
pub mod model;
pub mod onset;
pub mod recording;
pub mod tfa;

pub use error::{Error, Result};
