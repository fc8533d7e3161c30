//! Motion-invariant authentication of on-body wireless devices from RSS
//! traces.

pub mod adversarial;
pub mod ban_synth;
pub mod cli;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod features;
pub mod labels;
pub mod nn;
pub mod recipe;
pub mod theory;

pub use error::{Error, Result};
pub use labels::{DeviceLabel, MotionLabel};
