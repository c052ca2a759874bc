//! Experiments, file formats and the command-line front end for blind
//! sensor-gain calibration. The numerical core is [`blindcal_core`].

pub mod cli;
pub mod error;
pub mod experiments;
pub mod image;
pub mod io;

pub use blindcal_core as core;
pub use error::{Error, Result};
