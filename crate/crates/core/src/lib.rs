//! Multiple-F0 estimation for vocal ensembles.
//!
//! Audio is analysed with a harmonic constant-Q transform (magnitude plus phase
//! differentials), mapped to a pitch salience map by a convolutional network and decoded into
//! frame-wise F0 sets by peak picking and thresholding.

pub mod annotation;
pub mod audio;
pub mod dataset;
pub mod decoder;
pub mod error;
pub mod grid;
pub mod hcqt;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod targets;

pub use error::{Error, Result};
pub use grid::HcqtParams;
