//! Class-conditional style-based GAN for log-mel spectrograms of spoken
//! words, with the audio front end, progressive WGAN-GP training and
//! objective evaluation around it.

pub mod autodiff;
pub mod dataset;
pub mod discriminator;
pub mod dsp;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod generator;
pub mod nn;
pub mod plot;
pub mod training;

pub use error::{Error, Result};
