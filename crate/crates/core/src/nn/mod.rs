//! Parameters, equalized-learning-rate layers and the Adam optimizer.

mod adam;
mod layers;
mod params;

pub use adam::{Adam, AdamConfig, Moments};
pub use layers::{he_scale, Conv, Dense, Embedding, LEAKY_SLOPE, RELU_GAIN};
pub use params::{Bound, Param, ParamGroup, ParamId, ParamStore};
