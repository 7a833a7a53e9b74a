pub mod beam_tracking;
pub mod error;
pub mod experiments;
pub mod geo_channel;
pub mod geometry;
pub mod net_sensing;
pub mod nr_frame;
pub mod phased_array;
pub mod radio_slam;
pub mod rng;
pub mod scenario;
pub mod sensing;
pub mod waveform;

pub use error::{Error, Result};
