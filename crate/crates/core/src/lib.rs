//! Full-duplex MIMO integrated sensing and communication at a base station:
//! ULA channels, partially-connected hybrid beamforming, multi-tap SI
//! cancellation, MUSIC and delay–Doppler sensing, beamformer design and
//! link metrics.

pub mod array;
pub mod beamform;
pub mod cancel;
pub mod channel;
pub mod config;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod optimize;
pub mod runner;
pub mod sensing;
pub mod validate;

pub use error::{Error, Result};
