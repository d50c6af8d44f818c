pub mod error;
pub mod nn;

pub use error::{Error, Result};
pub mod augment;
pub mod classifier;
pub mod cropper;
pub mod finder;
pub mod harness;
pub mod imgcore;
pub mod metrics;
pub mod synthdrop;
pub mod training;
