pub mod atlas;
pub mod classifier;
pub mod contour;
pub mod descriptors;
pub mod error;
pub mod imaging;
pub mod morphology;
pub mod phantom;
pub mod pipeline;
pub mod preprocessing;
pub mod registration;

pub use error::{Error, Result};
