pub mod analysis;
pub mod batch;
pub mod error;
pub mod features;
pub mod imagestack;
pub mod report;
pub mod segmentation;
pub mod synthdata;
pub mod tracking;
pub mod units;

pub use error::{Error, Result};
