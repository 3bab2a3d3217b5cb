pub mod baseline;
pub mod eskf;
pub mod error;
pub mod filterbank;
pub mod geometry;
pub mod learning;
pub mod models;
pub mod pipeline;
pub mod sim;
pub mod strapdown;

pub use error::{Error, Result};
