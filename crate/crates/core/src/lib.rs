pub mod attack;
pub mod config;
pub mod data;
pub mod dp;
pub mod encoding;
pub mod error;
pub mod features;
pub mod federation;
pub mod linkage;
pub mod nn;
pub mod pipeline;
pub mod seeds;

pub use error::{Error, Result};
