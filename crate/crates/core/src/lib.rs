pub mod advisors;
pub mod agent;
pub mod ask;
pub mod envs;
pub mod error;
pub mod nn;

pub use error::{Error, Result};
