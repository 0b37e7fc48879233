pub mod cli;
pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod neural;
pub mod qsim;
pub mod training;

pub use error::{Error, Result};
