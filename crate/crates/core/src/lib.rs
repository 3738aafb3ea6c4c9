pub mod analytic;
pub mod calibrate;
pub mod config;
pub mod error;
pub mod io;
pub mod likelihood;
pub mod limits;
pub mod models;
pub mod power;
pub mod quad;
pub mod rng;
pub mod simulate;
pub mod stats;
pub mod testing;

pub use error::{Error, Result};
