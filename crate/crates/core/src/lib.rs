pub mod bma;
pub mod calibration;
pub mod config;
pub mod divergence;
pub mod error;
pub mod forward_model;
pub mod io;
pub mod pipeline;
pub mod predictive;
pub mod seed;
pub mod sensitivity;
pub mod surrogate;

pub use error::{Error, Result};
