pub mod baselines;
pub mod bridge;
pub mod calibrate;
pub mod control;
pub mod error;
pub mod harness;
pub mod learning;
pub mod market;
pub mod numerics;
pub mod views;

pub use error::{Error, Result};
