//! Identification of linear feedback gains for two-driver intersection
//! interactions, with a synthetic dyad simulator for ground-truth checks.

pub mod analysis;
pub mod error;
pub mod features;
pub mod gp;
pub mod nominal;
pub mod pipeline;
pub mod seed;
pub mod synthetic;

pub use error::{Error, Result};
