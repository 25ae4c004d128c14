//! Membership-inference auditing and privacy-preserving augmentation for
//! sparse clinical time-series forecasters.

pub mod augment;
pub mod cli;
pub mod data;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod par;
pub mod synth;

pub use error::{Error, Result};
