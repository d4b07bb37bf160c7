//! Exact safety verification of ReLU neural control barrier functions.

pub mod boundprop;
pub mod certify;
pub mod controller;
pub mod dynamics;
pub mod enumerate;
mod error;
pub mod feasolver;
pub mod interval;
pub mod network;
#[cfg(feature = "oracle")]
pub mod oracle;
pub mod plot;
pub mod report;

pub use error::{Error, Result};
