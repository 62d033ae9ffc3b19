pub mod access;
pub mod dense;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod formats;
pub mod instance;
pub mod oracle;
pub mod report;
pub mod rng;
pub mod sketch;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
