//! Lower-tail large deviations of random graphs at desk scale: entropic
//! variational problems, conditioned sampling, the entropy-increment energy,
//! and cut-norm statistics.

pub mod cli;
pub mod config;
pub mod entropy;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod increment;
pub mod metrics;
pub mod numeric;
pub mod report;
pub mod sampler;
pub mod variational;

pub use error::{Error, Result};
