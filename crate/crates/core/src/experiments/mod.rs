//! Problem registry, error metrics, rate regression and run outputs.

pub mod cli;
mod metrics;
mod plot;
mod problem;
mod records;

pub use metrics::*;
pub use plot::*;
pub use problem::*;
pub use records::*;
