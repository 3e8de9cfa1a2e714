//! Periodic-review dual sourcing: demand models, the inventory system,
//! ordering policies, simulation, optimization and bounds.

pub mod atoms;
pub mod bounds;
pub mod demand;
pub mod dp;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod model;
pub mod optimizer;
pub mod policy;
pub mod projection;
pub mod report;
pub mod sim;

pub use error::{Error, Result};
