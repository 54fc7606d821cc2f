pub mod error;
pub mod evaluator;
pub mod engine;
pub mod exec;
pub mod data;
pub mod decoder;
pub mod genotype;
pub mod kpls;
pub mod management;
pub mod metrics;
pub mod nn;
pub mod proxy;
pub mod report;
pub mod rng;
pub mod rundir;

pub use error::{Error, Result};
