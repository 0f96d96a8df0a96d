//! Batch runner around the `groundpose` estimator: configuration, frame
//! I/O, result tables and diagnostic renderings.

pub mod config;
pub mod frames;
pub mod overlay;
pub mod results;
pub mod run;
pub mod scenario;
pub mod slices;
