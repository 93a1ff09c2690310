pub mod cli;
pub mod data;
pub mod experiment;
pub mod metrics;
pub mod nn;
pub mod pass;
