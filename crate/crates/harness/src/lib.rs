//! Data generators, baselines and experiment runners built on `subflow`.

pub mod baselines;
pub mod config;
pub mod data;
pub mod experiments;
pub mod generators;
pub mod report;
pub mod stats;
