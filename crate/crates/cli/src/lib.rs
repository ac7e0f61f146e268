//! Experiment runner: configs, pipelines, sweeps, plots and rate calculators.

pub mod config;
pub mod inspect;
pub mod pipeline;
pub mod plot;
pub mod rates_cmd;
pub mod sweep;
