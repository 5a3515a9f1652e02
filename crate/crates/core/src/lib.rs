//! Simulation of simultaneous multi-detector measurements of a two-level
//! system, under a unanimous and a binomial outcome law, with oscillator
//! and quantum-point-contact detector models and a likelihood-based
//! engine for telling the two laws apart from trial data.

pub mod config;
pub mod constants;
mod math;
pub mod experiment;
pub mod inference;
pub mod oscillator;
pub mod output;
pub mod pipeline;
pub mod qpc;
pub mod scenarios;
pub mod state;
pub mod stats;
pub mod sweep;

pub use math::{normal_cdf, normal_upper_tail};
