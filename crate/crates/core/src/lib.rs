//! Source coding for the fork network: k senders, one receiver.

pub mod binning_codec;
pub mod bits;
pub mod cli;
pub mod complexity_lab;
pub mod fork_sim;
pub mod rate_region;
pub mod seed;
pub mod source_model;
pub mod stats;
