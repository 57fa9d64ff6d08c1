//! File formats, scenario runner and command-line front end for the
//! `qkdnet-core` simulator.

// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod network;
pub mod poolfile;
pub mod pools;
pub mod report;
pub mod runner;
pub mod stats_file;

pub use config::Scenario;
pub use network::{run_network, NetworkOutcome};
pub use runner::{run_link, LinkRun};
