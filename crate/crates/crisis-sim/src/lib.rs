//! Deterministic gossip simulator for the crisis protocol, with adversaries,
//! metrics, and the brute-force oracles used by the property suites.

pub mod config;
pub mod metrics;
pub mod oracle;
pub mod sim;
pub mod workload;

pub use config::{ConfigError, SimConfig};
pub use metrics::Summary;
pub use sim::{run, Process, Role, SimReport, Simulation};
