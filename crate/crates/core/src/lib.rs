//! Deterministic discrete-event simulator for fog-augmented smart-grid
//! networks.
//!
//! The crate models a three-tier network (smart devices, fog gateways, one
//! cloud), routes private and public data through it, runs message workloads
//! over single-server FIFO queues, accounts node power, and drives roaming EV
//! charging sessions through to billing. [`scenario`] ties it together behind
//! a config file and the `foggrid` command line tool.

pub mod billing;
pub mod energy;
pub mod fabric;
pub mod scenario;
pub mod sim;
pub mod topology;
