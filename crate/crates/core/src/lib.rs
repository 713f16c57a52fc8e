//! Discrete-time simulator and learning testbed for information
//! freshness-aware task offloading in an air-ground edge computing system.
//!
//! Mobile users (MUs) and a UAV move on a cell grid following Markov
//! mobility. Each epoch, MUs bid for uplink channels in a VCG auction,
//! schedule buffered computation tasks to the local CPU, the ground edge
//! server or the UAV, and transmit input packets. Per-user deep RL agents
//! learn the channel-bidding, offloading and packet-scheduling policies
//! with two Q-networks (a Q-factor network and a post-decision Q-factor
//! network). Fixed baseline policies and tabular reference learners are
//! provided for comparison and validation.

pub mod agent;
pub mod auction;
pub mod baselines;
pub mod compute;
pub mod harness;
pub mod link;
pub mod nn;
pub mod oracle;
pub mod rng;
pub mod world;

pub use harness::{MetricsRecord, Simulation};
pub use world::{SimConfig, World, WorldConfig};
