//! Seedable discrete-time model of a node co-scheduling HP networking
//! workloads with BE workloads.

pub mod allocation;
pub mod config;
pub mod counters;
pub mod env;
pub mod model;
pub mod trace;

pub use allocation::{
    apply_allocation, combine_hp_actions, Action, ActionSpace, HpShare, ResourceAllocation,
};
pub use config::{BEWorkloadSpec, HPWorkloadSpec, NodeConfig};
pub use counters::CounterVector;
pub use env::{SimEnv, StepOutcome, WindowProfile};
pub use trace::{diurnal_demand, DemandSource, DemandTrace, DiurnalParams};
