//! Comparison controllers: the measured-QoS-only agent and the online
//! Bayesian-optimization search.

pub mod clite;
pub mod gp;
pub mod twig;

pub use crate::controller::twig_reward;
pub use clite::{clite_objective, clite_run, clite_should_resample, count_searches, ClitePlusConfig, IntervalObs};
pub use gp::{ei_acquire, expected_improvement, GaussianProcess, GpConfig};
pub use twig::{agent_control, new_agent_model, AgentKind, TwigPlusConfig};
