//! Branching dueling double-DQN resource controller.

pub mod bdq;
pub mod deploy;
pub mod policy;
pub mod replay;
pub mod reward;
pub mod simctl;
pub mod state;
pub mod train;

pub use crate::simenv::{combine_hp_actions, Action, ActionSpace};
pub use bdq::{td_targets, BdqModel, BdqNetwork, BranchQ, Checkpoint, QModel, TableQ};
pub use deploy::{
    llc_audit_failures, read_control_log, records_for_interval, run_agent, write_control_log, ControlRecord,
    CONTROL_LOG_HEADER,
};
pub use policy::{argmax, select_action, smooth_action, ActionSmoother};
pub use replay::{PrioritizedReplay, SampledBatch, Transition};
pub use reward::{compute_multi_reward, compute_reward, is_penalized, reward_negative, reward_positive, twig_reward, RewardConfig};
pub use simctl::{replicated_branches, split_actions, EnvFactory, SimControl};
pub use state::{build_state, StateNormalizer};
pub use train::{
    read_train_log, select_checkpoint, train_loop, write_train_log, AgentConfig, ControlEnv, Feedback, TrainLogRow,
    TrainOutcome,
};
