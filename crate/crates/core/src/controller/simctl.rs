//! Simulator-backed control environment: turns branch indices into a node
//! allocation, steps the simulator and scores the result.

use super::reward::{compute_multi_reward, RewardConfig};
use super::state::{build_state, StateNormalizer};
use super::train::{ControlEnv, Feedback};
use crate::error::{Error, Result};
use crate::qospred::TwoLevelPredictor;
use crate::simenv::{combine_hp_actions, Action, ResourceAllocation, SimEnv, StepOutcome};

/// Builds the simulator for episode `k`.
pub type EnvFactory = Box<dyn FnMut(u64) -> Result<SimEnv>>;

/// Splits a flat branch vector into one action per HP.
pub fn split_actions(flat: &[usize], n_hp: usize) -> Result<Vec<Action>> {
    if flat.len() != 5 * n_hp {
        return Err(Error::Shape {
            expected: 5 * n_hp,
            actual: flat.len(),
        });
    }
    Ok(flat
        .chunks(5)
        .map(|c| Action::from_indices([c[0], c[1], c[2], c[3], c[4]]))
        .collect())
}

/// Branch sizes for `n_hp` replicated action spaces.
pub fn replicated_branches(sizes: [usize; 5], n_hp: usize) -> Vec<usize> {
    (0..n_hp).flat_map(|_| sizes).collect()
}

pub struct SimControl {
    factory: EnvFactory,
    episode: u64,
    env: SimEnv,
    predictor: Option<TwoLevelPredictor>,
    norm: StateNormalizer,
    reward: RewardConfig,
    last: StepOutcome,
    last_actions: Vec<Action>,
    last_pred: Vec<f64>,
    last_reward: f64,
}

impl SimControl {
    /// With a predictor the state carries predicted QoS and the reward is
    /// prediction-gated; without one both use measured QoS only.
    pub fn new(
        mut factory: EnvFactory,
        predictor: Option<TwoLevelPredictor>,
        norm: StateNormalizer,
        reward: RewardConfig,
    ) -> Result<Self> {
        reward.validate()?;
        if norm.with_prediction != predictor.is_some() {
            return Err(Error::Config(
                "state normalizer and predictor disagree on the prediction input".into(),
            ));
        }
        let mut env = factory(0)?;
        let (last, last_actions) = Self::prime(&mut env)?;
        let mut ctl = Self {
            factory,
            episode: 0,
            env,
            predictor,
            norm,
            reward,
            last,
            last_actions,
            last_pred: Vec::new(),
            last_reward: 0.0,
        };
        ctl.last_pred = ctl.predict()?;
        Ok(ctl)
    }

    /// One interval at the simulator's initial allocation so the first
    /// state has counters.
    fn prime(env: &mut SimEnv) -> Result<(StepOutcome, Vec<Action>)> {
        let n_hp = env.hp_specs().len();
        let max = Action::max_hp(&env.action_space());
        let alloc = env.allocation().clone();
        let out = env.step(&alloc)?;
        Ok((out, vec![max; n_hp]))
    }

    fn predict(&self) -> Result<Vec<f64>> {
        match &self.predictor {
            Some(p) => self
                .last
                .counters
                .iter()
                .zip(&self.last_actions)
                .map(|(c, a)| p.predict_qos(c, a))
                .collect(),
            None => Ok(vec![0.0; self.last.counters.len()]),
        }
    }

    pub fn n_hp(&self) -> usize {
        self.env.hp_specs().len()
    }

    pub fn branch_sizes(&self) -> Vec<usize> {
        replicated_branches(self.env.action_space().sizes, self.n_hp())
    }

    pub fn state_dim(&self) -> usize {
        self.norm.block_dim() * self.n_hp()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.env.hp_specs().iter().map(|h| h.qos_target).collect()
    }

    pub fn sim(&self) -> &SimEnv {
        &self.env
    }

    pub fn last_outcome(&self) -> &StepOutcome {
        &self.last
    }

    pub fn last_actions(&self) -> &[Action] {
        &self.last_actions
    }

    /// Predicted worst-case QoS per HP for the current state (zeros
    /// without a predictor).
    pub fn last_predictions(&self) -> &[f64] {
        &self.last_pred
    }

    pub fn last_reward(&self) -> f64 {
        self.last_reward
    }

    pub fn is_done(&self) -> bool {
        self.env.is_done()
    }

    /// Applies per-HP actions directly (deployment path).
    pub fn apply(&mut self, actions: &[Action]) -> Result<Feedback> {
        let alloc: ResourceAllocation = combine_hp_actions(self.env.node(), actions)?;
        let out = self.env.step(&alloc)?;
        self.last = out;
        self.last_actions = actions.to_vec();
        self.last_pred = self.predict()?;
        let targets = self.targets();
        let meas = self.last.measured_qos.clone();
        self.last_reward = compute_multi_reward(
            &self.last_pred,
            &meas,
            &targets,
            self.last.be_ips_norm,
            self.last.power_norm,
            &self.reward_cfg(),
        )?;
        let violation = meas.iter().zip(&targets).any(|(m, t)| m > t);
        Ok(Feedback {
            reward: self.last_reward,
            next_state: self.state(),
            done: self.env.is_done(),
            violation,
            pred_dpps: self.last_pred[0],
            meas_dpps: meas[0],
        })
    }

    fn reward_cfg(&self) -> RewardConfig {
        if self.predictor.is_some() {
            self.reward.clone()
        } else {
            // zero prediction: gate on the measurement
            RewardConfig {
                gate_on_max: true,
                ..self.reward.clone()
            }
        }
    }
}

impl ControlEnv for SimControl {
    fn state(&self) -> Vec<f64> {
        build_state(&self.last.counters, &self.last_pred, &self.norm)
            .expect("simulator counters and predictions are finite")
    }

    fn step(&mut self, action: &[usize]) -> Result<Feedback> {
        let actions = split_actions(action, self.n_hp())?;
        self.apply(&actions)
    }

    fn reset(&mut self) -> Result<()> {
        self.episode += 1;
        self.env = (self.factory)(self.episode)?;
        let (last, actions) = Self::prime(&mut self.env)?;
        self.last = last;
        self.last_actions = actions;
        self.last_pred = self.predict()?;
        Ok(())
    }
}
