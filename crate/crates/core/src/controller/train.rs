//! Agent configuration, training loop, training log and checkpoint choice.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::bdq::{td_targets, QModel};
use super::policy::select_action;
use super::replay::{PrioritizedReplay, Transition};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub gamma: f64,
    pub hidden_width: usize,
    pub learning_rate: f64,
    /// Environment steps between target-network syncs.
    pub target_update: usize,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub per_alpha: f64,
    pub per_beta: f64,
    pub per_epsilon: f64,
    pub max_steps: usize,
    pub checkpoint_every: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Steps over which epsilon decays linearly; defaults to `max_steps`.
    pub epsilon_decay_steps: Option<usize>,
    /// Deployment-time action smoothing window; 1 disables smoothing.
    pub smoothing_window: usize,
    /// Global gradient-norm clip; 0 disables it.
    pub grad_clip: f64,
    /// Trailing window, in steps, for checkpoint selection.
    pub selection_window: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            hidden_width: 64,
            learning_rate: 0.002,
            target_update: 100,
            batch_size: 256,
            replay_capacity: 50_000,
            per_alpha: 0.6,
            per_beta: 0.4,
            per_epsilon: 1e-6,
            max_steps: 25_000,
            checkpoint_every: 500,
            epsilon_start: 1.0,
            epsilon_end: 0.02,
            epsilon_decay_steps: None,
            smoothing_window: 5,
            grad_clip: 10.0,
            selection_window: 500,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma {} outside (0, 1)", self.gamma));
        }
        if self.hidden_width == 0 || self.batch_size == 0 || self.target_update == 0 || self.checkpoint_every == 0 {
            return bad("hidden_width, batch_size, target_update and checkpoint_every must be positive".into());
        }
        if self.batch_size > self.replay_capacity {
            return bad(format!(
                "batch size {} exceeds replay capacity {}",
                self.batch_size, self.replay_capacity
            ));
        }
        if !(self.learning_rate > 0.0) || !(self.per_epsilon > 0.0) || self.per_alpha < 0.0 || self.per_beta < 0.0 {
            return bad("learning rate and PER epsilon must be positive, PER exponents non-negative".into());
        }
        let unit = 0.0..=1.0;
        if !unit.contains(&self.epsilon_start) || !unit.contains(&self.epsilon_end) {
            return bad("exploration rates must lie in [0, 1]".into());
        }
        if self.smoothing_window == 0 || self.selection_window == 0 {
            return bad("smoothing and selection windows must be at least 1".into());
        }
        Ok(())
    }

    /// Linear decay from `epsilon_start` at step 0 to `epsilon_end` at the
    /// last decay step.
    pub fn epsilon_at(&self, step: usize) -> f64 {
        let span = self.epsilon_decay_steps.unwrap_or(self.max_steps).saturating_sub(1);
        if span == 0 {
            return self.epsilon_end;
        }
        let frac = (step as f64 / span as f64).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }

    /// Transitions required before the first gradient step.
    pub fn warmup(&self) -> usize {
        2 * self.batch_size
    }
}

/// What the loop learns from after one action.
#[derive(Debug, Clone, PartialEq)]
pub struct Feedback {
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
    pub violation: bool,
    pub pred_dpps: f64,
    pub meas_dpps: f64,
}

/// An environment seen through the agent's state and reward.
pub trait ControlEnv {
    fn state(&self) -> Vec<f64>;
    fn step(&mut self, action: &[usize]) -> Result<Feedback>;
    /// Starts a new episode after a terminal step.
    fn reset(&mut self) -> Result<()>;
}

pub const LOG_HEADER: [&str; 12] = [
    "step",
    "epsilon",
    "reward",
    "violation",
    "pred_dpps",
    "meas_dpps",
    "loss",
    "action_llc",
    "action_mbw",
    "action_hpcf",
    "action_becf",
    "action_ucf",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub step: usize,
    pub epsilon: f64,
    pub reward: f64,
    pub violation: bool,
    pub pred_dpps: f64,
    pub meas_dpps: f64,
    /// Empty until gradient steps begin.
    pub loss: Option<f64>,
    /// First five action branches; absent branches are logged as 0.
    pub action: [usize; 5],
}

pub fn write_train_log(rows: &[TrainLogRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::File {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    })?;
    w.write_record(LOG_HEADER)?;
    for r in rows {
        let mut rec = vec![
            r.step.to_string(),
            r.epsilon.to_string(),
            r.reward.to_string(),
            u8::from(r.violation).to_string(),
            r.pred_dpps.to_string(),
            r.meas_dpps.to_string(),
            r.loss.map(|l| l.to_string()).unwrap_or_default(),
        ];
        rec.extend(r.action.iter().map(|a| a.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_train_log(path: &Path) -> Result<Vec<TrainLogRow>> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| Error::File {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    })?;
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != LOG_HEADER {
        return Err(Error::InvalidInput(format!("unexpected training log header {header:?}")));
    }
    let num = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| Error::InvalidInput(format!("bad number {s:?} in training log")))
    };
    let idx = |s: &str| -> Result<usize> {
        s.parse::<usize>()
            .map_err(|_| Error::InvalidInput(format!("bad integer {s:?} in training log")))
    };
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        rows.push(TrainLogRow {
            step: idx(&rec[0])?,
            epsilon: num(&rec[1])?,
            reward: num(&rec[2])?,
            violation: idx(&rec[3])? == 1,
            pred_dpps: num(&rec[4])?,
            meas_dpps: num(&rec[5])?,
            loss: if rec[6].is_empty() { None } else { Some(num(&rec[6])?) },
            action: [idx(&rec[7])?, idx(&rec[8])?, idx(&rec[9])?, idx(&rec[10])?, idx(&rec[11])?],
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<M> {
    /// Online model after the last step.
    pub model: M,
    pub log: Vec<TrainLogRow>,
    /// `(step, checkpoint JSON)`, step 0 first.
    pub checkpoints: Vec<(usize, String)>,
}

impl<M> TrainOutcome<M> {
    pub fn checkpoint_steps(&self) -> Vec<usize> {
        self.checkpoints.iter().map(|(s, _)| *s).collect()
    }

    pub fn checkpoint(&self, step: usize) -> Option<&str> {
        self.checkpoints.iter().find(|(s, _)| *s == step).map(|(_, j)| j.as_str())
    }
}

fn save_checkpoint(out: Option<&Path>, step: usize, json: &str) -> Result<()> {
    if let Some(dir) = out {
        let path = dir.join(format!("ckpt_{step}.json"));
        fs::write(&path, json).map_err(|e| Error::File { path, source: e })?;
    }
    Ok(())
}

fn train_step<M: QModel>(
    model: &mut M,
    target: &M,
    replay: &mut PrioritizedReplay,
    cfg: &AgentConfig,
    rng: &mut Rng,
) -> Result<f64> {
    let batch = replay.sample(cfg.batch_size, cfg.per_beta, rng)?;
    let dim = model.input_dim();
    let n = batch.indices.len();
    let mut states = Array2::zeros((n, dim));
    let mut next = Array2::zeros((n, dim));
    let mut actions = Vec::with_capacity(n);
    let mut rewards = Vec::with_capacity(n);
    let mut dones = Vec::with_capacity(n);
    for (row, &i) in batch.indices.iter().enumerate() {
        let t = replay.get(i);
        for j in 0..dim {
            states[[row, j]] = t.state[j];
            next[[row, j]] = t.next_state[j];
        }
        actions.push(t.action.clone());
        rewards.push(t.reward);
        dones.push(t.done);
    }
    let targets = td_targets(model, target, &rewards, next.view(), &dones, cfg.gamma)?;
    let (loss, td) = model.fit_batch(states.view(), &actions, &targets, &batch.weights)?;
    replay.update(&batch.indices, &td)?;
    Ok(loss)
}

/// Runs `cfg.max_steps` interactions. Each step selects a per-branch
/// epsilon-greedy action, stores the transition, and once the replay holds
/// `cfg.warmup()` transitions takes one prioritized gradient step. The
/// target model syncs every `target_update` steps; checkpoints are taken at
/// step 0, every `checkpoint_every` steps and at the end. With `out` set,
/// checkpoints and `train_log.csv` are written there; the log is also
/// written when the environment fails.
pub fn train_loop<M: QModel>(
    env: &mut dyn ControlEnv,
    model: M,
    cfg: &AgentConfig,
    rng: &mut Rng,
    out: Option<&Path>,
) -> Result<TrainOutcome<M>> {
    cfg.validate()?;
    let mut model = model;
    let mut target = model.clone();
    let mut replay = PrioritizedReplay::new(cfg.replay_capacity, cfg.per_alpha, cfg.per_epsilon)?;
    let mut log = Vec::with_capacity(cfg.max_steps);
    let mut checkpoints = Vec::new();
    let first = model.checkpoint_json(0)?;
    save_checkpoint(out, 0, &first)?;
    checkpoints.push((0, first));
    let mut state = env.state();
    let write_log = |log: &[TrainLogRow]| -> Result<()> {
        match out {
            Some(dir) => write_train_log(log, &dir.join("train_log.csv")),
            None => Ok(()),
        }
    };
    for step in 0..cfg.max_steps {
        let epsilon = cfg.epsilon_at(step);
        let q = model.q_values(&state)?;
        let action = select_action(&q, epsilon, rng);
        let fb = match env.step(&action) {
            Ok(fb) => fb,
            Err(e) => {
                write_log(&log)?;
                return Err(e);
            }
        };
        replay.push(Transition {
            state: state.clone(),
            action: action.clone(),
            reward: fb.reward,
            next_state: fb.next_state.clone(),
            done: fb.done,
        });
        let loss = if replay.len() >= cfg.warmup() {
            Some(train_step(&mut model, &target, &mut replay, cfg, rng)?)
        } else {
            None
        };
        if (step + 1) % cfg.target_update == 0 {
            target = model.clone();
        }
        let mut logged = [0usize; 5];
        for (slot, a) in logged.iter_mut().zip(&action) {
            *slot = *a;
        }
        log.push(TrainLogRow {
            step,
            epsilon,
            reward: fb.reward,
            violation: fb.violation,
            pred_dpps: fb.pred_dpps,
            meas_dpps: fb.meas_dpps,
            loss,
            action: logged,
        });
        if fb.done {
            if let Err(e) = env.reset() {
                write_log(&log)?;
                return Err(e);
            }
            state = env.state();
        } else {
            state = fb.next_state;
        }
        let done_steps = step + 1;
        if done_steps % cfg.checkpoint_every == 0 || done_steps == cfg.max_steps {
            let json = model.checkpoint_json(done_steps)?;
            save_checkpoint(out, done_steps, &json)?;
            checkpoints.push((done_steps, json));
        }
    }
    write_log(&log)?;
    Ok(TrainOutcome {
        model,
        log,
        checkpoints,
    })
}

/// Checkpoint whose trailing `window` steps of the log have the lowest
/// violation rate; ties go to the later checkpoint. Only checkpoints whose
/// window lies entirely inside the log compete; when none does, any
/// checkpoint with logged steps in its window competes, and failing that
/// the last checkpoint is returned.
pub fn select_checkpoint(log: &[TrainLogRow], checkpoint_steps: &[usize], window: usize) -> Result<usize> {
    if checkpoint_steps.is_empty() {
        return Err(Error::Empty("checkpoint list"));
    }
    if log.is_empty() {
        return Err(Error::Empty("training log"));
    }
    let first_step = log.iter().map(|r| r.step).min().expect("non-empty");
    let pick = |full_only: bool| {
        let mut best: Option<(usize, f64)> = None;
        for &c in checkpoint_steps {
            if full_only && c < first_step + window {
                continue;
            }
            let lo = c.saturating_sub(window);
            let rows: Vec<&TrainLogRow> = log.iter().filter(|r| r.step >= lo && r.step < c).collect();
            if rows.is_empty() {
                continue;
            }
            let rate = rows.iter().filter(|r| r.violation).count() as f64 / rows.len() as f64;
            if best.is_none_or(|(_, b)| rate <= b) {
                best = Some((c, rate));
            }
        }
        best.map(|(c, _)| c)
    };
    Ok(pick(true)
        .or_else(|| pick(false))
        .unwrap_or(*checkpoint_steps.iter().max().expect("non-empty")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::bdq::TableQ;

    /// Deterministic chain: action 1 moves right, 0 stays; reward 1 only
    /// for staying in the last state.
    struct Chain {
        s: usize,
    }

    impl ControlEnv for Chain {
        fn state(&self) -> Vec<f64> {
            vec![self.s as f64]
        }
        fn step(&mut self, a: &[usize]) -> Result<Feedback> {
            let r = if self.s == 2 && a[0] == 0 { 1.0 } else { 0.0 };
            if a[0] == 1 {
                self.s = (self.s + 1) % 3;
            }
            Ok(Feedback {
                reward: r,
                next_state: self.state(),
                done: false,
                violation: r == 0.0,
                pred_dpps: 0.0,
                meas_dpps: 0.0,
            })
        }
        fn reset(&mut self) -> Result<()> {
            self.s = 0;
            Ok(())
        }
    }

    fn small_cfg(steps: usize) -> AgentConfig {
        AgentConfig {
            gamma: 0.9,
            batch_size: 8,
            replay_capacity: 1000,
            max_steps: steps,
            checkpoint_every: 50,
            ..AgentConfig::default()
        }
    }

    #[test]
    fn epsilon_schedule_endpoints() {
        let cfg = small_cfg(200);
        assert_eq!(cfg.epsilon_at(0), 1.0);
        assert!((cfg.epsilon_at(199) - 0.02).abs() < 1e-12);
        assert!((cfg.epsilon_at(10_000) - 0.02).abs() < 1e-12);
    }

    #[test]
    fn zero_budget_keeps_only_the_initial_checkpoint() {
        let out = train_loop(
            &mut Chain { s: 0 },
            TableQ::new(3, &[2], 0.1),
            &small_cfg(0),
            &mut crate::rng::seeded(0),
            None,
        )
        .unwrap();
        assert_eq!(out.checkpoint_steps(), vec![0]);
        assert!(out.log.is_empty());
    }

    #[test]
    fn training_is_deterministic_and_logged() {
        let dir = tempfile::tempdir().unwrap();
        let run = |d: &Path| {
            train_loop(
                &mut Chain { s: 0 },
                TableQ::new(3, &[2], 0.1),
                &small_cfg(200),
                &mut crate::rng::seeded(7),
                Some(d),
            )
            .unwrap()
        };
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        fs::create_dir_all(&a).unwrap();
        fs::create_dir_all(&b).unwrap();
        let out = run(&a);
        run(&b);
        let la = fs::read(a.join("train_log.csv")).unwrap();
        assert_eq!(la, fs::read(b.join("train_log.csv")).unwrap());
        assert_eq!(out.checkpoint_steps(), vec![0, 50, 100, 150, 200]);
        assert!(a.join("ckpt_200.json").exists());
        let back = read_train_log(&a.join("train_log.csv")).unwrap();
        assert_eq!(back, out.log);
        // loss appears once the warmup is reached
        assert!(back[14].loss.is_none() && back[15].loss.is_some());
    }

    #[test]
    fn learns_the_chain() {
        let out = train_loop(
            &mut Chain { s: 0 },
            TableQ::new(3, &[2], 0.2),
            &small_cfg(3000),
            &mut crate::rng::seeded(1),
            None,
        )
        .unwrap();
        let greedy: Vec<usize> = (0..3)
            .map(|s| super::super::policy::argmax(&out.model.q_values(&[s as f64]).unwrap()[0]))
            .collect();
        assert_eq!(greedy, vec![1, 1, 0]);
    }

    fn row(step: usize, violation: bool) -> TrainLogRow {
        TrainLogRow {
            step,
            epsilon: 0.0,
            reward: 0.0,
            violation,
            pred_dpps: 0.0,
            meas_dpps: 0.0,
            loss: None,
            action: [0; 5],
        }
    }

    #[test]
    fn checkpoint_selection() {
        // violation rate falls steadily
        let log: Vec<_> = (0..50).map(|s| row(s, s % 10 < 5 - s / 10)).collect();
        assert_eq!(select_checkpoint(&log, &[0, 10, 20, 30, 40, 50], 10).unwrap(), 50);
        // a clean stretch just before checkpoint 30
        let log: Vec<_> = (0..50).map(|s| row(s, !(20..30).contains(&s))).collect();
        assert_eq!(select_checkpoint(&log, &[0, 10, 20, 30, 40, 50], 10).unwrap(), 30);
        // equal rates: the later one wins
        let log: Vec<_> = (0..50).map(|s| row(s, s % 2 == 0)).collect();
        assert_eq!(select_checkpoint(&log, &[20, 40], 10).unwrap(), 40);
        // a partial window at the start of the log does not compete
        let log: Vec<_> = (0..50).map(|s| row(s, s >= 5)).collect();
        assert_eq!(select_checkpoint(&log, &[5, 20, 40], 10).unwrap(), 40);
        assert_eq!(select_checkpoint(&log, &[5], 10).unwrap(), 5);
        assert!(select_checkpoint(&log, &[], 10).is_err());
        assert!(select_checkpoint(&[], &[0], 10).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(AgentConfig::default().validate().is_ok());
        assert!(AgentConfig { gamma: 1.0, ..Default::default() }.validate().is_err());
        assert!(AgentConfig { batch_size: 10, replay_capacity: 5, ..Default::default() }.validate().is_err());
    }
}
