//! Action selection and smoothing.

use std::collections::VecDeque;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::simenv::Action;

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Per-branch epsilon-greedy: each branch independently explores with
/// probability `epsilon`, otherwise takes its argmax.
pub fn select_action(qvals: &[Vec<f64>], epsilon: f64, rng: &mut Rng) -> Vec<usize> {
    let eps = epsilon.clamp(0.0, 1.0);
    qvals
        .iter()
        .map(|q| {
            if eps > 0.0 && rng.random::<f64>() < eps {
                rng.random_range(0..q.len())
            } else {
                argmax(q)
            }
        })
        .collect()
}

/// Per-branch mean of the recent actions, rounded half up.
pub fn smooth_action(recent: &[Action]) -> Result<Action> {
    if recent.is_empty() {
        return Err(Error::Empty("action window"));
    }
    let n = recent.len();
    let mut out = [0usize; 5];
    for (b, slot) in out.iter_mut().enumerate() {
        let sum: usize = recent.iter().map(|a| a.indices()[b]).sum();
        // floor(sum / n + 1/2) in integers
        *slot = (2 * sum + n) / (2 * n);
    }
    Ok(Action::from_indices(out))
}

/// Rolling window over the last `window` raw actions.
#[derive(Debug, Clone)]
pub struct ActionSmoother {
    window: usize,
    recent: VecDeque<Action>,
}

impl ActionSmoother {
    pub fn new(window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::Config("smoothing window must be at least 1".into()));
        }
        Ok(Self {
            window,
            recent: VecDeque::with_capacity(window),
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn push(&mut self, action: Action) -> Action {
        if self.recent.len() == self.window {
            self.recent.pop_front();
        }
        self.recent.push_back(action);
        let v: Vec<Action> = self.recent.iter().cloned().collect();
        smooth_action(&v).expect("window is non-empty")
    }
}
