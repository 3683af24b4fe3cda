//! Proportional prioritized replay over a ring buffer and a sum tree.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    /// One index per action branch.
    pub action: Vec<usize>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Binary sum tree over `capacity` leaves.
#[derive(Debug, Clone)]
struct SumTree {
    capacity: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    fn new(capacity: usize) -> Self {
        Self {
            capacity,
            nodes: vec![0.0; 2 * capacity],
        }
    }

    fn total(&self) -> f64 {
        self.nodes[1]
    }

    fn get(&self, i: usize) -> f64 {
        self.nodes[self.capacity + i]
    }

    fn set(&mut self, i: usize, value: f64) {
        let mut k = self.capacity + i;
        self.nodes[k] = value;
        while k > 1 {
            k /= 2;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    /// Leaf whose cumulative range contains `mass`, for `mass` in [0, total).
    fn find(&self, mut mass: f64, len: usize) -> usize {
        let mut k = 1;
        while k < self.capacity {
            let left = self.nodes[2 * k];
            if mass < left {
                k *= 2;
            } else {
                mass -= left;
                k = 2 * k + 1;
            }
        }
        // rounding can walk past the last filled leaf
        (k - self.capacity).min(len - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledBatch {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PrioritizedReplay {
    capacity: usize,
    alpha: f64,
    epsilon: f64,
    items: Vec<Transition>,
    next: usize,
    /// Raw priorities p_i.
    priorities: Vec<f64>,
    /// Leaves hold p_i^alpha.
    tree: SumTree,
    max_priority: f64,
}

impl PrioritizedReplay {
    pub fn new(capacity: usize, alpha: f64, epsilon: f64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        if !(alpha >= 0.0 && epsilon > 0.0) {
            return Err(Error::Config(format!(
                "replay alpha {alpha} must be >= 0 and epsilon {epsilon} > 0"
            )));
        }
        let leaves = capacity.next_power_of_two();
        Ok(Self {
            capacity,
            alpha,
            epsilon,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
            priorities: vec![0.0; capacity],
            tree: SumTree::new(leaves),
            max_priority: 1.0,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    pub fn priority(&self, i: usize) -> f64 {
        self.priorities[i]
    }

    /// Sampling probability of item `i`.
    pub fn probability(&self, i: usize) -> f64 {
        self.tree.get(i) / self.tree.total()
    }

    fn set_priority(&mut self, i: usize, p: f64) {
        self.priorities[i] = p;
        self.tree.set(i, p.powf(self.alpha));
        self.max_priority = self.max_priority.max(p);
    }

    /// New transitions enter at the largest priority seen so far and
    /// overwrite the oldest once full.
    pub fn push(&mut self, t: Transition) {
        let i = self.next;
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[i] = t;
        }
        self.set_priority(i, self.max_priority);
        self.next = (i + 1) % self.capacity;
    }

    /// Inserts with an explicit priority.
    pub fn push_with_priority(&mut self, t: Transition, priority: f64) -> Result<()> {
        if !(priority > 0.0 && priority.is_finite()) {
            return Err(Error::InvalidInput(format!("priority {priority} must be positive")));
        }
        let i = self.next;
        self.push(t);
        self.set_priority(i, priority);
        Ok(())
    }

    /// Draws `batch` indices with replacement, P(i) = p_i^a / sum p^a, with
    /// importance weights (N P(i))^-beta scaled so the batch maximum is 1.
    pub fn sample(&self, batch: usize, beta: f64, rng: &mut Rng) -> Result<SampledBatch> {
        if self.items.is_empty() {
            return Err(Error::Empty("replay buffer"));
        }
        let total = self.tree.total();
        let n = self.items.len() as f64;
        let mut indices = Vec::with_capacity(batch);
        let mut probabilities = Vec::with_capacity(batch);
        let mut weights = Vec::with_capacity(batch);
        for _ in 0..batch {
            let mass = rng.random::<f64>() * total;
            let i = self.tree.find(mass, self.items.len());
            let p = self.tree.get(i) / total;
            indices.push(i);
            probabilities.push(p);
            weights.push((n * p).powf(-beta));
        }
        let max_w = weights.iter().copied().fold(0.0, f64::max);
        if max_w > 0.0 {
            for w in &mut weights {
                *w /= max_w;
            }
        }
        Ok(SampledBatch {
            indices,
            weights,
            probabilities,
        })
    }

    /// Sets p_i = |delta_i| + epsilon.
    pub fn update(&mut self, indices: &[usize], td_errors: &[f64]) -> Result<()> {
        if indices.len() != td_errors.len() {
            return Err(Error::Shape {
                expected: indices.len(),
                actual: td_errors.len(),
            });
        }
        for (&i, &d) in indices.iter().zip(td_errors) {
            if i >= self.items.len() {
                return Err(Error::OutOfRange {
                    what: "replay index",
                    index: i,
                    size: self.items.len(),
                });
            }
            if !d.is_finite() {
                return Err(Error::NonFinite("td error".into()));
            }
        }
        for (&i, &d) in indices.iter().zip(td_errors) {
            self.set_priority(i, d.abs() + self.epsilon);
        }
        Ok(())
    }
}
