//! Branching dueling Q-models and double-DQN targets.
//!
//! The network is a shared ReLU trunk whose linear output packs one state
//! value followed by every branch's advantages; branch `b` aggregates as
//! `Q_b(s, a) = V(s) + A_b(s, a) - mean_a A_b(s, a)`.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlcore::{Activation, AdamState, DenseNetwork};
use crate::rng::Rng;

use super::policy::argmax;

/// Q-values of one state: one vector per branch.
pub type BranchQ = Vec<Vec<f64>>;

/// A trainable per-branch action-value function. Clones serve as target
/// networks.
pub trait QModel: Clone {
    fn branch_sizes(&self) -> &[usize];

    fn input_dim(&self) -> usize;

    /// Q-values for each row of `states`.
    fn q_batch(&self, states: ArrayView2<f64>) -> Result<Vec<BranchQ>>;

    fn q_values(&self, state: &[f64]) -> Result<BranchQ> {
        let view = ArrayView2::from_shape((1, state.len()), state)
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(self.q_batch(view)?.pop().expect("one row"))
    }

    /// One weighted regression step towards `targets` on the taken actions.
    /// Returns the batch loss and each sample's mean |TD error| over
    /// branches, measured before the step.
    fn fit_batch(
        &mut self,
        states: ArrayView2<f64>,
        actions: &[Vec<usize>],
        targets: &[Vec<f64>],
        weights: &[f64],
    ) -> Result<(f64, Vec<f64>)>;

    /// Versioned JSON of the current weights.
    fn checkpoint_json(&self, step: usize) -> Result<String>;
}

fn check_batch(n: usize, actions: &[Vec<usize>], targets: &[Vec<f64>], weights: &[f64], sizes: &[usize]) -> Result<()> {
    if n == 0 {
        return Err(Error::Empty("training batch"));
    }
    if actions.len() != n || targets.len() != n || weights.len() != n {
        return Err(Error::Shape {
            expected: n,
            actual: actions.len().min(targets.len()).min(weights.len()),
        });
    }
    for (a, y) in actions.iter().zip(targets) {
        if a.len() != sizes.len() || y.len() != sizes.len() {
            return Err(Error::Shape {
                expected: sizes.len(),
                actual: a.len().min(y.len()),
            });
        }
        for (b, &i) in a.iter().enumerate() {
            if i >= sizes[b] {
                return Err(Error::OutOfRange {
                    what: "action index",
                    index: i,
                    size: sizes[b],
                });
            }
        }
    }
    Ok(())
}

/// Double-DQN targets per sample and branch:
/// `r + gamma * Q_target,b(s', argmax_a Q_online,b(s', a))`, or `r` when done.
pub fn td_targets<M: QModel>(
    online: &M,
    target: &M,
    rewards: &[f64],
    next_states: ArrayView2<f64>,
    dones: &[bool],
    gamma: f64,
) -> Result<Vec<Vec<f64>>> {
    let n = rewards.len();
    if n == 0 {
        return Err(Error::Empty("td batch"));
    }
    if next_states.nrows() != n || dones.len() != n {
        return Err(Error::Shape {
            expected: n,
            actual: next_states.nrows().min(dones.len()),
        });
    }
    let q_on = online.q_batch(next_states)?;
    let q_tg = target.q_batch(next_states)?;
    Ok((0..n)
        .map(|i| {
            q_on[i]
                .iter()
                .zip(&q_tg[i])
                .map(|(on, tg)| {
                    if dones[i] {
                        rewards[i]
                    } else {
                        rewards[i] + gamma * tg[argmax(on)]
                    }
                })
                .collect()
        })
        .collect())
}

pub const BDQ_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BdqNetwork {
    pub version: u32,
    pub branch_sizes: Vec<usize>,
    pub net: DenseNetwork,
}

impl BdqNetwork {
    /// `input -> hidden -> hidden -> 1 + sum(branch_sizes)`.
    pub fn new(input_dim: usize, hidden: usize, branch_sizes: &[usize], rng: &mut Rng) -> Result<Self> {
        if branch_sizes.is_empty() || branch_sizes.contains(&0) {
            return Err(Error::InvalidInput(format!("bad branch sizes {branch_sizes:?}")));
        }
        let out = 1 + branch_sizes.iter().sum::<usize>();
        let net = DenseNetwork::new(&[input_dim, hidden, hidden, out], Activation::Relu, rng)?;
        Ok(Self {
            version: BDQ_FORMAT_VERSION,
            branch_sizes: branch_sizes.to_vec(),
            net,
        })
    }

    pub fn from_network(net: DenseNetwork, branch_sizes: &[usize]) -> Result<Self> {
        let bdq = Self {
            version: BDQ_FORMAT_VERSION,
            branch_sizes: branch_sizes.to_vec(),
            net,
        };
        bdq.validate()?;
        Ok(bdq)
    }

    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        let out = 1 + self.branch_sizes.iter().sum::<usize>();
        if self.net.output_dim() != out {
            return Err(Error::Shape {
                expected: out,
                actual: self.net.output_dim(),
            });
        }
        Ok(())
    }

    fn aggregate(&self, raw: &[f64]) -> BranchQ {
        let v = raw[0];
        let mut off = 1;
        self.branch_sizes
            .iter()
            .map(|&n| {
                let adv = &raw[off..off + n];
                off += n;
                let mean = adv.iter().sum::<f64>() / n as f64;
                adv.iter().map(|a| v + a - mean).collect()
            })
            .collect()
    }

    /// State value and aggregated Q-values for one state.
    pub fn value_and_q(&self, state: &[f64]) -> Result<(f64, BranchQ)> {
        let raw = self.net.forward(state)?;
        Ok((raw[0], self.aggregate(&raw)))
    }

    pub fn q_batch(&self, states: ArrayView2<f64>) -> Result<Vec<BranchQ>> {
        let raw = self.net.forward_batch(states)?;
        Ok(raw.rows().into_iter().map(|r| self.aggregate(r.as_slice().expect("row-major"))).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let bdq: Self = serde_json::from_str(s)?;
        if bdq.version != BDQ_FORMAT_VERSION {
            return Err(Error::InvalidInput(format!("unsupported BDQ version {}", bdq.version)));
        }
        bdq.validate()?;
        Ok(bdq)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<T> {
    pub version: u32,
    pub step: usize,
    pub model: T,
}

impl Checkpoint<BdqNetwork> {
    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        if c.version != BDQ_FORMAT_VERSION {
            return Err(Error::InvalidInput(format!("unsupported checkpoint version {}", c.version)));
        }
        c.model.validate()?;
        Ok(c)
    }
}

/// BDQ network with its Adam optimizer.
#[derive(Debug, Clone)]
pub struct BdqModel {
    pub network: BdqNetwork,
    adam: AdamState,
    /// Global gradient-norm clip; non-positive disables it.
    grad_clip: f64,
}

impl BdqModel {
    pub fn new(network: BdqNetwork, learning_rate: f64, grad_clip: f64) -> Self {
        let adam = AdamState::new(&network.net, learning_rate);
        Self {
            network,
            adam,
            grad_clip,
        }
    }
}

impl QModel for BdqModel {
    fn branch_sizes(&self) -> &[usize] {
        &self.network.branch_sizes
    }

    fn input_dim(&self) -> usize {
        self.network.net.input_dim()
    }

    fn q_batch(&self, states: ArrayView2<f64>) -> Result<Vec<BranchQ>> {
        self.network.q_batch(states)
    }

    fn fit_batch(
        &mut self,
        states: ArrayView2<f64>,
        actions: &[Vec<usize>],
        targets: &[Vec<f64>],
        weights: &[f64],
    ) -> Result<(f64, Vec<f64>)> {
        let sizes = self.network.branch_sizes.clone();
        let n = states.nrows();
        check_batch(n, actions, targets, weights, &sizes)?;
        let trace = self.network.net.forward_trace(states)?;
        let raw = trace.output();
        let nb = sizes.len() as f64;
        let scale = 1.0 / (n as f64 * nb);
        let mut grad = Array2::<f64>::zeros(raw.raw_dim());
        let mut loss = 0.0;
        let mut td = Vec::with_capacity(n);
        for i in 0..n {
            let row = raw.row(i);
            let q = self.network.aggregate(row.as_slice().expect("row-major"));
            let mut abs_sum = 0.0;
            let mut off = 1;
            for (b, &nb_b) in sizes.iter().enumerate() {
                let a = actions[i][b];
                let delta = q[b][a] - targets[i][b];
                abs_sum += delta.abs();
                loss += weights[i] * delta * delta * scale;
                let g = 2.0 * weights[i] * delta * scale;
                // dQ_b(a)/dV = 1, dQ_b(a)/dA_b(a') = [a' = a] - 1/n_b
                grad[[i, 0]] += g;
                let share = g / nb_b as f64;
                for k in 0..nb_b {
                    grad[[i, off + k]] -= share;
                }
                grad[[i, off + a]] += g;
                off += nb_b;
            }
            td.push(abs_sum / nb);
        }
        let mut grads = self.network.net.backward_trace(&trace, grad.view())?;
        if self.grad_clip > 0.0 {
            let norm = grads
                .layers
                .iter()
                .map(|(w, b)| w.iter().chain(b.iter()).map(|v| v * v).sum::<f64>())
                .sum::<f64>()
                .sqrt();
            if norm > self.grad_clip {
                grads.scale(self.grad_clip / norm);
            }
        }
        self.adam.update(&mut self.network.net, &grads)?;
        Ok((loss, td))
    }

    fn checkpoint_json(&self, step: usize) -> Result<String> {
        Ok(serde_json::to_string(&Checkpoint {
            version: BDQ_FORMAT_VERSION,
            step,
            model: &self.network,
        })?)
    }
}

/// Tabular stand-in for the network: the first state component is the
/// state index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableQ {
    pub branch_sizes: Vec<usize>,
    /// `table[state][branch][action]`.
    pub table: Vec<BranchQ>,
    pub learning_rate: f64,
}

impl TableQ {
    pub fn new(n_states: usize, branch_sizes: &[usize], learning_rate: f64) -> Self {
        let zero: BranchQ = branch_sizes.iter().map(|&n| vec![0.0; n]).collect();
        Self {
            branch_sizes: branch_sizes.to_vec(),
            table: vec![zero; n_states],
            learning_rate,
        }
    }

    fn state_index(&self, s: f64) -> Result<usize> {
        let i = s.round();
        if i < 0.0 || i as usize >= self.table.len() || (i - s).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("state {s} is not a table index")));
        }
        Ok(i as usize)
    }
}

impl QModel for TableQ {
    fn branch_sizes(&self) -> &[usize] {
        &self.branch_sizes
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn q_batch(&self, states: ArrayView2<f64>) -> Result<Vec<BranchQ>> {
        states
            .rows()
            .into_iter()
            .map(|r| Ok(self.table[self.state_index(r[0])?].clone()))
            .collect()
    }

    fn fit_batch(
        &mut self,
        states: ArrayView2<f64>,
        actions: &[Vec<usize>],
        targets: &[Vec<f64>],
        weights: &[f64],
    ) -> Result<(f64, Vec<f64>)> {
        let n = states.nrows();
        check_batch(n, actions, targets, weights, &self.branch_sizes)?;
        let nb = self.branch_sizes.len() as f64;
        let mut loss = 0.0;
        let mut td = Vec::with_capacity(n);
        for i in 0..n {
            let s = self.state_index(states[[i, 0]])?;
            let mut abs_sum = 0.0;
            for b in 0..self.branch_sizes.len() {
                let a = actions[i][b];
                let delta = self.table[s][b][a] - targets[i][b];
                abs_sum += delta.abs();
                loss += weights[i] * delta * delta / (n as f64 * nb);
                self.table[s][b][a] -= self.learning_rate * weights[i] * delta;
            }
            td.push(abs_sum / nb);
        }
        Ok((loss, td))
    }

    fn checkpoint_json(&self, step: usize) -> Result<String> {
        Ok(serde_json::to_string(&Checkpoint {
            version: BDQ_FORMAT_VERSION,
            step,
            model: self,
        })?)
    }
}
