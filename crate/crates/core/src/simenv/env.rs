use rand::Rng as _;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use super::allocation::{apply_allocation, Action, ActionSpace, ResourceAllocation};
use super::config::{BEWorkloadSpec, HPWorkloadSpec, NodeConfig};
use super::counters::CounterVector;
use super::model::{self, HpSteadyState};
use super::trace::DemandTrace;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// What one control interval looked like from the outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    /// Interval-mean drops per second, per HP.
    pub measured_qos: Vec<f64>,
    /// Worst single substep, per HP.
    pub worst_substep_qos: Vec<f64>,
    pub be_ips_norm: f64,
    pub power_norm: f64,
    pub counters: Vec<CounterVector>,
    /// Interval-mean demand in packets per second, per HP.
    pub hp_demand: Vec<f64>,
    /// Raw per-substep drop rates, per HP.
    pub substep_dpps: Vec<Vec<f64>>,
    /// Simulated seconds at the end of the interval.
    pub t_s: f64,
}

/// Result of holding one allocation over a profiling window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowProfile {
    pub worst_dpps: f64,
    pub mean_dpps: f64,
    pub mean_counters: CounterVector,
    pub substep_dpps: Vec<f64>,
}

/// Discrete-time node model. One instance is driven by one thread.
#[derive(Debug, Clone)]
pub struct SimEnv {
    node: NodeConfig,
    hp: Vec<HPWorkloadSpec>,
    be: Vec<BEWorkloadSpec>,
    traces: Vec<DemandTrace>,
    allocation: ResourceAllocation,
    substep: usize,
    rng: Rng,
}

impl SimEnv {
    pub fn new(
        node: NodeConfig,
        hp: Vec<HPWorkloadSpec>,
        be: Vec<BEWorkloadSpec>,
        seed: u64,
    ) -> Result<Self> {
        node.validate()?;
        if hp.is_empty() {
            return Err(Error::Config("at least one HP workload is required".into()));
        }
        for h in &hp {
            h.validate()?;
        }
        for b in &be {
            b.validate()?;
        }
        let mut trace_rng = rng::child(seed, 0x0074_7261_6365);
        let traces = hp
            .iter()
            .map(|h| h.demand.materialize(&mut trace_rng))
            .collect::<Result<Vec<_>>>()?;
        for t in &traces {
            t.validate()?;
        }
        let space = ActionSpace::for_node(&node);
        let max_hp = Action::max_hp(&space);
        let allocation = if hp.len() == 1 {
            apply_allocation(&node, &max_hp)?
        } else {
            // split the ways evenly, leaving at least one for the BE
            let per = (node.total_llc_ways - 1) / hp.len();
            let actions: Vec<Action> = (0..hp.len())
                .map(|_| Action { llc: per, ..max_hp })
                .collect();
            super::allocation::combine_hp_actions(&node, &actions)?
        };
        Ok(Self {
            node,
            hp,
            be,
            traces,
            allocation,
            substep: 0,
            rng: rng::child(seed, 0x7374_6570),
        })
    }

    /// Replaces the demand traces (e.g. with a shifted or file-backed trace).
    pub fn with_traces(mut self, traces: Vec<DemandTrace>) -> Result<Self> {
        if traces.len() != self.hp.len() {
            return Err(Error::Shape {
                expected: self.hp.len(),
                actual: traces.len(),
            });
        }
        for t in &traces {
            t.validate()?;
        }
        self.traces = traces;
        Ok(self)
    }

    pub fn node(&self) -> &NodeConfig {
        &self.node
    }

    pub fn hp_specs(&self) -> &[HPWorkloadSpec] {
        &self.hp
    }

    pub fn be_specs(&self) -> &[BEWorkloadSpec] {
        &self.be
    }

    pub fn action_space(&self) -> ActionSpace {
        ActionSpace::for_node(&self.node)
    }

    pub fn allocation(&self) -> &ResourceAllocation {
        &self.allocation
    }

    pub fn time_s(&self) -> f64 {
        self.substep as f64 * self.node.substep_seconds()
    }

    pub fn apply_allocation(&self, action: &Action) -> Result<ResourceAllocation> {
        apply_allocation(&self.node, action)
    }

    /// Control intervals left before any trace runs out.
    pub fn remaining_intervals(&self) -> usize {
        let dt = self.node.substep_seconds();
        let horizon = self
            .traces
            .iter()
            .map(|t| (t.duration_s() / dt).floor() as usize)
            .min()
            .unwrap_or(0);
        horizon.saturating_sub(self.substep) / self.node.substeps_per_interval
    }

    pub fn is_done(&self) -> bool {
        self.remaining_intervals() == 0
    }

    fn demand_at(&self, hp: usize, substep: usize) -> Result<f64> {
        let t = substep as f64 * self.node.substep_seconds();
        self.traces[hp].at(t).ok_or(Error::TraceExhausted(t as usize))
    }

    /// Current (trace) demand per HP.
    pub fn current_demand(&self) -> Result<Vec<f64>> {
        (0..self.hp.len())
            .map(|i| self.demand_at(i, self.substep))
            .collect()
    }

    fn steady(&self, alloc: &ResourceAllocation, hp: usize, demand: f64) -> HpSteadyState {
        model::hp_steady_state(
            &self.node,
            &self.hp[hp],
            &alloc.hp[hp],
            alloc,
            &self.be,
            demand,
        )
    }

    /// One substep for one HP: steady drop rate plus an optional lognormal
    /// transient, and the noisy counter readings that go with it.
    fn sample_substep(
        &mut self,
        alloc: &ResourceAllocation,
        hp: usize,
        st: &HpSteadyState,
    ) -> (f64, [f64; 6]) {
        let spec = &self.hp[hp];
        let mut dpps = st.base_dpps;
        let (prob, scale) = model::spike_params(&self.node, spec, alloc, st);
        if prob > 0.0 && self.rng.random::<f64>() < prob {
            let mag = LogNormal::new(scale.max(1e-12).ln(), spec.transient_spike_sigma)
                .expect("validated sigma");
            dpps += st.base_dpps * mag.sample(&mut self.rng);
        }
        dpps = dpps.min(model::MAX_DROP_FRACTION * st.demand);
        let raw = model::hp_counter_rates(&self.node, spec, &alloc.hp[hp], alloc, st, dpps);
        let sigma = self.node.counter_noise_sigma;
        let noise = LogNormal::new(0.0, sigma.max(0.0)).expect("sigma >= 0");
        let shift = self.counter_shift();
        let mut counters = [0.0; 6];
        for i in 0..6 {
            let eps = if sigma > 0.0 { noise.sample(&mut self.rng) } else { 1.0 };
            counters[i] = raw[i] * eps * shift[i];
        }
        // instructions are bounded by what the cycles could retire
        counters[0] = counters[0].min(self.node.max_ipc_bound * counters[1]);
        (dpps, counters)
    }

    fn counter_shift(&self) -> [f64; 6] {
        if self.be.is_empty() {
            return [1.0; 6];
        }
        let n = self.be.len() as f64;
        let mut out = [0.0; 6];
        for b in &self.be {
            for (o, s) in out.iter_mut().zip(b.counter_shift) {
                *o += s.ln() / n;
            }
        }
        out.map(f64::exp)
    }

    fn hp_mbw_use(&self, states: &[HpSteadyState]) -> f64 {
        states
            .iter()
            .zip(&self.allocation.hp)
            .map(|(st, share)| st.mbw_need.min(share.mbw_cap))
            .sum()
    }

    /// Applies `allocation` and advances one control interval.
    pub fn step(&mut self, allocation: &ResourceAllocation) -> Result<StepOutcome> {
        allocation.validate(&self.node)?;
        if allocation.hp.len() != self.hp.len() {
            return Err(Error::Shape {
                expected: self.hp.len(),
                actual: allocation.hp.len(),
            });
        }
        if self.is_done() {
            return Err(Error::TraceExhausted(self.time_s() as usize));
        }
        self.allocation = allocation.clone();
        let n_hp = self.hp.len();
        let steps = self.node.substeps_per_interval;
        let mut substep_dpps = vec![Vec::with_capacity(steps); n_hp];
        let mut counter_samples = vec![Vec::with_capacity(steps); n_hp];
        let mut demand_sum = vec![0.0; n_hp];
        let mut mbw_use = 0.0;
        for k in 0..steps {
            let mut states = Vec::with_capacity(n_hp);
            for hp in 0..n_hp {
                let d = self.demand_at(hp, self.substep + k)?;
                demand_sum[hp] += d;
                states.push(self.steady(allocation, hp, d));
            }
            for (hp, st) in states.iter().enumerate() {
                let (dpps, c) = self.sample_substep(allocation, hp, st);
                substep_dpps[hp].push(dpps);
                counter_samples[hp].push(CounterVector::from_array(c));
            }
            mbw_use += self.hp_mbw_use(&states);
        }
        self.substep += steps;
        let n = steps as f64;
        let worst_substep_qos: Vec<f64> = substep_dpps
            .iter()
            .map(|v| v.iter().copied().fold(0.0, f64::max))
            .collect();
        let measured_qos = substep_dpps
            .iter()
            .zip(&worst_substep_qos)
            .map(|(v, w)| (v.iter().sum::<f64>() / n).min(*w))
            .collect();
        Ok(StepOutcome {
            measured_qos,
            worst_substep_qos,
            be_ips_norm: model::be_ips_norm(&self.node, allocation, &self.be, mbw_use / n),
            power_norm: model::power_norm(&self.node, allocation),
            counters: counter_samples.iter().map(|c| CounterVector::mean(c)).collect(),
            hp_demand: demand_sum.iter().map(|d| d / n).collect(),
            substep_dpps,
            t_s: self.time_s(),
        })
    }

    /// Holds `allocation` and the given demand (default: the current trace
    /// value) fixed for `window_s` seconds of offline profiling. The clock
    /// does not advance; only the transient/noise stream is consumed.
    pub fn profile(
        &mut self,
        allocation: &ResourceAllocation,
        hp: usize,
        demand: Option<f64>,
        window_s: f64,
    ) -> Result<WindowProfile> {
        allocation.validate(&self.node)?;
        if hp >= self.hp.len() {
            return Err(Error::OutOfRange {
                what: "hp",
                index: hp,
                size: self.hp.len(),
            });
        }
        if window_s < self.node.control_interval {
            return Err(Error::InvalidInput(format!(
                "profiling window {window_s}s shorter than the control interval"
            )));
        }
        let demand = match demand {
            Some(d) => d,
            None => self.demand_at(hp, self.substep.min(self.last_substep()))?,
        };
        let n = (window_s / self.node.substep_seconds()).round().max(1.0) as usize;
        let st = self.steady(allocation, hp, demand);
        let mut substep_dpps = Vec::with_capacity(n);
        let mut counters = Vec::with_capacity(n);
        for _ in 0..n {
            let (dpps, c) = self.sample_substep(allocation, hp, &st);
            substep_dpps.push(dpps);
            counters.push(CounterVector::from_array(c));
        }
        let worst_dpps = substep_dpps.iter().copied().fold(0.0, f64::max);
        // summation rounding can push a flat window's mean one ulp past its max
        let mean_dpps = (substep_dpps.iter().sum::<f64>() / n as f64).min(worst_dpps);
        Ok(WindowProfile {
            worst_dpps,
            mean_dpps,
            mean_counters: CounterVector::mean(&counters),
            substep_dpps,
        })
    }

    fn last_substep(&self) -> usize {
        let dt = self.node.substep_seconds();
        self.traces
            .iter()
            .map(|t| (t.duration_s() / dt).floor() as usize)
            .min()
            .unwrap_or(1)
            .saturating_sub(1)
    }

    /// Worst per-second drop rate over the window for HP 0.
    pub fn worst_case_qos(&mut self, allocation: &ResourceAllocation, window_s: f64) -> Result<f64> {
        Ok(self.profile(allocation, 0, None, window_s)?.worst_dpps)
    }

    /// Noise-free steady drop rate for HP `hp` at the given demand.
    pub fn steady_dpps(&self, allocation: &ResourceAllocation, hp: usize, demand: f64) -> f64 {
        self.steady(allocation, hp, demand).base_dpps
    }

    pub fn steady_state(&self, allocation: &ResourceAllocation, hp: usize, demand: f64) -> HpSteadyState {
        self.steady(allocation, hp, demand)
    }
}
