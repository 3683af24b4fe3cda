use serde::{Deserialize, Serialize};

use super::trace::DemandSource;
use crate::error::{Error, Result};

/// Allocatable resources of one node plus the simulation clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NodeConfig {
    pub total_llc_ways: usize,
    /// MBW caps in percent.
    pub mbw_levels: Vec<f64>,
    /// Core frequency steps in GHz.
    pub core_freq_levels: Vec<f64>,
    /// Uncore frequency steps in GHz.
    pub uncore_freq_levels: Vec<f64>,
    /// Seconds between controller decisions.
    pub control_interval: f64,
    pub substeps_per_interval: usize,
    /// Clamp every workload to at least two LLC ways.
    pub min_two_llc_ways: bool,
    pub max_ipc_bound: f64,
    /// Sigma of the multiplicative lognormal counter noise.
    pub counter_noise_sigma: f64,
}

impl Default for NodeConfig {
    fn default() -> Self {
        Self {
            total_llc_ways: 8,
            mbw_levels: (1..=10).map(|i| f64::from(i) * 10.0).collect(),
            core_freq_levels: vec![1.0, 1.4, 1.8, 2.0, 2.2, 2.5, 2.7],
            uncore_freq_levels: vec![1.6, 1.8, 2.0, 2.2, 2.4],
            control_interval: 3.0,
            substeps_per_interval: 3,
            min_two_llc_ways: false,
            max_ipc_bound: 4.0,
            counter_noise_sigma: 0.05,
        }
    }
}

fn strictly_increasing(levels: &[f64]) -> bool {
    !levels.is_empty()
        && levels.iter().all(|v| v.is_finite() && *v > 0.0)
        && levels.windows(2).all(|w| w[0] < w[1])
}

impl NodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_llc_ways < 2 {
            return Err(Error::Config(format!(
                "total_llc_ways must be >= 2, got {}",
                self.total_llc_ways
            )));
        }
        for (name, levels) in [
            ("mbw_levels", &self.mbw_levels),
            ("core_freq_levels", &self.core_freq_levels),
            ("uncore_freq_levels", &self.uncore_freq_levels),
        ] {
            if !strictly_increasing(levels) {
                return Err(Error::Config(format!(
                    "{name} must be non-empty, positive and strictly increasing"
                )));
            }
        }
        if self.substeps_per_interval == 0 {
            return Err(Error::Config("substeps_per_interval must be >= 1".into()));
        }
        if !(self.control_interval > 0.0) {
            return Err(Error::Config("control_interval must be positive".into()));
        }
        if !(self.max_ipc_bound > 0.0) {
            return Err(Error::Config("max_ipc_bound must be positive".into()));
        }
        if !(self.counter_noise_sigma >= 0.0) {
            return Err(Error::Config("counter_noise_sigma must be >= 0".into()));
        }
        Ok(())
    }

    /// Simulated seconds per substep.
    pub fn substep_seconds(&self) -> f64 {
        self.control_interval / self.substeps_per_interval as f64
    }

    pub fn max_core_freq(&self) -> f64 {
        *self.core_freq_levels.last().expect("validated")
    }

    pub fn max_uncore_freq(&self) -> f64 {
        *self.uncore_freq_levels.last().expect("validated")
    }
}

/// A high-priority networking workload with a drops-per-second QoS target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HPWorkloadSpec {
    pub name: String,
    /// Maximum acceptable drops per second.
    pub qos_target: f64,
    pub demand: DemandSource,
    /// Packets per second at the top of the demand range.
    pub peak_demand: f64,
    /// Packets per second the HP could sustain with every resource at maximum.
    pub base_capacity: f64,
    pub cores: usize,
    pub instructions_per_packet: f64,
    /// Share of node memory bandwidth (percent) needed at peak demand.
    pub mbw_need_at_peak: f64,
    /// Bandwidth headroom ratio below which the drop rate falls off the cliff.
    pub cliff_mbw_knee: f64,
    /// LLC ways below which bandwidth need grows steeply.
    pub cliff_llc_knee: f64,
    pub cliff_gain: f64,
    pub transient_spike_prob: f64,
    /// Median spike size as a multiple of the steady drop rate.
    pub transient_spike_scale: f64,
    pub transient_spike_sigma: f64,
}

impl Default for HPWorkloadSpec {
    fn default() -> Self {
        Self {
            name: "vbng".into(),
            qos_target: 1000.0,
            demand: DemandSource::default(),
            peak_demand: 10.0e6,
            base_capacity: 16.0e6,
            cores: 4,
            instructions_per_packet: 1500.0,
            mbw_need_at_peak: 40.0,
            cliff_mbw_knee: 1.0,
            cliff_llc_knee: 2.0,
            cliff_gain: 30.0,
            transient_spike_prob: 0.05,
            transient_spike_scale: 8.0,
            transient_spike_sigma: 0.7,
        }
    }
}

impl HPWorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("HP workload {}: {msg}", self.name)));
        if !(self.qos_target > 0.0) {
            return bad("qos_target must be > 0");
        }
        if !(0.0..=1.0).contains(&self.transient_spike_prob) {
            return bad("transient_spike_prob must lie in [0, 1]");
        }
        if !(self.cliff_gain >= 1.0) {
            return bad("cliff_gain must be >= 1");
        }
        if !(self.peak_demand > 0.0 && self.base_capacity > 0.0) {
            return bad("peak_demand and base_capacity must be > 0");
        }
        if self.cores == 0 {
            return bad("cores must be >= 1");
        }
        if !(self.transient_spike_scale >= 0.0 && self.transient_spike_sigma >= 0.0) {
            return bad("spike scale and sigma must be >= 0");
        }
        self.demand.validate()
    }
}

/// A best-effort workload described by its response to each resource.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BEWorkloadSpec {
    pub name: String,
    pub llc_sensitivity: f64,
    pub mbw_sensitivity: f64,
    pub freq_sensitivity: f64,
    /// Fraction of its MBW cap the BE actually consumes.
    pub mbw_aggressiveness: f64,
    /// Multiplicative offset applied to each HP counter while this BE runs.
    pub counter_shift: [f64; 6],
}

impl Default for BEWorkloadSpec {
    fn default() -> Self {
        Self {
            name: "be".into(),
            llc_sensitivity: 0.5,
            mbw_sensitivity: 0.5,
            freq_sensitivity: 0.5,
            mbw_aggressiveness: 0.5,
            counter_shift: [1.0; 6],
        }
    }
}

impl BEWorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        let sens = [
            self.llc_sensitivity,
            self.mbw_sensitivity,
            self.freq_sensitivity,
        ];
        if sens.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::Config(format!(
                "BE workload {}: sensitivities must be >= 0",
                self.name
            )));
        }
        if !(self.mbw_aggressiveness > 0.0 && self.mbw_aggressiveness <= 1.0) {
            return Err(Error::Config(format!(
                "BE workload {}: mbw_aggressiveness must lie in (0, 1]",
                self.name
            )));
        }
        if self.counter_shift.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::Config(format!(
                "BE workload {}: counter_shift entries must be positive",
                self.name
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_node_is_valid_and_matches_platform() {
        let node = NodeConfig::default();
        node.validate().unwrap();
        assert_eq!(node.mbw_levels.len(), 10);
        assert_eq!(node.core_freq_levels.len(), 7);
        assert_eq!(node.uncore_freq_levels.len(), 5);
        assert_eq!(node.substep_seconds(), 1.0);
    }

    #[test]
    fn rejects_malformed_levels() {
        let mut node = NodeConfig::default();
        node.core_freq_levels = vec![1.0, 1.0, 2.0];
        assert!(node.validate().is_err());
        let mut node = NodeConfig::default();
        node.total_llc_ways = 1;
        assert!(node.validate().is_err());
        let mut node = NodeConfig::default();
        node.substeps_per_interval = 0;
        assert!(node.validate().is_err());
    }

    #[test]
    fn rejects_bad_workloads() {
        let hp = HPWorkloadSpec {
            transient_spike_prob: 1.5,
            ..Default::default()
        };
        assert!(hp.validate().is_err());
        let be = BEWorkloadSpec {
            mbw_aggressiveness: 0.0,
            ..Default::default()
        };
        assert!(be.validate().is_err());
    }
}
