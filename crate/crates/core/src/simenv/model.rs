//! Steady-state contention model: how an allocation and a demand level turn
//! into a drop rate, counter rates, BE progress and power.
//!
//! Drop rate is logistic in the HP load ratio (demand over effective
//! capacity) and gets multiplied by the cliff gain once memory-bandwidth
//! headroom falls below the knee. Everything here is noise free; transients
//! and counter noise are layered on by the environment.

use super::allocation::{HpShare, ResourceAllocation};
use super::config::{BEWorkloadSpec, HPWorkloadSpec, NodeConfig};

/// Smallest loss fraction, even on an idle node.
const LOSS_FLOOR: f64 = 2.0e-7;
/// Loss fraction reached deep in overload.
const LOSS_MAX: f64 = 0.1;
/// Load ratio at the logistic midpoint.
const LOAD_MIDPOINT: f64 = 1.0;
const LOAD_WIDTH: f64 = 0.035;
/// Some traffic is always served, even deep in overload.
pub const MAX_DROP_FRACTION: f64 = 0.95;

const LLC_DECAY_WAYS: f64 = 1.8;
const CORE_FREQ_EXP: f64 = 0.7;
const UNCORE_FREQ_EXP: f64 = 0.3;

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// LLC starvation in (0, 1]: 1 with no ways, decaying as ways are added.
pub fn llc_starvation(ways: usize) -> f64 {
    (-(ways as f64) / LLC_DECAY_WAYS).exp()
}

/// Multiplier on HP memory-bandwidth need from cache misses.
pub fn mbw_need_multiplier(node: &NodeConfig, hp: &HPWorkloadSpec, ways: usize) -> f64 {
    let w = ways as f64;
    let top = (node.total_llc_ways - 1) as f64;
    1.0 + 0.06 * (top - w).max(0.0) + 0.4 * (hp.cliff_llc_knee - w).max(0.0)
}

/// Total MBW (percent of node bandwidth) the BE workloads draw.
pub fn be_mbw_pressure(alloc: &ResourceAllocation, be: &[BEWorkloadSpec]) -> f64 {
    be.iter()
        .map(|b| alloc.be_mbw_cap * b.mbw_aggressiveness)
        .sum::<f64>()
        .min(100.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HpSteadyState {
    pub demand: f64,
    pub capacity: f64,
    pub load_ratio: f64,
    /// Available over needed memory bandwidth for the HP.
    pub mbw_headroom: f64,
    pub mbw_need: f64,
    pub be_pressure: f64,
    pub on_cliff: bool,
    /// LLC starvation in (0, 1] for the HP's ways.
    pub starvation: f64,
    /// Memory-bandwidth contention level in (0, 1).
    pub mbw_contention: f64,
    /// Drop rate without transients.
    pub base_dpps: f64,
}

pub fn hp_steady_state(
    node: &NodeConfig,
    hp: &HPWorkloadSpec,
    share: &HpShare,
    alloc: &ResourceAllocation,
    be: &[BEWorkloadSpec],
    demand: f64,
) -> HpSteadyState {
    let llc_factor = 1.0 - 0.45 * llc_starvation(share.llc_ways);
    let freq_factor = (share.core_freq / node.max_core_freq()).powf(CORE_FREQ_EXP)
        * (alloc.uncore_freq / node.max_uncore_freq()).powf(UNCORE_FREQ_EXP);
    let be_pressure = be_mbw_pressure(alloc, be);
    let mbw_need = hp.mbw_need_at_peak
        * (demand / hp.peak_demand)
        * mbw_need_multiplier(node, hp, share.llc_ways);
    let available = share.mbw_cap.min((100.0 - be_pressure).max(5.0));
    let mbw_headroom = if mbw_need > 1e-9 {
        available / mbw_need
    } else {
        f64::INFINITY
    };
    let mbw_factor = mbw_headroom.min(1.0).sqrt();
    let capacity = hp.base_capacity * llc_factor * freq_factor * mbw_factor;
    let load_ratio = demand / capacity;
    let on_cliff = demand > 0.0 && mbw_headroom < hp.cliff_mbw_knee;
    let loss = LOSS_FLOOR + LOSS_MAX * logistic((load_ratio - LOAD_MIDPOINT) / LOAD_WIDTH);
    let gain = if on_cliff { hp.cliff_gain } else { 1.0 };
    let base_dpps = (demand * loss * gain).min(MAX_DROP_FRACTION * demand);
    HpSteadyState {
        demand,
        capacity,
        load_ratio,
        mbw_headroom,
        mbw_need,
        be_pressure,
        on_cliff,
        starvation: llc_starvation(share.llc_ways),
        mbw_contention: logistic((mbw_need + be_pressure - 100.0) / 12.0),
        base_dpps,
    }
}

/// Per-substep spike probability and median spike multiple. Interference
/// drives transients: MBW contention makes them more frequent, LLC
/// starvation and a slow uncore make them larger.
pub fn spike_params(node: &NodeConfig, hp: &HPWorkloadSpec, alloc: &ResourceAllocation, st: &HpSteadyState) -> (f64, f64) {
    let prob = (hp.transient_spike_prob * (0.5 + 1.5 * st.mbw_contention)).min(1.0);
    let scale = hp.transient_spike_scale
        * (1.0 + st.starvation)
        * (node.max_uncore_freq() / alloc.uncore_freq).sqrt();
    (prob, scale)
}

/// Noise-free counter rates for one HP given its steady state and the
/// drop rate it actually experienced this substep.
pub fn hp_counter_rates(
    node: &NodeConfig,
    hp: &HPWorkloadSpec,
    share: &HpShare,
    alloc: &ResourceAllocation,
    st: &HpSteadyState,
    dpps: f64,
) -> [f64; 6] {
    let served = (st.demand - dpps).max(0.0);
    let util = st.load_ratio.clamp(0.02, 1.0);
    let ref_cycles = hp.cores as f64 * node.max_core_freq() * 1e9;
    // poll-mode packet processing keeps its cores busy whatever the load
    let cycles = hp.cores as f64 * share.core_freq * 1e9;
    let instructions = (served * hp.instructions_per_packet).min(node.max_ipc_bound * cycles);
    let activity = 0.5 + 0.5 * util;
    let frontend = ref_cycles * (0.01 + 0.2 * st.starvation) * activity;
    let code_reads = 2e7 * (node.max_uncore_freq() / alloc.uncore_freq).powi(2) * (1.0 + st.starvation).sqrt() * activity;
    let offcore = served * 3.0 * mbw_need_multiplier(node, hp, share.llc_ways);
    // queue occupancy never drains fully under background traffic
    let buffer_full = ref_cycles * (0.01 + 0.4 * st.mbw_contention);
    [instructions, cycles, frontend, code_reads, offcore, buffer_full]
}

/// BE progress in [0, 1]: product of saturating responses to each resource,
/// averaged over the co-running BE workloads.
pub fn be_ips_norm(
    node: &NodeConfig,
    alloc: &ResourceAllocation,
    be: &[BEWorkloadSpec],
    hp_mbw_use: f64,
) -> f64 {
    if be.is_empty() {
        return 0.0;
    }
    let ways = alloc.be_llc_ways as f64 / node.total_llc_ways as f64;
    let mbw = alloc.be_mbw_cap / 100.0;
    let hp_use = (hp_mbw_use / 100.0).clamp(0.0, 1.0);
    let core = alloc.be_core_freq / node.max_core_freq();
    let uncore = alloc.uncore_freq / node.max_uncore_freq();
    let total: f64 = be
        .iter()
        .map(|b| {
            let r_llc = ways.powf(0.6 * b.llc_sensitivity);
            let r_mbw = mbw.powf(0.6 * b.mbw_sensitivity)
                * (1.0 - 0.3 * hp_use).powf(b.mbw_sensitivity);
            let r_freq =
                core.powf(0.8 * b.freq_sensitivity) * uncore.powf(0.2 * b.freq_sensitivity);
            r_llc * r_mbw * r_freq
        })
        .sum();
    (total / be.len() as f64).clamp(0.0, 1.0)
}

/// Cubic frequency power law, normalized to [0, 1].
pub fn power_norm(node: &NodeConfig, alloc: &ResourceAllocation) -> f64 {
    const CORE_WEIGHT: f64 = 0.7;
    const UNCORE_WEIGHT: f64 = 0.3;
    let f_max = node.max_core_freq();
    let u_max = node.max_uncore_freq();
    let hp_f3 = alloc.hp.iter().map(|s| s.core_freq.powi(3)).sum::<f64>() / alloc.hp.len() as f64;
    let core = (hp_f3 + alloc.be_core_freq.powi(3)) / (2.0 * f_max.powi(3));
    let uncore = alloc.uncore_freq.powi(3) / u_max.powi(3);
    (CORE_WEIGHT * core + UNCORE_WEIGHT * uncore).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simenv::allocation::{apply_allocation, Action};

    #[test]
    fn full_power_is_one() {
        let node = NodeConfig::default();
        let a = apply_allocation(&node, &Action::from_indices([3, 3, 6, 6, 4])).unwrap();
        assert!((power_norm(&node, &a) - 1.0).abs() < 1e-12);
        let lo = apply_allocation(&node, &Action::from_indices([3, 3, 0, 0, 0])).unwrap();
        assert!(power_norm(&node, &lo) < 0.3);
    }

    #[test]
    fn be_progress_bounded() {
        let node = NodeConfig::default();
        let be = [BEWorkloadSpec::default()];
        for a in crate::simenv::allocation::ActionSpace::for_node(&node).enumerate() {
            let alloc = apply_allocation(&node, &a).unwrap();
            let v = be_ips_norm(&node, &alloc, &be, 30.0);
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn idle_demand_drops_nothing() {
        let node = NodeConfig::default();
        let hp = HPWorkloadSpec::default();
        let a = apply_allocation(&node, &Action::from_indices([0, 0, 0, 0, 0])).unwrap();
        let st = hp_steady_state(&node, &hp, &a.hp[0], &a, &[BEWorkloadSpec::default()], 0.0);
        assert_eq!(st.base_dpps, 0.0);
        assert!(!st.on_cliff);
    }
}
