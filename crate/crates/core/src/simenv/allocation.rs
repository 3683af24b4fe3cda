//! Branched allocation actions and the concrete resource split they imply.
//!
//! The controller only chooses HP settings. BE settings follow from them:
//! remaining LLC ways go to the BE, the BE MBW cap mirrors the HP cap
//! (`be = 110 - hp` percent on the default 10..100 grid), BE core frequency
//! is its own branch and the uncore frequency is node-wide.

use serde::{Deserialize, Serialize};

use super::config::NodeConfig;
use crate::error::{Error, Result};

pub const BRANCH_NAMES: [&str; 5] = ["llc", "mbw", "hpcf", "becf", "ucf"];

/// Per-branch option counts for one HP workload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpace {
    pub sizes: [usize; 5],
}

impl ActionSpace {
    pub fn for_node(node: &NodeConfig) -> Self {
        Self {
            sizes: [
                node.total_llc_ways,
                node.mbw_levels.len(),
                node.core_freq_levels.len(),
                node.core_freq_levels.len(),
                node.uncore_freq_levels.len(),
            ],
        }
    }

    pub fn total_actions(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn contains(&self, action: &Action) -> bool {
        action
            .indices()
            .iter()
            .zip(self.sizes)
            .all(|(i, n)| *i < n)
    }

    pub fn check(&self, action: &Action) -> Result<()> {
        for ((idx, size), what) in action.indices().iter().zip(self.sizes).zip(BRANCH_NAMES) {
            if *idx >= size {
                return Err(Error::OutOfRange {
                    what,
                    index: *idx,
                    size,
                });
            }
        }
        Ok(())
    }

    /// Every action in lexicographic order.
    pub fn enumerate(&self) -> Vec<Action> {
        let mut out = Vec::with_capacity(self.total_actions());
        let [a, b, c, d, e] = self.sizes;
        for llc in 0..a {
            for mbw in 0..b {
                for hpcf in 0..c {
                    for becf in 0..d {
                        for ucf in 0..e {
                            out.push(Action {
                                llc,
                                mbw,
                                hpcf,
                                becf,
                                ucf,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Indices into each branch's level list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Action {
    pub llc: usize,
    pub mbw: usize,
    pub hpcf: usize,
    pub becf: usize,
    pub ucf: usize,
}

impl Action {
    pub fn indices(&self) -> [usize; 5] {
        [self.llc, self.mbw, self.hpcf, self.becf, self.ucf]
    }

    pub fn from_indices(idx: [usize; 5]) -> Self {
        Self {
            llc: idx[0],
            mbw: idx[1],
            hpcf: idx[2],
            becf: idx[3],
            ucf: idx[4],
        }
    }

    /// Everything to the HP.
    pub fn max_hp(space: &ActionSpace) -> Self {
        Self::from_indices(space.sizes.map(|n| n - 1))
    }
}

/// Resources held by one HP workload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HpShare {
    pub llc_ways: usize,
    pub mbw_cap: f64,
    pub core_freq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceAllocation {
    pub hp: Vec<HpShare>,
    pub be_llc_ways: usize,
    pub be_mbw_cap: f64,
    pub be_core_freq: f64,
    pub uncore_freq: f64,
}

impl ResourceAllocation {
    pub fn hp_llc_ways(&self) -> usize {
        self.hp.iter().map(|s| s.llc_ways).sum()
    }

    /// Checks partition conservation and level membership.
    pub fn validate(&self, node: &NodeConfig) -> Result<()> {
        if self.hp.is_empty() {
            return Err(Error::InvalidInput("allocation without HP shares".into()));
        }
        let used = self.hp_llc_ways() + self.be_llc_ways;
        if used != node.total_llc_ways {
            return Err(Error::InvalidInput(format!(
                "LLC partition broken: {} HP + {} BE != {} ways",
                self.hp_llc_ways(),
                self.be_llc_ways,
                node.total_llc_ways
            )));
        }
        let member = |levels: &[f64], v: f64, what: &str| -> Result<()> {
            if levels.contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("{what} {v} is not a configured level")))
            }
        };
        for s in &self.hp {
            member(&node.mbw_levels, s.mbw_cap, "HP MBW cap")?;
            member(&node.core_freq_levels, s.core_freq, "HP core frequency")?;
        }
        member(&node.mbw_levels, self.be_mbw_cap, "BE MBW cap")?;
        member(&node.core_freq_levels, self.be_core_freq, "BE core frequency")?;
        member(&node.uncore_freq_levels, self.uncore_freq, "uncore frequency")?;
        let min_mbw = self
            .hp
            .iter()
            .map(|s| level_index(&node.mbw_levels, s.mbw_cap))
            .min()
            .flatten()
            .expect("non-empty, validated");
        let expected = be_mbw_cap_for(node, min_mbw);
        if self.be_mbw_cap != expected {
            return Err(Error::InvalidInput(format!(
                "BE MBW cap {} does not follow the overlap rule (expected {expected})",
                self.be_mbw_cap
            )));
        }
        Ok(())
    }
}

fn level_index(levels: &[f64], v: f64) -> Option<usize> {
    levels.iter().position(|l| *l == v)
}

/// BE MBW cap for a given HP MBW index: the mirrored level, which equals
/// `110 - hp` percent on the default grid.
pub fn be_mbw_cap_for(node: &NodeConfig, hp_mbw_index: usize) -> f64 {
    let n = node.mbw_levels.len();
    node.mbw_levels[n - 1 - hp_mbw_index.min(n - 1)]
}

fn clamp_llc(node: &NodeConfig, ways: usize) -> usize {
    if node.min_two_llc_ways && node.total_llc_ways >= 4 {
        ways.clamp(2, node.total_llc_ways - 2)
    } else {
        ways
    }
}

/// Concrete allocation for a single-HP node.
pub fn apply_allocation(node: &NodeConfig, action: &Action) -> Result<ResourceAllocation> {
    combine_hp_actions(node, std::slice::from_ref(action))
}

/// Node-level allocation from one action per HP workload. Each HP keeps its
/// own LLC, MBW and core frequency; the BE receives the leftover ways, the
/// MBW mirror of the lowest HP MBW setting and the lowest BE frequency any HP
/// chose; uncore runs at the highest requested setting.
pub fn combine_hp_actions(node: &NodeConfig, actions: &[Action]) -> Result<ResourceAllocation> {
    if actions.is_empty() {
        return Err(Error::Empty("HP action list"));
    }
    let space = ActionSpace::for_node(node);
    for a in actions {
        space.check(a)?;
    }
    let hp: Vec<HpShare> = actions
        .iter()
        .map(|a| HpShare {
            llc_ways: clamp_llc(node, a.llc),
            mbw_cap: node.mbw_levels[a.mbw],
            core_freq: node.core_freq_levels[a.hpcf],
        })
        .collect();
    let requested: usize = hp.iter().map(|s| s.llc_ways).sum();
    if requested > node.total_llc_ways {
        return Err(Error::LlcOversubscribed {
            requested,
            total: node.total_llc_ways,
        });
    }
    let min_mbw = actions.iter().map(|a| a.mbw).min().expect("non-empty");
    let min_becf = actions.iter().map(|a| a.becf).min().expect("non-empty");
    let max_ucf = actions.iter().map(|a| a.ucf).max().expect("non-empty");
    Ok(ResourceAllocation {
        hp,
        be_llc_ways: node.total_llc_ways - requested,
        be_mbw_cap: be_mbw_cap_for(node, min_mbw),
        be_core_freq: node.core_freq_levels[min_becf],
        uncore_freq: node.uncore_freq_levels[max_ucf],
    })
}
