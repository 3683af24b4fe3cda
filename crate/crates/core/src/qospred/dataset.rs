//! Offline profiling data: random allocations held for a window, labelled
//! with the worst per-second drop rate seen in that window.

use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::simenv::{Action, BEWorkloadSpec, CounterVector, HPWorkloadSpec, NodeConfig, SimEnv};

pub const ACTION_COLUMNS: [&str; 5] = ["llc", "mbw", "hpcf", "becf", "ucf"];

/// A set of BE workloads co-scheduled with the HP workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mix {
    pub name: String,
    pub be: Vec<BEWorkloadSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollectConfig {
    pub samples_per_mix: usize,
    pub window_s: f64,
    /// Demand is drawn uniformly from `[lo, hi] x peak_demand`.
    pub demand_fraction: (f64, f64),
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self {
            samples_per_mix: 500,
            window_s: 100.0,
            demand_fraction: (0.15, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfilingRow {
    pub mix: usize,
    pub demand_pps: f64,
    pub counters: CounterVector,
    pub action: Action,
    pub label_dpps: f64,
    pub mean_dpps: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProfilingDataset {
    pub rows: Vec<ProfilingRow>,
}

impl ProfilingDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Distinct mix ids in ascending order.
    pub fn mixes(&self) -> Vec<usize> {
        let mut m: Vec<usize> = self.rows.iter().map(|r| r.mix).collect();
        m.sort_unstable();
        m.dedup();
        m
    }

    pub fn filter(&self, keep: impl Fn(&ProfilingRow) -> bool) -> Self {
        Self {
            rows: self.rows.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    pub fn labels(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.label_dpps).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["mix", "demand_pps"];
        header.extend(CounterVector::NAMES);
        header.extend(ACTION_COLUMNS);
        header.extend(["label_dpps", "mean_dpps"]);
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.mix.to_string(), r.demand_pps.to_string()];
            rec.extend(r.counters.to_array().iter().map(|v| v.to_string()));
            rec.extend(r.action.indices().iter().map(|v| v.to_string()));
            rec.push(r.label_dpps.to_string());
            rec.push(r.mean_dpps.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::file(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("bad number {s:?} in {}", path.display())))
        };
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() < 15 {
                return Err(Error::Shape {
                    expected: 15,
                    actual: rec.len(),
                });
            }
            let mut counters = [0.0; 6];
            for (i, c) in counters.iter_mut().enumerate() {
                *c = parse(&rec[2 + i])?;
            }
            let mut idx = [0usize; 5];
            for (i, a) in idx.iter_mut().enumerate() {
                *a = parse(&rec[8 + i])? as usize;
            }
            let label = parse(&rec[13])?;
            rows.push(ProfilingRow {
                mix: parse(&rec[0])? as usize,
                demand_pps: parse(&rec[1])?,
                counters: CounterVector::from_array(counters),
                action: Action::from_indices(idx),
                label_dpps: label,
                mean_dpps: if rec.len() > 14 { parse(&rec[14])? } else { label },
            });
        }
        Ok(Self { rows })
    }
}

/// Profiles `samples_per_mix` random (action, demand) points per mix using
/// environments from `factory`.
pub fn collect_training_data(
    mut factory: impl FnMut(usize) -> Result<SimEnv>,
    n_mixes: usize,
    cfg: &CollectConfig,
    seed: u64,
) -> Result<ProfilingDataset> {
    if n_mixes == 0 {
        return Err(Error::Empty("mix list"));
    }
    let (lo, hi) = cfg.demand_fraction;
    if !(0.0..=hi).contains(&lo) || !hi.is_finite() {
        return Err(Error::Config(format!("bad demand fraction range {lo}..{hi}")));
    }
    let mut rows = Vec::with_capacity(n_mixes * cfg.samples_per_mix);
    for mix in 0..n_mixes {
        let mut env = factory(mix)?;
        let space = env.action_space();
        let peak = env.hp_specs()[0].peak_demand;
        let mut rng = rng::child(seed, 0x636f_6c6c ^ mix as u64);
        for _ in 0..cfg.samples_per_mix {
            let idx: [usize; 5] = std::array::from_fn(|b| rng.random_range(0..space.sizes[b]));
            let action = Action::from_indices(idx);
            let demand = peak * rng.random_range(lo..=hi);
            let alloc = env.apply_allocation(&action)?;
            let p = env.profile(&alloc, 0, Some(demand), cfg.window_s)?;
            rows.push(ProfilingRow {
                mix,
                demand_pps: demand,
                counters: p.mean_counters,
                action,
                label_dpps: p.worst_dpps,
                mean_dpps: p.mean_dpps,
            });
        }
    }
    Ok(ProfilingDataset { rows })
}

/// Collects with one single-HP environment per mix.
pub fn collect_from_mixes(
    node: &NodeConfig,
    hp: &HPWorkloadSpec,
    mixes: &[Mix],
    cfg: &CollectConfig,
    seed: u64,
) -> Result<ProfilingDataset> {
    collect_training_data(
        |m| {
            SimEnv::new(
                node.clone(),
                vec![hp.clone()],
                mixes[m].be.clone(),
                rng::derive_seed(seed, m as u64),
            )
        },
        mixes.len(),
        cfg,
        seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_mixes() -> Vec<Mix> {
        vec![
            Mix {
                name: "a".into(),
                be: vec![BEWorkloadSpec::default()],
            },
            Mix {
                name: "b".into(),
                be: vec![BEWorkloadSpec {
                    mbw_aggressiveness: 0.9,
                    ..BEWorkloadSpec::default()
                }],
            },
        ]
    }

    fn small() -> CollectConfig {
        CollectConfig {
            samples_per_mix: 10,
            ..CollectConfig::default()
        }
    }

    #[test]
    fn rows_are_tagged_by_mix() {
        let d = collect_from_mixes(
            &NodeConfig::default(),
            &HPWorkloadSpec::default(),
            &two_mixes(),
            &small(),
            1,
        )
        .unwrap();
        assert_eq!(d.len(), 20);
        assert_eq!(d.rows.iter().filter(|r| r.mix == 0).count(), 10);
        assert_eq!(d.mixes(), vec![0, 1]);
        for r in &d.rows {
            assert!(r.label_dpps >= r.mean_dpps);
        }
    }

    #[test]
    fn csv_round_trip_and_determinism() {
        let collect = || {
            collect_from_mixes(
                &NodeConfig::default(),
                &HPWorkloadSpec::default(),
                &two_mixes(),
                &small(),
                3,
            )
            .unwrap()
        };
        let d = collect();
        assert_eq!(d, collect());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        d.write_csv(&p).unwrap();
        let back = ProfilingDataset::read_csv(&p).unwrap();
        assert_eq!(back, d);
        let header = std::fs::read_to_string(&p).unwrap();
        assert!(header.starts_with("mix,demand_pps,instructions_retired,"));
    }

    #[test]
    fn empty_mix_list_is_an_error() {
        let r = collect_training_data(|_| unreachable!(), 0, &small(), 0);
        assert!(r.is_err());
    }
}
