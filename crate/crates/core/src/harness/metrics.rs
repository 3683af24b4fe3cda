//! Metrics computed from control logs: violation rate, tardiness, BE
//! throughput, power efficiency and drop-rate bucket counts.

use serde::{Deserialize, Serialize};

use crate::controller::ControlRecord;
use crate::error::{Error, Result};

/// Floor applied before taking logs of normalized quantities.
const GEO_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Fraction of (interval, HP) actions whose measured QoS exceeded the target.
    pub violation_pct: f64,
    /// Mean measured/target ratio over violating actions; None without violations.
    pub tardiness: Option<f64>,
    /// Geometric mean of normalized BE instructions per second.
    pub be_perf: f64,
    /// Geometric mean of BE throughput per unit of normalized power.
    pub power_eff: f64,
    pub actions: usize,
}

fn geomean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v.max(GEO_FLOOR).ln(), n + 1));
    if n == 0 {
        f64::NAN
    } else {
        (sum / n as f64).exp()
    }
}

/// Metrics over one control log.
pub fn compute_metrics(log: &[ControlRecord]) -> Result<Metrics> {
    if log.is_empty() {
        return Err(Error::Empty("control log"));
    }
    let ratios: Vec<f64> = log
        .iter()
        .filter(|r| r.violation)
        .map(|r| r.meas_dpps / r.target_dpps)
        .collect();
    let tardiness = (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64);
    // BE throughput and power are per interval, so count each step once
    let per_step: Vec<&ControlRecord> = log.iter().filter(|r| r.hp == 0).collect();
    Ok(Metrics {
        violation_pct: ratios.len() as f64 / log.len() as f64,
        tardiness,
        be_perf: geomean(per_step.iter().map(|r| r.be_ips_norm)),
        power_eff: geomean(per_step.iter().map(|r| r.be_ips_norm / r.power_norm.max(GEO_FLOOR))),
        actions: log.len(),
    })
}

/// Arithmetic mean of violation rates and geometric means of the rest.
/// Tardiness averages over the entries that have violations.
pub fn aggregate(items: &[Metrics]) -> Result<Metrics> {
    if items.is_empty() {
        return Err(Error::Empty("metrics to aggregate"));
    }
    let tard: Vec<f64> = items.iter().filter_map(|m| m.tardiness).collect();
    Ok(Metrics {
        violation_pct: items.iter().map(|m| m.violation_pct).sum::<f64>() / items.len() as f64,
        tardiness: (!tard.is_empty()).then(|| geomean(tard.into_iter())),
        be_perf: geomean(items.iter().map(|m| m.be_perf)),
        power_eff: geomean(items.iter().map(|m| m.power_eff)),
        actions: items.iter().map(|m| m.actions).sum(),
    })
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Upper bounds (inclusive) of the drop-rate buckets; the last is open.
pub const BUCKET_EDGES: [f64; 3] = [1e3, 1e4, 1e6];
pub const BUCKET_NAMES: [&str; 4] = ["0-1K", "1K-10K", "10K-1M", ">1M"];

pub fn bucket_of(dpps: f64) -> usize {
    BUCKET_EDGES.iter().position(|e| dpps <= *e).unwrap_or(BUCKET_EDGES.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BucketCounts {
    pub total: [usize; 4],
    /// Subset of `total` logged during a search phase.
    pub sampling: [usize; 4],
}

impl BucketCounts {
    pub fn add(&mut self, other: &BucketCounts) {
        for i in 0..4 {
            self.total[i] += other.total[i];
            self.sampling[i] += other.sampling[i];
        }
    }

    pub fn sum(&self) -> usize {
        self.total.iter().sum()
    }
}

pub fn bucket_counts(log: &[ControlRecord]) -> BucketCounts {
    let mut c = BucketCounts::default();
    for r in log {
        let b = bucket_of(r.meas_dpps);
        c.total[b] += 1;
        if r.sampling_phase {
            c.sampling[b] += 1;
        }
    }
    c
}
